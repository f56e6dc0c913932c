"""Core domain types for 2x2 canonical Hamiltonian systems.

A system is described by a piecewise-constant nonnegative 2x2 matrix
weight on a finite interval ``[0, ell]``.  The spectral side is a purely
atomic measure with positive masses plus the two Herglotz constants of
the Weyl function.  All types are immutable after construction and
validate their own consistency, so they can be shared freely between
threads.

JSON formats (all floats written with 17 significant digits):

* Hamiltonian: ``{"ell": f, "segments": [{"r0": f, "r1": f,
  "h": [[h11, h12], [h12, h22]]}]}``
* Measure: ``{"window": f, "b": f, "c": f,
  "atoms": [{"t": f, "mass": f}]}``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "J",
    "PSD_SLACK",
    "DET_TOL",
    "ZERO_ATOM_TOL",
    "ValidationError",
    "NumericalError",
    "ComparabilityError",
    "InvariantViolation",
    "Atom",
    "Hamiltonian",
    "SpectralMeasure",
    "TransferMatrix",
    "GridConfig",
    "ReconstructionResult",
    "normalize_trace",
    "merge_close_atoms",
    "load_hamiltonian",
    "save_hamiltonian",
    "dumps_hamiltonian",
    "loads_hamiltonian",
    "load_measure",
    "save_measure",
    "dumps_measure",
    "loads_measure",
]

#: The symplectic structure matrix of the first-order system.
J = np.array([[0.0, -1.0], [1.0, 0.0]])
J.setflags(write=False)

#: Absolute slack allowed on ``det >= 0`` for segment matrices.  Keeps
#: reconstructed Hamiltonians (which carry differentiation noise) valid.
PSD_SLACK = 1e-12

#: Relative tolerance for ``|det M - 1|`` of transfer matrices.
DET_TOL = 1e-10

#: Positions closer to the origin than this are treated as the zero atom.
ZERO_ATOM_TOL = 1e-12

_TILING_TOL = 1e-12


class ValidationError(ValueError):
    """Input data violates a structural contract (bad file, bad segment)."""


class NumericalError(RuntimeError):
    """A numerical stage failed (refinement, factorization, inversion)."""


class ComparabilityError(NumericalError):
    """The discretized quadratic form is not boundedly invertible."""


class InvariantViolation(NumericalError):
    """A computed quantity breached its tolerance."""


class Atom(NamedTuple):
    """Single atom ``mass * delta(position)`` of a spectral measure."""

    position: float
    mass: float


def _fmt(x: float) -> str:
    """Format a float with 17 significant digits (round-trip safe)."""
    s = format(float(x), ".17g")
    # json requires a leading digit form; ".17g" already provides one.
    return s


@dataclass(frozen=True)
class Hamiltonian:
    """Piecewise-constant nonnegative matrix weight on ``[0, ell]``.

    Parameters
    ----------
    edges:
        Segment boundaries, shape ``(n + 1,)``, strictly increasing,
        starting at ``0``.
    matrices:
        Segment values, shape ``(n, 2, 2)``, each symmetric with
        ``h11, h22 >= 0``, ``det >= -PSD_SLACK`` and positive trace.
    """

    edges: np.ndarray
    matrices: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float).copy()
        mats = np.asarray(self.matrices, dtype=float).copy()
        if edges.ndim != 1 or edges.size < 2:
            raise ValidationError("edges must be a 1-d array with >= 2 entries")
        if mats.shape != (edges.size - 1, 2, 2):
            raise ValidationError(
                f"matrices shape {mats.shape} does not match {edges.size - 1} segments"
            )
        if abs(edges[0]) > _TILING_TOL:
            raise ValidationError(f"first segment must start at 0, got {edges[0]!r}")
        edges[0] = 0.0
        if np.any(np.diff(edges) <= 0):
            raise ValidationError("segment boundaries must be strictly increasing")
        for i, h in enumerate(mats):
            if abs(h[0, 1] - h[1, 0]) > 0:
                raise ValidationError(f"segment {i}: matrix is not symmetric")
            if h[0, 0] < 0 or h[1, 1] < 0:
                raise ValidationError(f"segment {i}: negative diagonal entry")
            det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
            if det < -PSD_SLACK:
                raise ValidationError(
                    f"segment {i}: matrix is not positive semidefinite (det={det:.3e})"
                )
            if h[0, 0] + h[1, 1] <= 0:
                raise ValidationError(f"segment {i}: zero trace (system not regular)")
        edges.setflags(write=False)
        mats.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "matrices", mats)

    # -- constructors ---------------------------------------------------

    @classmethod
    def identity(cls, ell: float) -> "Hamiltonian":
        """The free weight: identity matrix on ``[0, ell]``."""
        if ell <= 0:
            raise ValidationError("ell must be positive")
        return cls(np.array([0.0, ell]), np.eye(2)[None, :, :])

    @classmethod
    def from_segments(
        cls, segments: Sequence[tuple[float, float, float, float, float]]
    ) -> "Hamiltonian":
        """Build from ``(r0, r1, h11, h12, h22)`` tuples tiling ``[0, ell]``."""
        if not segments:
            raise ValidationError("empty segment list")
        edges = [segments[0][0]]
        mats = []
        for i, (r0, r1, h11, h12, h22) in enumerate(segments):
            if i > 0 and abs(r0 - edges[-1]) > _TILING_TOL * (1.0 + abs(r0)):
                raise ValidationError(
                    f"segment {i}: tiling gap/overlap at r={r0!r} (previous end {edges[-1]!r})"
                )
            edges.append(r1)
            mats.append([[h11, h12], [h12, h22]])
        return cls(np.array(edges, dtype=float), np.array(mats, dtype=float))

    @classmethod
    def from_lengths(
        cls, lengths: Sequence[float], matrices: Sequence[np.ndarray]
    ) -> "Hamiltonian":
        """Build from segment lengths and their matrix values."""
        edges = np.concatenate([[0.0], np.cumsum(np.asarray(lengths, dtype=float))])
        return cls(edges, np.asarray(matrices, dtype=float))

    # -- accessors ------------------------------------------------------

    @property
    def ell(self) -> float:
        """Right endpoint of the carrier interval."""
        return float(self.edges[-1])

    @property
    def nsegments(self) -> int:
        return self.matrices.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def segments(self) -> list[tuple[float, float, float, float, float]]:
        """Segments as ``(r0, r1, h11, h12, h22)`` tuples."""
        return [
            (
                float(self.edges[i]),
                float(self.edges[i + 1]),
                float(h[0, 0]),
                float(h[0, 1]),
                float(h[1, 1]),
            )
            for i, h in enumerate(self.matrices)
        ]

    def matrix_at(self, r: float) -> np.ndarray:
        """Segment value at position ``r`` (right-continuous)."""
        if not 0.0 <= r <= self.ell * (1 + 1e-15):
            raise ValidationError(f"r={r!r} outside [0, {self.ell!r}]")
        i = min(int(np.searchsorted(self.edges, r, side="right")) - 1, self.nsegments - 1)
        return self.matrices[max(i, 0)]

    def sample(self, rs: np.ndarray) -> np.ndarray:
        """Segment values at an array of positions, shape ``(len(rs), 2, 2)``."""
        rs = np.asarray(rs, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, rs, side="right") - 1, 0, self.nsegments - 1)
        return self.matrices[idx]

    def determinants(self) -> np.ndarray:
        h = self.matrices
        return h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]

    def traces(self) -> np.ndarray:
        return self.matrices[:, 0, 0] + self.matrices[:, 1, 1]

    def is_compatible(self) -> bool:
        """No boundary segment proportional to the lower-right rank-one matrix.

        Such end segments make the boundary value problem degenerate and
        break the residue formula for the atom masses.
        """
        for h in (self.matrices[0], self.matrices[-1]):
            if h[0, 0] == 0.0 and h[0, 1] == 0.0 and h[1, 1] > 0.0:
                return False
        return True


def normalize_trace(H: Hamiltonian) -> tuple[Hamiltonian, np.ndarray]:
    """Reparametrize so the weight has trace 2 almost everywhere.

    The change of variable keeps the spectral data: each segment of
    length ``d`` and trace ``t`` becomes a segment of length ``d * t / 2``
    with matrix ``2 H / t``.  Returns the new Hamiltonian and the
    monotone time change as ``(r, new_r)`` samples at the old segment
    boundaries (piecewise linear in between).

    Idempotent, and it preserves the integral of ``sqrt(det)``.
    """
    traces = H.traces()
    if np.any(traces <= 0):
        raise ValidationError("zero-trace segment: cannot normalize")
    scale = traces / 2.0
    new_lengths = H.lengths * scale
    new_edges = np.concatenate([[0.0], np.cumsum(new_lengths)])
    new_mats = H.matrices / scale[:, None, None]
    time_change = np.column_stack([H.edges, new_edges])
    return Hamiltonian(new_edges, new_mats), time_change


@dataclass(frozen=True)
class SpectralMeasure:
    """Finite atomic spectral measure plus Herglotz constants.

    Atoms are ``masses[i] * delta(positions[i])`` with strictly
    increasing positions inside ``[-window, window]``.  Exactly one atom
    sits at the origin (within ``ZERO_ATOM_TOL``); its presence is part
    of the admissibility class.  ``herglotz_b``/``herglotz_c`` are the
    linear and additive constants of the Weyl function representation.
    """

    positions: np.ndarray
    masses: np.ndarray
    window: float
    herglotz_b: float = 0.0
    herglotz_c: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).copy()
        mass = np.asarray(self.masses, dtype=float).copy()
        if pos.ndim != 1 or pos.shape != mass.shape:
            raise ValidationError("positions and masses must be matching 1-d arrays")
        if pos.size == 0:
            raise ValidationError("measure has no atoms")
        if np.any(np.diff(pos) <= 0):
            raise ValidationError("atom positions must be strictly increasing")
        if np.any(mass <= 0):
            raise ValidationError("atom masses must be positive")
        nzero = int(np.count_nonzero(np.abs(pos) < ZERO_ATOM_TOL))
        if nzero != 1:
            raise ValidationError(
                f"measure must carry exactly one atom at the origin, found {nzero}"
            )
        if self.window <= 0:
            raise ValidationError("window must be positive")
        pos[np.abs(pos) < ZERO_ATOM_TOL] = 0.0
        pos.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", mass)

    @property
    def atoms(self) -> list[Atom]:
        return [Atom(float(t), float(m)) for t, m in zip(self.positions, self.masses)]

    @property
    def zero_index(self) -> int:
        return int(np.nonzero(self.positions == 0.0)[0][0])

    @property
    def mass_at_zero(self) -> float:
        return float(self.masses[self.zero_index])

    @property
    def has_zero_atom(self) -> bool:
        return True  # enforced at construction

    def lattice_type(self) -> float:
        """Asymptotic exponential type implied by the atom spacing.

        Atoms of an admissible measure approach the lattice
        ``pi * k / L`` where ``L`` is the exponential type of the
        generating system; the median gap is a robust estimator that is
        exact on the free fixture.
        """
        gaps = np.diff(self.positions)
        if gaps.size == 0:
            raise ValidationError("cannot estimate a type from a single atom")
        return float(np.pi / np.median(gaps))

    def with_constants(self, b: float, c: float) -> "SpectralMeasure":
        return SpectralMeasure(self.positions, self.masses, self.window, b, c)


def merge_close_atoms(
    positions: np.ndarray, masses: np.ndarray, rtol: float = 1e-10
) -> tuple[np.ndarray, np.ndarray]:
    """Merge atoms closer than ``rtol * (1 + |t|)``, summing masses.

    Zero refinement can report the same root twice; merged positions are
    the mass-weighted means.
    """
    order = np.argsort(positions)
    pos = np.asarray(positions, dtype=float)[order]
    mass = np.asarray(masses, dtype=float)[order]
    out_pos: list[float] = []
    out_mass: list[float] = []
    for t, m in zip(pos, mass):
        if out_pos and abs(t - out_pos[-1]) < rtol * (1.0 + abs(t)):
            tot = out_mass[-1] + m
            out_pos[-1] = (out_pos[-1] * out_mass[-1] + t * m) / tot
            out_mass[-1] = tot
        else:
            out_pos.append(float(t))
            out_mass.append(float(m))
    return np.array(out_pos), np.array(out_mass)


@dataclass(frozen=True)
class TransferMatrix:
    """Fundamental 2x2 solution matrix at ``(r, z)`` with unit determinant."""

    entries: np.ndarray
    r: float
    z: complex

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex).copy()
        if m.shape != (2, 2):
            raise ValidationError("transfer matrix must be 2x2")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        norm2 = float(np.sum(np.abs(m) ** 2))
        if abs(det - 1.0) > DET_TOL * (1.0 + norm2):
            raise InvariantViolation(
                f"transfer matrix determinant drifted: |det-1|={abs(det - 1.0):.3e}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def theta_plus(self) -> complex:
        return complex(self.entries[0, 0])

    @property
    def theta_minus(self) -> complex:
        return complex(self.entries[1, 0])

    @property
    def phi_plus(self) -> complex:
        return complex(self.entries[0, 1])

    @property
    def phi_minus(self) -> complex:
        return complex(self.entries[1, 1])

    @property
    def hermite_biehler(self) -> complex:
        """The structure function ``theta_plus + i * theta_minus``."""
        return self.theta_plus + 1j * self.theta_minus

    @property
    def det_residual(self) -> float:
        m = self.entries
        return float(abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] - 1.0))


@dataclass(frozen=True)
class GridConfig:
    """Discretization parameters shared by the recovery pipeline.

    ``pw_truncation`` caps the half-size of the band-limited basis; the
    effective half-size at bandwidth ``s`` is additionally clamped so
    that all basis nodes stay inside the measure window (roughly
    ``0.95 * window * s / pi``).  ``s_grid`` must be strictly increasing
    with positive entries; its maximum is the recovery bandwidth.
    """

    pw_truncation: int = 256
    measure_window: float = 200.0
    s_grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, np.pi, 129)[1:])
    r_samples: int = 257
    zero_scan_step: float | None = None

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float).copy()
        if self.pw_truncation < 8:
            raise ValidationError("pw_truncation must be at least 8")
        if s.ndim != 1 or s.size < 2:
            raise ValidationError("s_grid must contain at least two points")
        if s[0] <= 0 or np.any(np.diff(s) <= 0):
            raise ValidationError("s_grid must be strictly increasing and positive")
        if self.r_samples < 9:
            raise ValidationError("r_samples too small")
        s.setflags(write=False)
        object.__setattr__(self, "s_grid", s)

    @property
    def bandwidth(self) -> float:
        return float(self.s_grid[-1])

    @classmethod
    def for_bandwidth(
        cls,
        a: float,
        s_samples: int = 129,
        pw_truncation: int = 256,
        measure_window: float = 200.0,
        r_samples: int = 257,
        zero_scan_step: float | None = None,
    ) -> "GridConfig":
        """Uniform ``s`` grid on ``(0, a]`` with ``s_samples`` points incl. 0."""
        grid = np.linspace(0.0, a, s_samples)[1:]
        return cls(pw_truncation, measure_window, grid, r_samples, zero_scan_step)

    def basis_half_size(self, s: float) -> int:
        """Effective basis half-size at bandwidth ``s``.

        Clamped so every node stays safely inside the measure window; at
        very small bandwidths this may leave only the center function.
        """
        cap = int(np.floor(0.95 * self.measure_window * s / np.pi))
        return max(0, min(self.pw_truncation, cap))


@dataclass(frozen=True)
class ReconstructionResult:
    """Output of the inverse pipeline.

    ``hamiltonian`` is trace-2 piecewise constant on the recovered
    interval; ``zeta_table`` holds ``(s, position(s))`` rows,
    ``tau_table`` holds ``(r, bandwidth(r))`` rows of the inverse map,
    and ``diagnostics`` carries every residual computed along the way.
    """

    hamiltonian: Hamiltonian
    zeta_table: np.ndarray
    tau_table: np.ndarray
    diagnostics: dict


# ---------------------------------------------------------------------------
# JSON serialization (canonical form, 17 significant digits)
# ---------------------------------------------------------------------------


def dumps_hamiltonian(H: Hamiltonian) -> str:
    parts = [f'{{"ell": {_fmt(H.ell)}, "segments": [']
    seg_strs = []
    for r0, r1, h11, h12, h22 in H.segments:
        seg_strs.append(
            f'{{"r0": {_fmt(r0)}, "r1": {_fmt(r1)}, '
            f'"h": [[{_fmt(h11)}, {_fmt(h12)}], [{_fmt(h12)}, {_fmt(h22)}]]}}'
        )
    parts.append(", ".join(seg_strs))
    parts.append("]}")
    return "".join(parts)


def loads_hamiltonian(text: str) -> Hamiltonian:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse Hamiltonian JSON: {exc}") from exc
    try:
        ell = float(doc["ell"])
        segments = []
        for seg in doc["segments"]:
            h = seg["h"]
            if abs(float(h[0][1]) - float(h[1][0])) > 0:
                raise ValidationError("segment matrix is not symmetric in file")
            segments.append(
                (float(seg["r0"]), float(seg["r1"]), float(h[0][0]), float(h[0][1]), float(h[1][1]))
            )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed Hamiltonian JSON: {exc!r}") from exc
    H = Hamiltonian.from_segments(segments)
    if abs(H.ell - ell) > _TILING_TOL * (1.0 + abs(ell)):
        raise ValidationError(
            f"declared ell={ell!r} does not match last segment end {H.ell!r}"
        )
    return H


def load_hamiltonian(path: str | Path) -> Hamiltonian:
    """Load and validate a Hamiltonian JSON file."""
    return loads_hamiltonian(Path(path).read_text())


def save_hamiltonian(H: Hamiltonian, path: str | Path) -> None:
    Path(path).write_text(dumps_hamiltonian(H) + "\n")


def dumps_measure(mu: SpectralMeasure) -> str:
    atoms = ", ".join(
        f'{{"t": {_fmt(t)}, "mass": {_fmt(m)}}}' for t, m in zip(mu.positions, mu.masses)
    )
    return (
        f'{{"window": {_fmt(mu.window)}, "b": {_fmt(mu.herglotz_b)}, '
        f'"c": {_fmt(mu.herglotz_c)}, "atoms": [{atoms}]}}'
    )


def loads_measure(text: str) -> SpectralMeasure:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse measure JSON: {exc}") from exc
    try:
        pos = np.array([float(a["t"]) for a in doc["atoms"]])
        mass = np.array([float(a["mass"]) for a in doc["atoms"]])
        window = float(doc["window"])
        b = float(doc.get("b", 0.0))
        c = float(doc.get("c", 0.0))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed measure JSON: {exc!r}") from exc
    order = np.argsort(pos)
    return SpectralMeasure(pos[order], mass[order], window, b, c)


def load_measure(path: str | Path) -> SpectralMeasure:
    """Load and validate a measure JSON file."""
    return loads_measure(Path(path).read_text())


def save_measure(mu: SpectralMeasure, path: str | Path) -> None:
    Path(path).write_text(dumps_measure(mu) + "\n")
