"""Finite sections of band-limited quadratic forms in a sinc basis.

The orthonormal sampling basis of the bandwidth-``s`` Paley-Wiener space
is ``phi_k(x) = sqrt(pi/s) * sinc_s(x - pi*k/s)``.  The measure-weighted
quadratic form becomes a symmetric Gram matrix over that basis; its
factorization drives the whole recovery pipeline.

Gram matrices assembled over a windowed measure miss the slowly decaying
atom tail.  By default the missing part is completed with the free
lattice model at the type estimated from the atom spacing (spacing and
masses ``pi / L``): the full lattice sum is the identity by the sampling
theorem, so the completion is ``I`` minus the in-window lattice Gram.
The completion is exact on the free fixture and a controlled heuristic
otherwise; the raw windowed matrix stays available for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import ComparabilityError, SpectralMeasure, ValidationError

__all__ = [
    "PWBasis",
    "PWOperator",
    "sinc_kernel",
    "sinc_kernel_dt",
    "build_operator",
    "apply_inverse",
    "frame_bounds",
    "evaluate_pw",
]

_DENSE_LIMIT = 4097  # largest direct factorization; beyond is out of desk scale
_DIRECT_EIG_LIMIT = 2049  # larger sections estimate extremes iteratively


def sinc_kernel(s: float, x, t=0.0):
    """Reproducing kernel ``sin(s(x-t)) / (pi (x-t))`` of bandwidth ``s``.

    The removable singularity returns ``s/pi``; a short series takes over
    for ``|x - t| < 1e-4`` to avoid cancellation.
    """
    if s <= 0:
        raise ValidationError("bandwidth must be positive")
    u = np.asarray(x, dtype=float) - np.asarray(t, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    small = np.abs(u) < 1e-4
    w = s * u
    u_safe = np.where(small, 1.0, u)
    out = np.where(
        small, (s / np.pi) * (1.0 - w**2 / 6.0 + w**4 / 120.0), np.sin(w) / (np.pi * u_safe)
    )
    return float(out[0]) if scalar else out


def sinc_kernel_dt(s: float, x, t):
    """Derivative of the kernel in its second argument.

    Equals ``(sin(su) - su*cos(su)) / (pi u^2)`` with ``u = x - t``; odd
    in ``u`` and zero on the diagonal.  Pairing the inverted sine vector
    against this kernel yields the slope data of the recovery pipeline.
    """
    if s <= 0:
        raise ValidationError("bandwidth must be positive")
    u = np.asarray(x, dtype=float) - np.asarray(t, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    small = np.abs(u) < 1e-4
    w = s * u
    u_safe = np.where(small, 1.0, u)
    series = (s**3 * u / (3.0 * np.pi)) * (1.0 - w**2 / 10.0 + w**4 / 280.0)
    out = np.where(small, series, (np.sin(w) - w * np.cos(w)) / (np.pi * u_safe**2))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class PWBasis:
    """Sampling basis ``phi_k``, ``k = -half_size .. half_size``."""

    s: float
    half_size: int

    def __post_init__(self):
        if self.s <= 0:
            raise ValidationError("bandwidth must be positive")
        if self.half_size < 0:
            raise ValidationError("basis half-size must be nonnegative")

    @property
    def size(self) -> int:
        return 2 * self.half_size + 1

    @property
    def center(self) -> int:
        return self.half_size

    @property
    def nodes(self) -> np.ndarray:
        k = np.arange(-self.half_size, self.half_size + 1)
        return np.pi * k / self.s

    def functions_at(self, points: np.ndarray) -> np.ndarray:
        """Matrix ``phi_k(points)``, shape ``(size, len(points))``."""
        points = np.atleast_1d(np.asarray(points, dtype=float))
        scale = np.sqrt(np.pi / self.s)
        return scale * sinc_kernel(self.s, points[None, :], self.nodes[:, None])

    def derivatives_at(self, points: np.ndarray) -> np.ndarray:
        """Matrix ``phi_k'(points)``, shape ``(size, len(points))``."""
        points = np.atleast_1d(np.asarray(points, dtype=float))
        scale = np.sqrt(np.pi / self.s)
        return scale * sinc_kernel_dt(self.s, self.nodes[:, None], points[None, :])

    def kernel_coefficients(self, t: complex) -> np.ndarray:
        """Expansion coefficients of ``sinc_s(. - t)``: ``sqrt(pi/s) sinc_s(node - t)``."""
        scale = np.sqrt(np.pi / self.s)
        u = self.nodes - t
        if np.iscomplexobj(np.asarray(t)) and np.imag(t) != 0:
            w = self.s * u
            return scale * np.sin(w) / (np.pi * u)
        return scale * sinc_kernel(self.s, self.nodes, float(np.real(t)))


@dataclass
class PWOperator:
    """Factorized finite section of the measure quadratic form.

    ``gram`` is the (tail-completed) symmetric positive-definite matrix,
    ``gram_window`` the raw windowed assembly; ``atom_matrix`` caches the
    basis values at the atoms for fast pairings.
    """

    basis: PWBasis
    gram: np.ndarray
    gram_window: np.ndarray
    atom_matrix: np.ndarray
    positions: np.ndarray
    masses: np.ndarray
    lattice_type: float
    tail_completed: bool
    _cho: tuple = None
    _extremes: tuple | None = None

    @property
    def s(self) -> float:
        return self.basis.s

    @property
    def condition_estimate(self) -> float:
        lo, hi = self.extreme_eigenvalues()
        return hi / lo if lo > 0 else np.inf

    def extreme_eigenvalues(self) -> tuple[float, float]:
        if self._extremes is None:
            n = self.gram.shape[0]
            if n <= _DIRECT_EIG_LIMIT:
                lo = scipy.linalg.eigh(self.gram, eigvals_only=True, subset_by_index=[0, 0])[0]
                hi = scipy.linalg.eigh(
                    self.gram, eigvals_only=True, subset_by_index=[n - 1, n - 1]
                )[0]
            else:
                from scipy.sparse.linalg import eigsh

                lo = eigsh(self.gram, k=1, which="SA", tol=1e-8)[0][0]
                hi = eigsh(self.gram, k=1, which="LA", tol=1e-8)[0][0]
            self._extremes = (float(lo), float(hi))
        return self._extremes

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return apply_inverse(self, rhs)


def _lattice_nodes(mu: SpectralMeasure, lattice_type: float) -> np.ndarray:
    """Free-model lattice points covering the same range as the atoms."""
    r_eff = float(np.max(np.abs(mu.positions)))
    kmax = int(np.floor((r_eff + 0.5 * np.pi / lattice_type) * lattice_type / np.pi))
    k = np.arange(-kmax, kmax + 1, dtype=float)
    return np.pi * k / lattice_type


def build_operator(
    mu: SpectralMeasure, s: float, half_size: int, tail_completion: bool = True
) -> PWOperator:
    """Assemble and factorize the sectioned quadratic form at bandwidth ``s``.

    The basis nodes must fall inside the measure window.  Factorization
    failure means the discretized form is not boundedly invertible (the
    measure is not comparable on this band at this truncation).
    """
    basis = PWBasis(float(s), int(half_size))
    n = basis.size
    if n > _DENSE_LIMIT:
        raise ValidationError(
            f"basis size {n} exceeds the dense-factorization limit {_DENSE_LIMIT}"
        )
    outer_node = np.pi * basis.half_size / basis.s
    if outer_node > mu.window * (1 + 1e-12):
        raise ValidationError(
            f"basis node {outer_node:.6g} falls outside the measure window {mu.window:.6g}"
        )
    phi = basis.functions_at(mu.positions)
    gram_window = (phi * mu.masses[None, :]) @ phi.T
    gram_window = 0.5 * (gram_window + gram_window.T)
    lam = mu.lattice_type() if mu.positions.size > 1 else basis.s
    if tail_completion and mu.positions.size > 1:
        lattice = _lattice_nodes(mu, lam)
        phi_lat = basis.functions_at(lattice)
        gram_lat = (np.pi / lam) * (phi_lat @ phi_lat.T)
        gram = gram_window + np.eye(n) - 0.5 * (gram_lat + gram_lat.T)
        gram = 0.5 * (gram + gram.T)
    else:
        tail_completion = False
        gram = gram_window
    try:
        cho = scipy.linalg.cho_factor(gram)
    except scipy.linalg.LinAlgError as exc:
        raise ComparabilityError(
            f"measure not comparable on the bandwidth-{s:g} space at truncation "
            f"{half_size}: factorization failed ({exc})"
        ) from exc
    return PWOperator(
        basis=basis,
        gram=gram,
        gram_window=gram_window,
        atom_matrix=phi,
        positions=mu.positions,
        masses=mu.masses,
        lattice_type=lam,
        tail_completed=tail_completion,
        _cho=cho,
    )


def apply_inverse(op: PWOperator, rhs: np.ndarray) -> np.ndarray:
    """Solve ``gram @ x = rhs`` with a relative residual below ``1e-12``.

    One step of iterative refinement is applied if plain back-substitution
    is not accurate enough; complex right-hand sides are supported.
    """
    rhs = np.asarray(rhs)
    if rhs.shape[0] != op.gram.shape[0]:
        raise ValidationError("right-hand side size does not match the operator")
    if np.iscomplexobj(rhs):
        return apply_inverse(op, rhs.real) + 1j * apply_inverse(op, rhs.imag)
    x = scipy.linalg.cho_solve(op._cho, rhs)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return x
    res = op.gram @ x - rhs
    if np.linalg.norm(res) > 1e-12 * rhs_norm:
        x = x - scipy.linalg.cho_solve(op._cho, res)
        res = op.gram @ x - rhs
        if np.linalg.norm(res) > 1e-10 * rhs_norm:
            raise ComparabilityError(
                f"inverse application failed: relative residual "
                f"{np.linalg.norm(res) / rhs_norm:.3e}"
            )
    return x


def frame_bounds(
    mu: SpectralMeasure, s: float, half_size: int, tail_completion: bool = True
) -> tuple[float, float]:
    """Extreme eigenvalues of the sectioned form: a comparability certificate.

    They bound the ratio of the measure norm to the line norm over the
    truncated band-limited section; stability of the lower bound under
    refinement is the practical substitute for the density condition.
    """
    op = build_operator(mu, s, half_size, tail_completion)
    return op.extreme_eigenvalues()


def evaluate_pw(coeffs: np.ndarray, basis: PWBasis, x) -> np.ndarray | float:
    """Evaluate ``sum_k coeffs[k] * phi_k`` at real points ``x``."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[0] != basis.size:
        raise ValidationError("coefficient vector does not match the basis size")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = basis.functions_at(xs).T @ coeffs
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return vals[0]
    return vals
