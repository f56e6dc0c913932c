import numpy as np
import pytest

from canspec import forward, oracles
from canspec.model import (
    GridConfig,
    Hamiltonian,
    SpectralMeasure,
    ValidationError,
    dumps_hamiltonian,
    dumps_measure,
    loads_hamiltonian,
    loads_measure,
    merge_close_atoms,
    normalize_trace,
)


class TestHamiltonianValidation:
    def test_identity_constructor(self):
        H = Hamiltonian.identity(np.pi)
        assert H.ell == np.pi
        assert H.nsegments == 1
        assert np.array_equal(H.matrices[0], np.eye(2))

    def test_psd_violation_reports_segment(self):
        with pytest.raises(ValidationError, match="segment 0"):
            Hamiltonian.from_segments([(0.0, 1.0, 1.0, 1.1, 1.0)])

    def test_tiling_gap_rejected(self):
        with pytest.raises(ValidationError, match="tiling"):
            Hamiltonian.from_segments(
                [(0.0, 1.0, 1.0, 0.0, 1.0), (1.5, 2.0, 1.0, 0.0, 1.0)]
            )

    def test_negative_diagonal_rejected(self):
        with pytest.raises(ValidationError, match="diagonal"):
            Hamiltonian.from_segments([(0.0, 1.0, -0.1, 0.0, 1.0)])

    def test_zero_trace_rejected(self):
        with pytest.raises(ValidationError, match="trace"):
            Hamiltonian.from_segments([(0.0, 1.0, 0.0, 0.0, 0.0)])

    def test_must_start_at_zero(self):
        with pytest.raises(ValidationError):
            Hamiltonian.from_segments([(0.5, 1.0, 1.0, 0.0, 1.0)])

    def test_rank_one_segment_allowed(self):
        H = Hamiltonian.from_segments([(0.0, 1.0, 1.0, 1.0, 1.0)])
        assert H.determinants()[0] == 0.0

    def test_compatibility_flag(self):
        H = Hamiltonian.from_segments(
            [(0.0, 1.0, 0.0, 0.0, 2.0), (1.0, 2.0, 1.0, 0.0, 1.0)]
        )
        assert not H.is_compatible()
        assert oracles.step_fixture().is_compatible()


class TestJsonRoundTrip:
    def test_identity_json(self):
        text = (
            '{"ell": 3.1415926535897931, "segments": [{"r0": 0, "r1": '
            '3.1415926535897931, "h": [[1, 0], [0, 1]]}]}'
        )
        H = loads_hamiltonian(text)
        assert H.ell == np.pi
        assert np.array_equal(H.matrices[0], np.eye(2))

    def test_serialize_load_bit_exact(self):
        H = oracles.step_fixture(1.2)
        text = dumps_hamiltonian(H)
        H2 = loads_hamiltonian(text)
        assert np.array_equal(H.edges, H2.edges)
        assert np.array_equal(H.matrices, H2.matrices)
        assert dumps_hamiltonian(H2) == text

    def test_section5_generator_shape(self):
        H = oracles.section5_hamiltonian(0.1, 20)
        assert H.nsegments == 20
        np.testing.assert_allclose(H.lengths, [3.0**-j for j in range(1, 21)])
        assert np.array_equal(H.matrices[0], np.eye(2))
        assert np.array_equal(H.matrices[1], np.diag([0.1, 10.0]))
        text = dumps_hamiltonian(H)
        H2 = loads_hamiltonian(text)
        assert np.array_equal(H.matrices, H2.matrices)

    def test_mismatched_ell_rejected(self):
        text = '{"ell": 2.0, "segments": [{"r0": 0, "r1": 1.0, "h": [[1, 0], [0, 1]]}]}'
        with pytest.raises(ValidationError, match="ell"):
            loads_hamiltonian(text)

    def test_parse_error(self):
        with pytest.raises(ValidationError, match="parse"):
            loads_hamiltonian("{not json")

    def test_measure_round_trip(self):
        mu = SpectralMeasure(
            np.array([-2.5, 0.0, 1.25]),
            np.array([0.5, 1.0, 2.0]),
            10.0,
            herglotz_b=0.0,
            herglotz_c=0.125,
        )
        text = dumps_measure(mu)
        mu2 = loads_measure(text)
        assert np.array_equal(mu.positions, mu2.positions)
        assert np.array_equal(mu.masses, mu2.masses)
        assert mu2.herglotz_c == 0.125
        assert dumps_measure(mu2) == text


class TestSpectralMeasureInvariants:
    def test_zero_atom_required(self):
        with pytest.raises(ValidationError, match="origin"):
            SpectralMeasure(np.array([1.0, 2.0]), np.array([1.0, 1.0]), 5.0)

    def test_two_zero_atoms_rejected(self):
        with pytest.raises(ValidationError, match="origin"):
            SpectralMeasure(
                np.array([-1e-14, 1e-14]), np.array([1.0, 1.0]), 5.0
            )

    def test_positive_mass_required(self):
        with pytest.raises(ValidationError, match="positive"):
            SpectralMeasure(np.array([0.0, 1.0]), np.array([1.0, -1.0]), 5.0)

    def test_sorted_positions_required(self):
        with pytest.raises(ValidationError, match="increasing"):
            SpectralMeasure(np.array([1.0, 0.0]), np.array([1.0, 1.0]), 5.0)

    def test_lattice_type_free(self, free_pi):
        _, mu, _ = free_pi
        assert mu.lattice_type() == pytest.approx(np.pi, rel=1e-14)

    def test_merge_close_atoms(self):
        pos = np.array([0.0, 1.0, 1.0 + 1e-12, 2.0])
        mass = np.array([1.0, 0.5, 0.25, 1.0])
        p, m = merge_close_atoms(pos, mass)
        assert p.size == 3
        assert m[1] == pytest.approx(0.75)


class TestNormalizeTrace:
    def test_identity_unchanged(self):
        H = Hamiltonian.identity(np.pi)
        Ht, tc = normalize_trace(H)
        assert Ht.ell == pytest.approx(np.pi, abs=1e-15)
        assert np.allclose(Ht.matrices, np.eye(2))
        assert np.allclose(tc[:, 0], tc[:, 1])

    def test_single_segment_closed_form(self):
        H = Hamiltonian.from_segments([(0.0, 1.0, 0.1, 0.0, 10.0)])
        Ht, tc = normalize_trace(H)
        assert Ht.ell == pytest.approx(5.05)
        np.testing.assert_allclose(
            Ht.matrices[0], np.diag([2 * 0.1 / 10.1, 2 * 10 / 10.1]), rtol=1e-15
        )
        # linear time change r -> 5.05 r
        assert tc[-1, 1] == pytest.approx(5.05 * tc[-1, 0])

    def test_two_segment_closed_form(self):
        H = Hamiltonian.from_segments(
            [(0.0, 1.0, 3.0, 0.0, 1.0), (1.0, 2.0, 1.0, 0.0, 3.0)]
        )
        Ht, tc = normalize_trace(H)
        assert Ht.ell == pytest.approx(4.0)
        np.testing.assert_allclose(Ht.matrices[0], np.diag([1.5, 0.5]))
        np.testing.assert_allclose(Ht.matrices[1], np.diag([0.5, 1.5]))
        np.testing.assert_allclose(tc[:, 1], 2 * tc[:, 0])

    def test_idempotent(self, step_hamiltonian):
        Ht, _ = normalize_trace(step_hamiltonian)
        Ht2, _ = normalize_trace(Ht)
        assert np.allclose(Ht.edges, Ht2.edges)
        assert np.allclose(Ht.matrices, Ht2.matrices)

    def test_preserves_exponential_type(self):
        H = Hamiltonian.from_segments(
            [(0.0, 0.7, 4.0, 0.5, 1.0), (0.7, 2.0, 1.0, -0.25, 2.0)]
        )
        Ht, _ = normalize_trace(H)
        assert forward.exponential_type(Ht) == pytest.approx(
            forward.exponential_type(H), rel=1e-14
        )


class TestGridConfig:
    def test_small_truncation_rejected(self):
        with pytest.raises(ValidationError):
            GridConfig(pw_truncation=4)

    def test_s_grid_must_increase(self):
        with pytest.raises(ValidationError):
            GridConfig(s_grid=np.array([1.0, 0.5]))

    def test_basis_half_size_clamps_to_window(self):
        cfg = GridConfig.for_bandwidth(np.pi, measure_window=200.0, pw_truncation=256)
        assert cfg.basis_half_size(np.pi) == 190
        assert cfg.basis_half_size(np.pi / 128) >= 1
        cfg2 = GridConfig.for_bandwidth(np.pi, measure_window=2000.0, pw_truncation=256)
        assert cfg2.basis_half_size(np.pi) == 256

    def test_bandwidth_property(self):
        cfg = GridConfig.for_bandwidth(2.0, s_samples=65)
        assert cfg.bandwidth == pytest.approx(2.0)
        assert cfg.s_grid.size == 64
