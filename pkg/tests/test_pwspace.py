import numpy as np
import pytest

from canspec.model import SpectralMeasure, ValidationError
from canspec.pwspace import (
    PWBasis,
    apply_inverse,
    build_operator,
    evaluate_pw,
    frame_bounds,
    sinc_kernel,
    sinc_kernel_dt,
)


class TestSincKernel:
    def test_diagonal_value(self):
        for s in [0.5, 1.0, np.pi]:
            assert sinc_kernel(s, 1.7, 1.7) == pytest.approx(s / np.pi, rel=1e-15)

    def test_vanishes_at_lattice(self):
        s = 1.3
        for k in [1, -2, 5]:
            assert abs(sinc_kernel(s, 0.4 + np.pi * k / s, 0.4)) < 1e-15

    def test_series_branch_value(self):
        # Taylor oracle: sin(u)/(pi u) = (1 - u^2/6 + ...) / pi at u = 1e-6
        got = sinc_kernel(1.0, 1e-6, 0.0)
        want = (1.0 - 1e-12 / 6.0) / np.pi
        assert got == pytest.approx(want, rel=1e-15)

    def test_branch_agreement_near_switch(self):
        # series and closed form agree where the branch changes over
        s = 2.0
        u = 0.99e-4
        series = sinc_kernel(s, u, 0.0)
        closed = np.sin(s * u) / (np.pi * u)
        assert series == pytest.approx(closed, rel=1e-12)

    def test_rejects_nonpositive_bandwidth(self):
        with pytest.raises(ValidationError):
            sinc_kernel(0.0, 1.0, 0.0)


class TestSincKernelDt:
    def test_zero_on_diagonal(self):
        assert sinc_kernel_dt(1.7, 0.3, 0.3) == 0.0

    def test_printed_value(self):
        # (sin(pi) - pi cos(pi)) / (pi * pi^2) = 1/pi^2
        assert sinc_kernel_dt(1.0, np.pi, 0.0) == pytest.approx(1 / np.pi**2, rel=1e-14)

    def test_odd_in_argument(self):
        assert sinc_kernel_dt(1.2, 0.7, 0.1) == pytest.approx(
            -sinc_kernel_dt(1.2, 0.1, 0.7), rel=1e-14
        )

    @pytest.mark.parametrize("x,t", [(0.9, 0.2), (2.5, -1.3), (0.30001, 0.3)])
    def test_finite_difference_consistency(self, x, t):
        s, d = 1.4, 1e-5
        fd = (sinc_kernel(s, x, t + d) - sinc_kernel(s, x, t - d)) / (2 * d)
        assert abs(sinc_kernel_dt(s, x, t) - fd) < 1e-7


class TestBuildOperator:
    @pytest.mark.parametrize("s_frac", [1.0, 0.5])
    def test_free_measure_gives_identity(self, free_pi, s_frac):
        _, mu, _ = free_pi
        s = np.pi * s_frac
        half = int(np.floor(0.95 * mu.window * s / np.pi))
        op = build_operator(mu, s, half)
        assert np.max(np.abs(op.gram - np.eye(op.basis.size))) < 1e-12

    def test_gram_bit_exact_symmetry(self, step_measure_small):
        op = build_operator(step_measure_small, 1.0, 12)
        assert np.array_equal(op.gram, op.gram.T)

    def test_gram_psd(self, step_measure_small):
        op = build_operator(step_measure_small, 2.0, 30)
        evals = np.linalg.eigvalsh(op.gram_window)
        assert evals.min() > -1e-12

    def test_rank_one_mass_update(self):
        # doubling the origin mass adds a rank-one block to the free Gram
        ell = np.pi
        k = np.arange(-40, 41)
        base = np.full(k.size, 1.0)
        mu0 = SpectralMeasure(k.astype(float), base, 40.5)
        extra = base.copy()
        extra[40] += 1.0
        mu1 = SpectralMeasure(k.astype(float), extra, 40.5)
        s = np.pi
        op0 = build_operator(mu0, s, 30)
        op1 = build_operator(mu1, s, 30)
        diff = op1.gram - op0.gram
        e0 = np.zeros(op0.basis.size)
        e0[op0.basis.center] = 1.0
        want = (s / np.pi) * np.outer(e0, e0)  # phi_0(0)^2 = s/pi
        np.testing.assert_allclose(diff, want, atol=1e-13)

    def test_basis_outside_window_rejected(self, free_pi):
        _, mu, _ = free_pi
        with pytest.raises(ValidationError, match="window"):
            build_operator(mu, np.pi, 1000)

    def test_parseval_windowed(self, step_measure_small):
        # atomwise norm equals the windowed quadratic form exactly
        mu = step_measure_small
        op = build_operator(mu, 1.5, 16, tail_completion=False)
        rng = np.random.default_rng(3)
        c = rng.standard_normal(op.basis.size)
        vals = op.atom_matrix.T @ c
        atomwise = np.sum(mu.masses * vals**2)
        quad = c @ op.gram_window @ c
        assert atomwise == pytest.approx(quad, rel=1e-12)


class TestApplyInverse:
    def test_identity_case(self, free_pi):
        _, mu, _ = free_pi
        op = build_operator(mu, np.pi, 100)
        rng = np.random.default_rng(5)
        rhs = rng.standard_normal(op.basis.size)
        np.testing.assert_allclose(apply_inverse(op, rhs), rhs, atol=1e-11)

    def test_inverse_consistency(self, step_measure_small):
        op = build_operator(step_measure_small, 1.8, 20)
        rng = np.random.default_rng(6)
        rhs = rng.standard_normal(op.basis.size)
        x = apply_inverse(op, rhs)
        np.testing.assert_allclose(op.gram @ x, rhs, atol=1e-10 * np.linalg.norm(rhs))

    def test_complex_right_hand_side(self, step_measure_small):
        op = build_operator(step_measure_small, 1.8, 20)
        rhs = np.linspace(-1, 1, op.basis.size) + 1j * np.ones(op.basis.size)
        x = apply_inverse(op, rhs)
        np.testing.assert_allclose(op.gram @ x, rhs, atol=1e-10)

    def test_size_mismatch(self, step_measure_small):
        op = build_operator(step_measure_small, 1.8, 20)
        with pytest.raises(ValidationError):
            apply_inverse(op, np.ones(3))


class TestFrameBounds:
    def test_free_measure_unit_bounds(self, free_pi):
        _, mu, _ = free_pi
        lo, hi = frame_bounds(mu, np.pi, 150)
        assert lo == pytest.approx(1.0, abs=1e-8)
        assert hi == pytest.approx(1.0, abs=1e-8)

    def test_deleting_an_atom_lowers_the_floor(self):
        # removing an atom the section can see strictly lowers the floor
        # (at the aligned bandwidth the deleted site is a blind spot)
        k = np.arange(-40, 41)
        mu_full = SpectralMeasure(k.astype(float), np.full(k.size, 1.0), 40.5)
        keep = np.abs(k - 35) > 0
        mu_del = SpectralMeasure(
            k[keep].astype(float), np.full(int(keep.sum()), 1.0), 40.5
        )
        s = np.pi / 2
        lo_full, _ = frame_bounds(mu_full, s, 19)
        lo_del, _ = frame_bounds(mu_del, s, 19)
        assert lo_full > 0.95
        assert lo_del < lo_full - 0.05

    def test_kadec_style_stability(self):
        # perturbed integer-pi lattice keeps a healthy lower frame bound
        window = np.pi * (128 + 8)
        k = np.arange(-int(window / np.pi), int(window / np.pi) + 1)
        d = 0.2 * np.cos(2.399 * k)
        d[k == 0] = 0.0
        mu = SpectralMeasure(np.pi * k + d, np.full(k.size, np.pi), window)
        bounds = [frame_bounds(mu, 1.0, half)[0] for half in (64, 128)]
        assert min(bounds) > 0.05
        assert abs(bounds[1] - bounds[0]) / bounds[0] < 0.1


class TestEvaluate:
    def test_unit_coefficient_reproduces_basis_function(self):
        basis = PWBasis(1.3, 10)
        c = np.zeros(basis.size)
        c[basis.center + 3] = 1.0
        xs = np.linspace(-2, 2, 7)
        got = evaluate_pw(c, basis, xs)
        want = np.sqrt(np.pi / 1.3) * sinc_kernel(1.3, xs, basis.nodes[basis.center + 3])
        np.testing.assert_allclose(got, want, rtol=1e-14)

    def test_interpolation_at_nodes(self):
        basis = PWBasis(2.0, 8)
        rng = np.random.default_rng(11)
        c = rng.standard_normal(basis.size)
        got = evaluate_pw(c, basis, basis.nodes[5])
        assert got == pytest.approx(c[5] * np.sqrt(2.0 / np.pi), rel=1e-12)

    def test_shifted_kernel_expansion_converges(self):
        s, t0 = 1.0, 0.37
        for half, tol in [(40, 0.02), (160, 0.005)]:
            basis = PWBasis(s, half)
            c = basis.kernel_coefficients(t0)
            xs = np.linspace(-3, 3, 11)
            got = evaluate_pw(c, basis, xs)
            want = sinc_kernel(s, xs, t0)
            assert np.max(np.abs(got - want)) < tol

    def test_coefficient_size_guard(self):
        basis = PWBasis(1.0, 4)
        with pytest.raises(ValidationError):
            evaluate_pw(np.ones(3), basis, 0.0)
