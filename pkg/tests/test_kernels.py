"""Kernel families: closed forms, analytic derivatives, constraint boxes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfnet.kernels import (
    ALPHA_MAX,
    ENVELOPE_SIGMA,
    F_MAX,
    MOTHER_FREQ,
    S_MAX,
    S_MIN,
    ConstraintError,
    KernelFamily,
    KernelGrid,
    KernelParams,
    clamp_params,
    default_grid,
    evaluate_kernel,
    evaluate_kernels,
    init_params,
    kernel_param_grad,
    n_params,
    param_names,
)

FAMILIES = list(KernelFamily)
PARAMETRIC = [KernelFamily.STTF, KernelFamily.CHIRPLET, KernelFamily.MORLET, KernelFamily.LAPLACE]


def mid_theta(family):
    """A strictly interior parameter vector for derivative checks."""
    return {
        KernelFamily.STTF: [0.23],
        KernelFamily.CHIRPLET: [0.23, 0.0017],
        KernelFamily.MORLET: [2.3],
        KernelFamily.LAPLACE: [1.7],
    }[family]


class TestGridsAndShapes:
    def test_default_grid_lengths(self):
        assert len(default_grid(KernelFamily.STTF)) == 51
        assert len(default_grid(KernelFamily.CHIRPLET)) == 51
        assert len(default_grid(KernelFamily.RANDOM)) == 51
        assert len(default_grid(KernelFamily.MORLET)) == 301
        assert len(default_grid(KernelFamily.LAPLACE)) == 151

    def test_grid_endpoints(self):
        assert default_grid(KernelFamily.STTF).indices[0] == -25
        assert default_grid(KernelFamily.STTF).indices[-1] == 25
        assert default_grid(KernelFamily.MORLET).indices[0] == -150
        assert default_grid(KernelFamily.LAPLACE).indices[0] == 0
        assert default_grid(KernelFamily.LAPLACE).indices[-1] == 150

    @pytest.mark.parametrize("family", PARAMETRIC)
    def test_kernel_length_matches_grid(self, family):
        psi = evaluate_kernel(family, mid_theta(family))
        assert psi.shape == (len(default_grid(family)),)
        assert psi.dtype == np.complex128

    def test_n_params(self):
        assert n_params(KernelFamily.STTF, 51) == 1
        assert n_params(KernelFamily.CHIRPLET, 51) == 2
        assert n_params(KernelFamily.MORLET, 301) == 1
        assert n_params(KernelFamily.LAPLACE, 151) == 1
        assert n_params(KernelFamily.RANDOM, 51) == 102

    def test_param_names(self):
        assert param_names(KernelFamily.STTF, 51) == ("f",)
        assert param_names(KernelFamily.CHIRPLET, 51) == ("f", "alpha")
        assert param_names(KernelFamily.MORLET, 301) == ("s",)
        names = param_names(KernelFamily.RANDOM, 3)
        assert names == ("w_re_0", "w_re_1", "w_re_2", "w_im_0", "w_im_1", "w_im_2")

    def test_wrong_grid_rejected(self):
        with pytest.raises(ValueError):
            evaluate_kernel(KernelFamily.STTF, [0.1], KernelGrid(np.arange(-10, 11)))


class TestClosedForms:
    def test_sttf_matches_formula(self):
        n = np.arange(-25, 26, dtype=float)
        f = 0.31
        want = np.exp(-0.5 * (n / 10.0) ** 2) * np.exp(2j * np.pi * f * n)
        got = evaluate_kernel(KernelFamily.STTF, [f])
        assert np.max(np.abs(got - want)) < 1e-15

    def test_sttf_zero_frequency_is_real_gaussian(self):
        psi = evaluate_kernel(KernelFamily.STTF, [0.0])
        assert np.allclose(psi.imag, 0.0)
        assert psi.real.argmax() == 25  # centered
        assert np.all(psi.real > 0)

    def test_chirplet_matches_formula(self):
        n = np.arange(-25, 26, dtype=float)
        f, alpha = 0.12, 0.004
        want = np.exp(-0.5 * (n / 10.0) ** 2) * np.exp(2j * np.pi * (0.5 * alpha * n**2 + f * n))
        got = evaluate_kernel(KernelFamily.CHIRPLET, [f, alpha])
        assert np.max(np.abs(got - want)) < 1e-15

    def test_chirplet_zero_rate_equals_sttf_bitwise(self):
        for f in (0.0, 0.1, 0.23, 0.499):
            sttf = evaluate_kernel(KernelFamily.STTF, [f])
            chirp = evaluate_kernel(KernelFamily.CHIRPLET, [f, 0.0])
            np.testing.assert_array_equal(sttf, chirp)

    def test_morlet_unit_scale_is_mother(self):
        n = np.arange(-150, 151, dtype=float)
        want = np.exp(-0.5 * (n / ENVELOPE_SIGMA) ** 2) * np.exp(2j * np.pi * MOTHER_FREQ * n)
        got = evaluate_kernel(KernelFamily.MORLET, [1.0])
        assert np.max(np.abs(got - want)) < 1e-15

    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0, 5.0])
    def test_morlet_center_frequency_scales_inversely(self, s):
        psi = evaluate_kernel(KernelFamily.MORLET, [s])
        n_fft = 4096
        mag = np.abs(np.fft.fft(psi, n_fft))
        peak = mag[: n_fft // 2 + 1].argmax() / n_fft
        assert abs(peak - MOTHER_FREQ / s) < 2.0 / n_fft

    def test_laplace_support_is_one_sided(self):
        psi = evaluate_kernel(KernelFamily.LAPLACE, [1.0])
        assert psi.shape == (151,)
        assert abs(psi[0]) == pytest.approx(1.0)  # mother at m=0
        assert abs(psi[-1]) < 1e-15  # envelope has died off

    def test_wavelet_amplitude_normalization(self):
        # 1/sqrt(s) prefactor: tap at n=0 has magnitude s**-0.5
        for fam in (KernelFamily.MORLET, KernelFamily.LAPLACE):
            for s in (0.5, 2.0, 8.0):
                psi = evaluate_kernel(fam, [s])
                center = 150 if fam is KernelFamily.MORLET else 0
                assert abs(psi[center]) == pytest.approx(s**-0.5, rel=1e-12)

    def test_random_taps_pass_through(self):
        raw = np.arange(102, dtype=float)
        psi = evaluate_kernel(KernelFamily.RANDOM, raw)
        np.testing.assert_array_equal(psi.real, raw[:51])
        np.testing.assert_array_equal(psi.imag, raw[51:])

    def test_random_wrong_tap_count_rejected(self):
        with pytest.raises(ValueError):
            evaluate_kernel(KernelFamily.RANDOM, np.zeros(51))


class TestConstraints:
    def test_frequency_box(self):
        with pytest.raises(ConstraintError):
            evaluate_kernel(KernelFamily.STTF, [0.5])
        with pytest.raises(ConstraintError):
            evaluate_kernel(KernelFamily.STTF, [-0.01])
        evaluate_kernel(KernelFamily.STTF, [F_MAX])  # boundary is legal

    def test_chirp_rate_box(self):
        with pytest.raises(ConstraintError):
            evaluate_kernel(KernelFamily.CHIRPLET, [0.1, ALPHA_MAX * 1.01])
        evaluate_kernel(KernelFamily.CHIRPLET, [0.1, -ALPHA_MAX])

    def test_scale_box(self):
        for fam in (KernelFamily.MORLET, KernelFamily.LAPLACE):
            with pytest.raises(ConstraintError):
                evaluate_kernel(fam, [S_MIN * 0.99])
            with pytest.raises(ConstraintError):
                evaluate_kernel(fam, [S_MAX * 1.01])
            evaluate_kernel(fam, [S_MIN])
            evaluate_kernel(fam, [S_MAX])

    def test_non_finite_rejected(self):
        with pytest.raises(ConstraintError):
            evaluate_kernel(KernelFamily.STTF, [np.nan])

    def test_clamp_projects_to_box(self):
        params = KernelParams(KernelFamily.CHIRPLET, np.array([[0.7, -0.02], [-0.3, 0.001]]))
        clamped = clamp_params(params)
        np.testing.assert_allclose(clamped.theta, [[F_MAX, -ALPHA_MAX], [0.0, 0.001]])

    def test_clamp_is_identity_inside_box(self):
        theta = np.array([[0.1], [0.49]])
        params = KernelParams(KernelFamily.STTF, theta)
        np.testing.assert_array_equal(clamp_params(params).theta, theta)

    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2))
    @settings(max_examples=50, deadline=None)
    def test_clamp_idempotent(self, row):
        params = KernelParams(KernelFamily.CHIRPLET, np.array([row]))
        once = clamp_params(params).theta
        twice = clamp_params(KernelParams(KernelFamily.CHIRPLET, once)).theta
        np.testing.assert_array_equal(once, twice)

    def test_scale_clamp_idempotent(self):
        params = KernelParams(KernelFamily.MORLET, np.array([[0.01], [99.0], [3.0]]))
        once = clamp_params(params).theta
        twice = clamp_params(KernelParams(KernelFamily.MORLET, once)).theta
        np.testing.assert_array_equal(once, twice)
        assert once[0, 0] == S_MIN and once[1, 0] == S_MAX and once[2, 0] == 3.0


class TestAnalyticGradients:
    @pytest.mark.parametrize("family", PARAMETRIC)
    def test_matches_central_difference(self, family):
        theta = np.asarray(mid_theta(family), dtype=float)
        grad = kernel_param_grad(family, theta)
        assert grad.shape == (theta.size, len(default_grid(family)))
        h = 1e-7
        for p in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[p] += h
            tm[p] -= h
            numeric = (evaluate_kernel(family, tp) - evaluate_kernel(family, tm)) / (2 * h)
            scale = max(np.max(np.abs(numeric)), 1.0)
            assert np.max(np.abs(grad[p] - numeric)) / scale < 1e-6

    def test_random_gradient_is_tap_identity(self):
        grad = kernel_param_grad(KernelFamily.RANDOM, np.zeros(102))
        assert grad.shape == (102, 51)
        np.testing.assert_array_equal(grad[:51].real, np.eye(51))
        np.testing.assert_array_equal(grad[51:].imag, np.eye(51))


class TestInitialization:
    def test_sttf_grid_frequencies(self):
        params = init_params(KernelFamily.STTF, 8)
        want = [0.03125, 0.09375, 0.15625, 0.21875, 0.28125, 0.34375, 0.40625, 0.46875]
        np.testing.assert_allclose(params.theta[:, 0], want, atol=1e-15)

    def test_chirplet_starts_with_zero_rate(self):
        params = init_params(KernelFamily.CHIRPLET, 4)
        np.testing.assert_allclose(params.theta[:, 0], [0.0625, 0.1875, 0.3125, 0.4375])
        np.testing.assert_array_equal(params.theta[:, 1], 0.0)

    @pytest.mark.parametrize("family", [KernelFamily.MORLET, KernelFamily.LAPLACE])
    def test_wavelet_scales_tile_frequency_band(self, family):
        C = 8
        params = init_params(family, C)
        centers = (np.arange(C) + 0.5) / C
        want = MOTHER_FREQ / (0.02 + 0.48 * centers)
        np.testing.assert_allclose(params.theta[:, 0], want, rtol=1e-12)
        assert np.all(params.theta[:, 0] >= S_MIN) and np.all(params.theta[:, 0] <= S_MAX)

    def test_random_init_is_seeded_and_bounded(self):
        a = init_params(KernelFamily.RANDOM, 4, seed=3)
        b = init_params(KernelFamily.RANDOM, 4, seed=3)
        c = init_params(KernelFamily.RANDOM, 4, seed=4)
        np.testing.assert_array_equal(a.theta, b.theta)
        assert not np.array_equal(a.theta, c.theta)
        assert np.max(np.abs(a.theta)) <= np.sqrt(6.0 / 51)

    def test_init_inside_constraint_box(self):
        for family in PARAMETRIC:
            params = init_params(family, 32)
            np.testing.assert_array_equal(clamp_params(params).theta, params.theta)

    def test_bad_channel_count_rejected(self):
        with pytest.raises(ValueError):
            init_params(KernelFamily.STTF, 0)


class TestKernelParams:
    def test_theta_coerced_to_2d_float64(self):
        params = KernelParams(KernelFamily.STTF, [0.2])
        assert params.theta.shape == (1, 1)
        assert params.theta.dtype == np.float64

    def test_wrong_param_count_rejected(self):
        with pytest.raises(ValueError):
            KernelParams(KernelFamily.CHIRPLET, np.zeros((3, 1)))

    def test_evaluate_kernels_stacks_channels(self):
        params = init_params(KernelFamily.STTF, 5)
        bank = evaluate_kernels(params)
        assert bank.shape == (5, 51)
        for c in range(5):
            np.testing.assert_array_equal(
                bank[c], evaluate_kernel(KernelFamily.STTF, params.theta[c])
            )
