import cmath
import math

import numpy as np
import pytest
from scipy.stats import poisson

from exopt.numerics import (
    BracketError,
    QuadSpec,
    TruncationError,
    bessel_i_complex,
    bessel_i_unscaled,
    brent_root,
    fourier_half_line,
    fourier_half_line_result,
    gauss_hermite,
    gauss_legendre,
    lower_incomplete_gamma,
    poisson_truncation,
)

mpmath = pytest.importorskip("mpmath")


def _bessel_oracle(nu, z):
    """Scaled I_nu(z) * exp(-|Re z|) at 40 digits."""
    mpmath.mp.dps = 40
    val = mpmath.besseli(nu, mpmath.mpc(z.real, z.imag))
    val *= mpmath.exp(-abs(z.real))
    return complex(val)


class TestGaussRules:
    def test_legendre_exact_for_polynomials(self):
        x, w = gauss_legendre(4)
        assert np.sum(w * x ** 6) == pytest.approx(2.0 / 7.0, rel=1e-14)
        assert np.sum(w) == pytest.approx(2.0, rel=1e-15)

    def test_hermite_is_standard_normal_expectation(self):
        x, w = gauss_hermite(24)
        assert np.sum(w) == pytest.approx(1.0, rel=1e-14)
        assert np.sum(w * x ** 2) == pytest.approx(1.0, rel=1e-13)
        assert np.sum(w * x ** 4) == pytest.approx(3.0, rel=1e-12)
        assert np.sum(w * np.exp(x)) == pytest.approx(math.exp(0.5), rel=1e-12)


class TestFourierHalfLine:
    def test_damped_cosine(self):
        a, b = 0.8, 3.0
        spec = QuadSpec(phi_max=48.0, panels=24)
        got = fourier_half_line(lambda p: np.exp(-a * p) * np.cos(b * p), spec)
        assert got == pytest.approx(a / (a * a + b * b), rel=1e-11)

    def test_gaussian_cosine_and_error_estimate(self):
        spec = QuadSpec(phi_max=14.0, panels=12)
        res = fourier_half_line_result(
            lambda p: np.exp(-0.5 * p * p) * np.cos(p), spec)
        exact = math.sqrt(math.pi / 2.0) * math.exp(-0.5)
        assert res.value == pytest.approx(exact, rel=1e-12)
        # estimate must bound the realized error
        assert abs(res.value - exact) <= res.error_estimate + 1e-13
        assert res.evaluations > 0

    def test_complex_integrand_splits_real_imag(self):
        spec = QuadSpec(phi_max=40.0)
        res = fourier_half_line_result(lambda p: np.exp((1j - 1.0) * p), spec)
        assert res.value == pytest.approx(0.5, rel=1e-10)
        assert res.imag_residue == pytest.approx(0.5, rel=1e-10)

    def test_undecayed_envelope_is_rejected(self):
        spec = QuadSpec(phi_max=200.0)
        with pytest.raises(TruncationError) as exc:
            fourier_half_line(lambda p: 1.0 / (1.0 + p * p), spec)
        assert exc.value.envelope > 0.0

    def test_oscillatory_needle(self):
        # fast oscillation against slow decay; adaptivity must resolve it
        a, b = 0.5, 40.0
        spec = QuadSpec(phi_max=80.0, panels=32)
        got = fourier_half_line(lambda p: np.exp(-a * p) * np.cos(b * p), spec)
        assert got == pytest.approx(a / (a * a + b * b), rel=1e-8)


class TestBesselI:
    # fan of arguments straddling the series/asymptotic/recurrence regions,
    # including near-imaginary z where the series cancels catastrophically
    CASES = [
        (0.0, 3.0 + 0.5j), (0.0, 24.9 + 0.0j), (0.0, 25.1 + 0.0j),
        (0.43, 0.01 + 0.01j), (0.43, 120.0j),
        (1.0, -30.0 + 5.0j), (1.0, 40.0 + 35.0j),
        (2.37, 20.0j), (2.37, 200.0 + 199.0j),
        (7.5, 8.0 + 6.0j), (7.5, 60.0 - 80.0j), (7.5, -10.0 + 90.0j),
        (16.0, 0.5 + 120.0j), (16.0, 200.0 + 199.0j),
    ]

    @pytest.mark.parametrize("nu,z", CASES)
    def test_against_high_precision_oracle(self, nu, z):
        log_mag, phase = bessel_i_complex(nu, z)
        got = math.exp(log_mag) * complex(math.cos(phase), math.sin(phase))
        want = _bessel_oracle(nu, z)
        assert abs(got - want) <= 5e-12 * abs(want)

    def test_recurrence_identity(self):
        # I_{nu-1}(z) - I_{nu+1}(z) = (2 nu / z) I_nu(z), scaled form
        rng = np.random.default_rng(11)
        for _ in range(40):
            nu = rng.uniform(1.1, 9.0)
            z = complex(rng.uniform(-40, 60), rng.uniform(-60, 60))
            if abs(z) < 0.5:
                continue
            vals = []
            for order in (nu - 1.0, nu, nu + 1.0):
                lm, ph = bessel_i_complex(order, z)
                vals.append(cmath.exp(complex(lm, ph)))
            lhs = vals[0] - vals[2]
            rhs = (2.0 * nu / z) * vals[1]
            scale = max(abs(v) for v in vals)
            assert abs(lhs - rhs) <= 1e-9 * scale

    def test_unscaled_overflow_guard(self):
        from exopt.numerics import NumericsError
        assert bessel_i_unscaled(0.0, 5.0) == pytest.approx(27.239871823604442, rel=1e-12)
        with pytest.raises(NumericsError):
            bessel_i_unscaled(0.0, 800.0)

    def test_rejects_negative_order(self):
        with pytest.raises(ValueError):
            bessel_i_complex(-0.5, 1.0 + 0.0j)


class TestLowerIncompleteGamma:
    CASES = [
        (0.3, 0.2 + 0.0j), (0.3, 3.0 + 4.0j), (0.3, -2.0 + 1.0j),
        (1.7, 0.5j), (1.7, 10.0 + 0.0j), (1.7, -5.0 - 3.0j),
        (5.5, 50.0 + 10.0j), (5.5, 2.0 - 2.0j), (0.44, 6.0 + 0.1j),
    ]

    @pytest.mark.parametrize("u,beta", CASES)
    def test_against_mpmath(self, u, beta):
        mpmath.mp.dps = 40
        want = complex(mpmath.gammainc(u, 0, mpmath.mpc(beta.real, beta.imag),
                                       regularized=True))
        got = lower_incomplete_gamma(u, beta)
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))

    def test_straight_ray_convention(self):
        # integral along the segment 0 -> beta, independently parameterized
        u, beta = 1.3, -4.0 + 3.0j
        mpmath.mp.dps = 40
        bb = mpmath.mpc(beta.real, beta.imag)
        ray = mpmath.quad(
            lambda s: mpmath.e ** (-s * bb) * (s * bb) ** (u - 1.0) * bb,
            [0, 1]) / mpmath.gamma(u)
        got = lower_incomplete_gamma(u, beta)
        assert abs(got - complex(ray)) <= 1e-12

    def test_series_cf_agree_at_crossover(self):
        from exopt.numerics import _lower_gamma_series, _upper_gamma_cf
        u = 2.1
        for arg in (0.3, -0.7, 1.2):
            b = (u + 1.0) * cmath.exp(1j * arg)
            series = _lower_gamma_series(u, b)
            cf = 1.0 - _upper_gamma_cf(u, b)
            assert abs(series - cf) < 1e-13

    def test_zero_and_domain(self):
        assert lower_incomplete_gamma(1.0, 0.0) == 0.0
        with pytest.raises(ValueError):
            lower_incomplete_gamma(0.0, 1.0)
        with pytest.raises(ValueError):
            lower_incomplete_gamma(-1.0, 1.0)


class TestPoissonTruncation:
    def test_matches_scipy_pmf(self):
        m, w = poisson_truncation(3.7, 1e-10)
        np.testing.assert_allclose(w, poisson.pmf(np.arange(m + 1), 3.7),
                                   rtol=1e-13)
        assert w.sum() >= 1.0 - 1e-10

    def test_minimality(self):
        m, w = poisson_truncation(3.7, 1e-10)
        assert w[:-1].sum() < 1.0 - 1e-10

    def test_large_rate_stability(self):
        m, w = poisson_truncation(1e4, 1e-8)
        assert np.all(np.isfinite(w))
        assert w.sum() >= 1.0 - 1e-8
        assert abs(m - 1e4) < 20.0 * math.sqrt(1e4)

    def test_zero_rate(self):
        m, w = poisson_truncation(0.0, 1e-12)
        assert m == 0
        np.testing.assert_array_equal(w, [1.0])


class TestBrentRoot:
    def test_finds_cosine_root(self):
        got = brent_root(math.cos, 0.0, 2.0, 1e-12)
        assert got == pytest.approx(math.pi / 2.0, abs=1e-11)

    def test_endpoint_root_returned_exactly(self):
        assert brent_root(lambda x: x, 0.0, 1.0, 1e-12) == 0.0

    def test_no_bracket_raises(self):
        with pytest.raises(BracketError):
            brent_root(lambda x: 1.0 + x * x, -1.0, 1.0, 1e-12)
