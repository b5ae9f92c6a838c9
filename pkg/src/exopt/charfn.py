"""Transform-domain building blocks for the yield-ratio process.

The log yield ratio is conditionally exponential-affine in the shared
variance, so every pricer in this package works from the same small set of
objects: the coefficient bundle of the transformed valuation PDE, the
affine exponents (B, D), the conditional kernels f and f1, the
variance-resolved kernels f2/f21, the density kernel h, and the
Laplace-domain generator hbar.

All kernels are pure functions of value inputs and can be evaluated in
parallel without shared state. Vectorised private helpers (`_coeffs`,
`_bd`) carry the hot paths; the public operations are scalar wrappers
with full validation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from ._core import h_block
from .model import JumpSpec, ModelParams, compensator
from .numerics import NumericsError, lower_incomplete_gamma

__all__ = [
    "CharTerms",
    "DegenerateParameterError",
    "char_terms",
    "affine_BD",
    "f_kernel",
    "f1_kernel",
    "hbar",
    "h_kernel",
    "f2_f21_kernels",
]


class DegenerateParameterError(ValueError):
    """Confluent coefficient point where the affine exponents lose their closed form."""


@dataclass(frozen=True)
class CharTerms:
    """Coefficient bundle of the transformed valuation PDE at one frequency.

    Carries the frequency-dependent coefficients (Theta, eps, Psi, F, chi)
    together with the frequency-free model scalars needed to re-evaluate
    them at shifted arguments, so kernel routines can consume a single
    object. ``i_phi_psi`` is the product i*phi*Psi assembled without the
    removable 1/(i*phi) singularity; callers that need the drift term
    should prefer it over ``Psi`` near phi = 0.
    """

    phi: complex
    alpha: float
    Theta: complex
    eps: complex
    Psi: complex
    i_phi_psi: complex
    F: complex
    chi: complex
    omega: float
    omega2: float
    kplus: float
    coupling: float
    sig2: float


def _coeffs(w, kplus: float, omega: float, coupling: float, sig2: float):
    """Theta, eps, F at transform argument w (scalar or array, complex ok)."""
    w = np.asarray(w, dtype=np.complex128)
    theta = kplus + 1j * w * omega * coupling
    eps = sig2 * (1j * w - w * w)
    f = np.sqrt(theta * theta - omega * omega * eps)
    # principal root; Re F >= 0 because Re(F^2) > 0 keeps F^2 off the cut
    f = np.where(f.real < 0.0, -f, f)
    return theta, eps, f


def _clog1p(z):
    """log(1 + z) for complex z, accurate when |z| is small."""
    z = np.asarray(z, dtype=np.complex128)
    x, y = z.real, z.imag
    return (0.5 * np.log1p(2.0 * x + x * x + y * y)
            + 1j * np.arctan2(y, 1.0 + x))


def _bd(tau: float, w, kplus: float, omega: float, coupling: float,
        sig2: float, alpha: float):
    """Affine exponents B(tau, w), D(tau, w), vectorised over w.

    Uses the decaying-exponential rearrangement of the closed form: with
    den = (Theta+F) - (Theta-F)e^{-F tau},

        B = (alpha/omega^2) [(Theta-F) tau - 2 log(den / 2F)]
        D = eps (1 - e^{-F tau}) / den,

    which is algebraically the textbook chi-ratio expression but keeps all
    exponentials bounded and the log argument away from the branch cut.
    den cannot vanish: |e^{-F tau}| < 1 while |(Theta+F)| >= |(Theta-F)|
    for admissible coefficients (asserted by the step-refinement test).

    Theta - F is O(omega^2) while Theta and F are O(1), so it is formed
    from the conjugate identity (Theta-F)(Theta+F) = omega^2 eps rather
    than by subtraction, and the log via log1p of (Theta-F)(1-e^{-F tau});
    otherwise the alpha/omega^2 prefactor amplifies rounding noise into
    the integrands at small omega.
    """
    theta, eps, f = _coeffs(w, kplus, omega, coupling, sig2)
    em = np.exp(-f * tau)
    one_m = -np.expm1(-f * tau)
    omega2 = omega * omega
    tm = omega2 * eps / (theta + f)
    den = (theta + f) - tm * em
    b = alpha * eps * tau / (theta + f) \
        - (2.0 * alpha / omega2) * _clog1p(tm * one_m / (2.0 * f))
    d = eps * one_m / den
    return b, d


def char_terms(phi: complex, params: ModelParams, jump1: JumpSpec,
               jump2: JumpSpec) -> CharTerms:
    """Evaluate the PDE coefficient bundle at one transform argument.

    Parameters
    ----------
    phi : complex
        Transform argument. phi = 0 is handled by the analytic limit of
        Psi; the exact product i*phi*Psi is exposed as ``i_phi_psi``.
    params : ModelParams
        Pricing-measure model parameters.
    jump1, jump2 : JumpSpec
        Jump components already expressed under the pricing measure.
    """
    w = complex(phi)
    kplus = params.xi + params.Lambda
    sig2 = params.sigma ** 2
    alpha = params.xi * params.eta
    omega = params.omega

    theta = kplus + 1j * w * omega * params.coupling
    eps = sig2 * (1j * w - w * w)
    f = cmath.sqrt(theta * theta - omega * omega * eps)
    if f.real < 0.0:
        f = -f

    den = theta - f
    chi = (theta + f) / den if den != 0.0 else complex(math.inf, 0.0)

    comp = compensator(jump1, jump2)
    # i*phi*Psi multiplied through: no removable singularity at phi = 0
    ipp = (
        -1j * w * comp
        - jump1.lambda_tilde * (complex(jump1.cf(w)) - 1.0)
        - jump2.lambda_tilde * (complex(jump2.cf(-w)) - 1.0)
    )
    if w == 0.0:
        psi = complex(
            -comp
            + jump1.lambda_tilde * jump1.gamma
            - jump2.lambda_tilde * jump2.gamma
        )
    else:
        psi = ipp / (1j * w)

    return CharTerms(
        phi=w,
        alpha=alpha,
        Theta=theta,
        eps=eps,
        Psi=psi,
        i_phi_psi=ipp,
        F=f,
        chi=chi,
        omega=omega,
        omega2=omega * omega,
        kplus=kplus,
        coupling=params.coupling,
        sig2=sig2,
    )


def affine_BD(tau: float, phi: complex, terms: CharTerms) -> tuple[complex, complex]:
    """Affine exponents (B, D) at horizon tau for the terms' frequency.

    ``phi`` must be the argument ``terms`` was built at; it is part of the
    signature for bookkeeping at call sites. B is continuous in tau from
    B(0, phi) = 0: the implementation evaluates the closed form in a
    rearrangement whose log argument starts at 1 and never winds around
    the origin, so the principal branch is the continuous one.
    """
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    chi = terms.chi
    if cmath.isfinite(chi) and abs(1.0 - chi) < 1e-12:
        raise DegenerateParameterError(
            f"confluent transform point: |1 - chi| = {abs(1.0 - chi):.3e} at "
            f"phi = {terms.phi!r}"
        )
    b, d = _bd(float(tau), terms.phi, terms.kplus, terms.omega,
               terms.coupling, terms.sig2, terms.alpha)
    return complex(b), complex(d)


def f_kernel(tau: float, z: float, v: float, phi: complex,
             terms: CharTerms) -> complex:
    """Conditional transform kernel f(tau, z, v; phi).

    f = exp{i phi ln z + B(tau, -phi) + D(tau, -phi) v} with the affine
    exponents evaluated at the reflected argument.
    """
    if z <= 0.0 or v <= 0.0:
        raise ValueError("z and v must be positive")
    w = complex(phi)
    b, d = _bd(float(tau), -w, terms.kplus, terms.omega, terms.coupling,
               terms.sig2, terms.alpha)
    return cmath.exp(1j * w * math.log(z) + complex(b) + complex(d) * v)


def f1_kernel(tau: float, z: float, v: float, phi: complex,
              params: ModelParams, jump1: JumpSpec | None = None,
              jump2: JumpSpec | None = None) -> complex:
    """Shifted-measure kernel f1(tau, z, v; phi).

    Every coefficient is evaluated at the shifted argument, so that
    f1(phi) * z = f(phi - i) holds identically; the jump arguments are
    accepted for interface symmetry but the exponent is jump-free.
    """
    if z <= 0.0 or v <= 0.0:
        raise ValueError("z and v must be positive")
    w = complex(phi)
    alpha = params.xi * params.eta
    b, d = _bd(float(tau), -w + 1j, params.xi + params.Lambda, params.omega,
               params.coupling, params.sigma ** 2, alpha)
    return cmath.exp(1j * w * math.log(z) + complex(b) + complex(d) * v)


def hbar(t: float, T: float, phi: complex, vartheta: complex, x_T: float,
         v_T: float, params: ModelParams, jump1: JumpSpec,
         jump2: JumpSpec) -> complex:
    """Laplace-domain solution of the transformed valuation PDE.

    Returns the closed form for the v-Laplace transform of the Fourier
    transform of the transition density, evaluated at Laplace variable
    ``vartheta`` with terminal data (x_T, v_T). Assembled in log scale;
    the incomplete-gamma factor uses the normalized lower function along
    the straight ray to its complex argument.

    Parameters
    ----------
    t, T : float
        Valuation and terminal times, t < T.
    phi : complex
        Fourier argument.
    vartheta : complex
        Laplace argument, Re(vartheta) >= 0.
    x_T, v_T : float
        Terminal log ratio and terminal variance (v_T > 0).
    """
    if not t < T:
        raise ValueError("t must precede T")
    w_lap = complex(vartheta)
    if w_lap.real < 0.0:
        raise ValueError("Re(vartheta) must be nonnegative")
    alpha = params.xi * params.eta
    omega2 = params.omega ** 2
    u = 2.0 * alpha / omega2 - 1.0
    if u <= 0.0:
        raise ValueError(
            "2*xi*eta > omega^2 is required for the Laplace-domain solution"
        )
    if v_T <= 0.0:
        raise ValueError("v_T must be positive")

    terms = char_terms(phi, params, jump1, jump2)
    w = terms.phi
    theta, f = terms.Theta, terms.F
    tau = T - t

    em = cmath.exp(-f * tau)
    one_m = 1.0 - em
    a = omega2 * w_lap - theta + f
    big_w = a * one_m + 2.0 * f * em

    log_pref = (
        ((alpha - omega2) * (theta - f) / omega2 + theta - terms.i_phi_psi) * tau
        + (2.0 - 2.0 * alpha / omega2)
        * (cmath.log(2.0 * f) - f * tau - cmath.log(big_w))
        + 1j * w * x_T
        - ((theta - f) / omega2) * v_T
        - 2.0 * f * v_T * a / (omega2 * big_w)
    )
    beta = 4.0 * f * f * v_T * em / (omega2 * one_m * big_w)
    return cmath.exp(log_pref) * complex(lower_incomplete_gamma(u, beta))


def h_kernel(tau: float, phi: complex, v: float, v_T: float,
             params: ModelParams) -> complex:
    """Variance-resolved transition kernel h(tau, phi, v; v_T).

    At phi = 0 this is the transition density of the variance process in
    v_T. Assembled from log magnitudes (including a log-scaled complex
    Bessel I) so large |F| tau cannot overflow.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if v <= 0.0 or v_T <= 0.0:
        raise ValueError("variances must be positive")
    alpha = params.xi * params.eta
    omega2 = params.omega ** 2
    if 2.0 * alpha / omega2 - 1.0 < 0.0:
        raise ValueError("2*xi*eta >= omega^2 is required for the density kernel")

    theta, _, f = _coeffs(complex(phi), params.xi + params.Lambda,
                          params.omega, params.coupling, params.sigma ** 2)
    out = h_block(float(tau), theta, f, float(v),
                  np.asarray([v_T], dtype=np.float64), alpha, omega2)
    val = complex(out[0, 0])
    if not (math.isfinite(val.real) and math.isfinite(val.imag)):
        raise NumericsError(
            f"density kernel did not converge at tau={tau!r}, phi={phi!r}, "
            f"v={v!r}, v_T={v_T!r}"
        )
    return val


def f2_f21_kernels(tau: float, z: float, v: float, phi: complex, v_u: float,
                   params: ModelParams) -> tuple[complex, complex]:
    """Variance-resolved kernels (f2, f21) used by the early-exercise terms.

    f2 = e^{i phi ln z} h(tau, -phi, v; v_u) and f21 shifts the kernel
    argument by -i, so z * f21(phi) = f2(phi - i).
    """
    if z <= 0.0:
        raise ValueError("z must be positive")
    w = complex(phi)
    pref = cmath.exp(1j * w * math.log(z))
    f2 = pref * h_kernel(tau, -w, v, v_u, params)
    f21 = pref * h_kernel(tau, -(w - 1j), v, v_u, params)
    return f2, f21
