"""Pure-numpy implementations of the hot transform kernels.

Twin of the compiled module `_fastkern`; both expose `besseli_log` and
`h_block` with identical semantics, and tests hold them to agreement at
machine precision. Everything is assembled in log space because the
Bessel factor and the exponential prefactors overflow individually long
before their product does.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

_RESCALE = 1e250
_LOG_RESCALE = np.log(_RESCALE)


def _series_log(nu: float, z: np.ndarray) -> np.ndarray:
    # log I_nu(z) = nu*log(z/2) - lgamma(nu+1) + log(sum_n t_n),
    # t_0 = 1, t_{n+1} = t_n * (z^2/4) / ((n+1)(nu+n+1)).
    q = 0.25 * z * z
    term = np.ones_like(z)
    total = np.ones_like(z)
    scale = np.zeros(z.shape, dtype=np.float64)
    for n in range(2000):
        term = term * q / ((n + 1.0) * (nu + n + 1.0))
        total = total + term
        big = np.abs(total) > _RESCALE
        if big.any():
            term[big] /= _RESCALE
            total[big] /= _RESCALE
            scale[big] += _LOG_RESCALE
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    out = nu * np.log(0.5 * z) - gammaln(nu + 1.0) + np.log(total) + scale
    return out


def _asym_log(nu: float, z: np.ndarray) -> np.ndarray:
    # Large-argument expansion with the subdominant reflected term kept;
    # the reflected phase sign follows the sign of Im z so the two
    # overlapping validity sectors agree on the real axis.
    mu4 = 4.0 * nu * nu
    s_main = np.ones_like(z)
    s_refl = np.ones_like(z)
    term = np.ones_like(z)
    prev = np.full(z.shape, np.inf)
    dead = np.zeros(z.shape, dtype=bool)
    for k in range(1, 40):
        term = term * (mu4 - (2.0 * k - 1.0) ** 2) / (8.0 * k * z)
        mag = np.abs(term)
        # Asymptotic series: stop an element at its smallest term.
        dead |= mag >= prev
        if dead.all():
            break
        live = np.where(dead, 0.0, term)
        s_main = s_main + (-1.0) ** k * live
        s_refl = s_refl + live
        prev = np.where(dead, prev, mag)
        if np.all(mag <= 1e-17):
            break
    half_log = -0.5 * np.log(2.0 * np.pi * z)
    sign = np.where(np.imag(z) >= 0.0, 1.0, -1.0)
    log_main = z + half_log + np.log(s_main)
    log_refl = -z + sign * (nu + 0.5) * np.pi * 1j + half_log + np.log(s_refl)
    swap = np.real(log_refl) > np.real(log_main)
    lo = np.where(swap, log_main, log_refl)
    hi = np.where(swap, log_refl, log_main)
    return hi + np.log1p(np.exp(lo - hi))


def _miller_log(nu: float, z: complex) -> complex:
    # Downward three-term recurrence from an overshoot order, normalized at
    # the fractional order by the large-argument expansion. Covers orders
    # too high for the plain expansion at arguments where the power series
    # cancels catastrophically (near-imaginary z).
    n_int = int(np.floor(nu))
    nu0 = nu - n_int
    # Seeds must start above the oscillatory turning point mu ~ |z| for the
    # minimal solution to dominate by the time the recursion reaches nu.
    extra = 40 + int(1.4 * abs(z))
    mu = nu0 + n_int + extra
    above = 0.0 + 0.0j
    here = 1e-280 + 0.0j
    at_nu = None
    at_nu_scale = 0.0
    scale = 0.0
    while mu > nu0 + 0.5:
        below = above + (2.0 * mu / z) * here
        above, here = here, below
        mu -= 1.0
        m = abs(here)
        if m > _RESCALE:
            here /= m
            above /= m
            scale += np.log(m)
            if at_nu is not None:
                at_nu_scale -= np.log(m)
        if abs(mu - nu) < 0.25:
            at_nu = here
            at_nu_scale = 0.0
    ref = _asym_log(nu0, np.atleast_1d(np.complex128(z)))[0]
    return ref + np.log(at_nu / here) + at_nu_scale


def besseli_log(nu: float, z) -> np.ndarray:
    """log of the modified Bessel function I_nu on the principal branch.

    nu is real and >= 0; z is a complex array (or scalar). The real part
    can be large; callers are expected to combine it with other log-scale
    terms before exponentiating.
    """
    z = np.asarray(z, dtype=np.complex128)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty(z.shape, dtype=np.complex128)

    zero = z == 0.0
    if zero.any():
        out[zero] = 0.0 if nu == 0.0 else -np.inf

    absz = np.abs(z)
    cut = max(12.0, 1.4 * nu * nu + 10.0)
    # The series loses ~(|z| - |Re z|)/ln 10 digits to cancellation, so it
    # keeps only arguments where that stays below ~10; the large-argument
    # expansion needs |z| beyond ~1.4 nu^2, and Miller recursion bridges
    # high orders at near-imaginary arguments.
    cancel = absz - np.abs(z.real)
    series = ~zero & (absz <= cut) & ((absz <= 12.0) | (cancel <= 10.0))
    asym = ~zero & (absz > cut)
    miller = ~(zero | series | asym)

    if series.any():
        out[series] = _series_log(nu, z[series])
    if asym.any():
        out[asym] = _asym_log(nu, z[asym])
    if miller.any():
        for i in np.flatnonzero(miller):
            out[i] = _miller_log(nu, complex(z[i]))
    return out[0] if scalar else out


def h_block(
    tau: float,
    theta: np.ndarray,
    bigf: np.ndarray,
    v: float,
    vt,
    alpha: float,
    omega2: float,
) -> np.ndarray:
    """Variance-resolved transition kernel h(tau, ., v; v_T) on a grid.

    theta and bigf are the transform coefficients Theta and F evaluated on
    the caller's (possibly complex-shifted) frequency grid; vt is the array
    of terminal variance points. Returns an array of shape (len(vt), len(theta)).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.complex128))
    bigf = np.atleast_1d(np.asarray(bigf, dtype=np.complex128))
    vt = np.atleast_1d(np.asarray(vt, dtype=np.float64))

    f_ = bigf[None, :]
    th = theta[None, :]
    vt_ = vt[:, None]

    em2 = np.exp(-0.5 * f_ * tau)          # e^{-F tau/2}, |.| <= 1
    em = em2 * em2
    one_m = -np.expm1(-f_ * tau)           # 1 - e^{-F tau}
    nu = 2.0 * alpha / omega2 - 1.0

    zb = (4.0 * f_ * np.sqrt(vt_ * v) / omega2) * em2 / one_m
    log_i = besseli_log(nu, zb)

    log_h = (
        (th - f_) / omega2 * (v - vt_ + alpha * tau)
        + np.log(2.0 * f_) - np.log(omega2) - np.log(one_m)
        + (alpha / omega2 - 0.5) * (np.log(vt_) - np.log(v) + f_ * tau)
        - (2.0 * f_ / omega2) * (vt_ + v * em) / one_m
        + log_i
    )
    return np.exp(log_h)
