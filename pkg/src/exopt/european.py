"""European exchange option pricing via the transform representation.

The option is priced in units of the second asset's yield process; the
log strike is fixed by the yield differential. The double Poisson series
over jump counts is aggregated through per-leg truncated mixture factors
so that both exercise-probability integrals run on one frequency grid.
The conditional jump-sum expectation inside each term has closed normal
forms for the lognormal size family; a Gauss-Hermite route is kept as a
cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, poisson

from .charfn import _bd
from .model import (JumpSpec, MarketState, ModelParams, compensator,
                    transform_jump_measure)
from .numerics import (NumericsError, QuadSpec, fourier_half_line_result,
                       gauss_hermite, gauss_legendre)
from .density import _grow_phi_max, _hermite_phase_limit

__all__ = [
    "PriceResult",
    "ProbabilityPair",
    "p1e_p2e",
    "price_european",
    "price_european_dual",
    "dual_market_view",
    "margrabe_closed_form",
    "european_surface",
    "ipde_residual",
    "log_strike",
]


@dataclass(frozen=True)
class PriceResult:
    """Priced option with the factors of the two-asset closed form."""

    value: float
    q_hat_1: float
    q_hat_2: float
    series_terms_used: tuple[int, int]
    quadrature_error_estimate: float
    clamp_adjustment: float = 0.0


@dataclass(frozen=True)
class ProbabilityPair:
    """Exercise probabilities under the two pricing measures.

    Iterates as (p1, p2) so it unpacks like a plain pair; the quadrature
    error estimate and any clamp applied to keep the values in [0, 1]
    ride along as diagnostics.
    """

    p1: float
    p2: float
    error_estimate: float
    clamp_adjustment: float

    def __iter__(self):
        return iter((self.p1, self.p2))


def log_strike(params: ModelParams) -> float:
    """Log strike of the yield-ratio call, set by the yield differential."""
    return (params.q1 - params.q2) * params.T


def _poisson_orders(rate: float) -> int:
    return int(math.ceil(rate + 10.0 * math.sqrt(rate) + 5.0))


def _leg_factor(w, pw, gamma, delta, tilt, sign):
    """Truncated Poisson mixture of E[e^{sign(tilt + iw) Y(m)}] over the
    jump count m, where Y(m) is a sum of m independent sizes and pw the
    Poisson weights.

    tilt 0 gives the plain phase mixture entering the second probability;
    tilt 1 the ratio-weighted one entering the first.
    """
    m = np.arange(len(pw))
    arg = sign * (tilt + 1j * w)
    a = np.exp(arg[:, None] * (m * gamma)[None, :]
               + 0.5 * (arg ** 2)[:, None] * (m * delta ** 2)[None, :])
    return a @ pw


def _leg_factor_hermite(w, pw, gamma, delta, tilt, sign, herm_x, herm_w):
    """Quadrature twin of _leg_factor: the size expectation per count is
    integrated against the normal law instead of folded.

    Nodes lose phase accuracy once |w| times the mixture spread passes
    the order-dependent limit; those contributions are below working
    precision and are masked to zero, mirroring the density module.
    """
    cut = _hermite_phase_limit(len(herm_x))
    out = np.zeros(w.shape, dtype=np.complex128)
    arg = sign * (tilt + 1j * w)
    for mm, p in enumerate(pw):
        mu, s = mm * gamma, delta * math.sqrt(mm)
        if s == 0.0:
            out += p * np.exp(arg * mu)
            continue
        val = np.einsum("k,jk->j", herm_w,
                        np.exp(arg[:, None] * (mu + s * herm_x)[None, :]))
        out += p * np.where(np.abs(w) * s > cut, 0.0, val)
    return out


def _poisson_weights(tau, jump1, jump2, orders):
    return (poisson.pmf(np.arange(orders[0] + 1), jump1.lambda_tilde * tau),
            poisson.pmf(np.arange(orders[1] + 1), jump2.lambda_tilde * tau))


def _mixture_factors(w, pw1, pw2, jump1, jump2, route, herm=None):
    """Aggregated jump factors for the two integrands.

    Leg 1 enters the log ratio positively and leg 2 negatively; the
    ratio-weighted factor tilts both legs by the realized jump sum.
    """
    if route == "hermite":
        hx, hw = herm
        a2 = (_leg_factor_hermite(w, pw1, jump1.gamma, jump1.delta,
                                  0.0, +1.0, hx, hw)
              * _leg_factor_hermite(w, pw2, jump2.gamma, jump2.delta,
                                    0.0, -1.0, hx, hw))
        a1 = (_leg_factor_hermite(w, pw1, jump1.gamma, jump1.delta,
                                  1.0, +1.0, hx, hw)
              * _leg_factor_hermite(w, pw2, jump2.gamma, jump2.delta,
                                    1.0, -1.0, hx, hw))
    else:
        a2 = (_leg_factor(w, pw1, jump1.gamma, jump1.delta, 0.0, +1.0)
              * _leg_factor(w, pw2, jump2.gamma, jump2.delta, 0.0, -1.0))
        a1 = (_leg_factor(w, pw1, jump1.gamma, jump1.delta, 1.0, +1.0)
              * _leg_factor(w, pw2, jump2.gamma, jump2.delta, 1.0, -1.0))
    return a1, a2


def _affine_kernels(tau, w, v, params):
    """exp(B + D v) at -w and at the ratio-weighted shift -w + i."""
    kp = params.xi + params.Lambda
    alpha = params.xi * params.eta
    b2, d2 = _bd(tau, -w, kp, params.omega, params.coupling,
                 params.sigma ** 2, alpha)
    b1, d1 = _bd(tau, -w + 1j, kp, params.omega, params.coupling,
                 params.sigma ** 2, alpha)
    return np.exp(b1 + d1 * v), np.exp(b2 + d2 * v)


def _routes_integrand(tau, v, params, x, jump1=None, jump2=None,
                      orders=None, route="fold", herm=None):
    """Vectorized integrand returning both Gil-Pelaez rows at once.

    x is the phase offset ln z - K with z already carrying the
    compensator drift; row 0 is the ratio-weighted route, row 1 the
    plain one.
    """
    with_jumps = jump1 is not None and jump2 is not None
    if with_jumps:
        c = math.exp(-compensator(jump1, jump2) * tau)
        pw1, pw2 = _poisson_weights(tau, jump1, jump2, orders)

    def integrand(w):
        w = np.atleast_1d(np.asarray(w, dtype=np.float64))
        w = np.where(w == 0.0, 1e-9, w)
        k1, k2 = _affine_kernels(tau, w, v, params)
        if with_jumps:
            a1, a2 = _mixture_factors(w, pw1, pw2, jump1, jump2,
                                      route, herm)
            k1 = k1 * a1 * c
            k2 = k2 * a2
        ph = np.exp(1j * w * x)
        return (np.stack([k1, k2]) * ph).imag / w

    return integrand


def p1e_p2e(tau: float, z: float, v: float, K: float, params: ModelParams,
            jump1: JumpSpec | None = None, jump2: JumpSpec | None = None,
            spec: QuadSpec | None = None) -> ProbabilityPair:
    """Exercise probabilities of the yield-ratio call.

    Each is one half plus a folded half-line integral of the respective
    characteristic kernel against the strike phase; the first uses the
    ratio-weighted kernel (frequency shifted by i), the second the plain
    one. z is the series argument, already carrying the compensator
    drift. When jump specs are given the Poisson mixtures are folded
    into both integrands, which turns the pair into the aggregated
    in-the-money factors of the price.
    """
    if z <= 0.0 or v <= 0.0:
        raise ValueError("z and v must be positive")
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    if tau == 0.0:
        p = 1.0 if math.log(z) > K else (0.5 if math.log(z) == K else 0.0)
        return ProbabilityPair(p, p, 0.0, 0.0)
    spec = spec or QuadSpec()
    orders = None
    if jump1 is not None and jump2 is not None:
        orders = (_poisson_orders(jump1.lambda_tilde * tau),
                  _poisson_orders(jump2.lambda_tilde * tau))
    integrand = _routes_integrand(tau, v, params, math.log(z) - K,
                                  jump1, jump2, orders)
    sized, _ = _grow_phi_max(lambda w: integrand(w)[1], spec)
    res1 = fourier_half_line_result(lambda w: integrand(w)[0], sized)
    res2 = fourier_half_line_result(lambda w: integrand(w)[1], sized)
    p1 = 0.5 + res1.value / math.pi
    p2 = 0.5 + res2.value / math.pi
    clamp = sum(max(0.0, -p) + max(0.0, p - 1.0) for p in (p1, p2))
    return ProbabilityPair(min(max(p1, 0.0), 1.0), min(max(p2, 0.0), 1.0),
                           (res1.error_estimate + res2.error_estimate)
                           / math.pi, clamp)


def _series_tail(tau, jump1, jump2, orders):
    return max(poisson.sf(orders[0], jump1.lambda_tilde * tau),
               poisson.sf(orders[1], jump2.lambda_tilde * tau))


def price_european(state: MarketState, params: ModelParams, jump1: JumpSpec,
                   jump2: JumpSpec, quad=None, spec: QuadSpec | None = None,
                   jump_expectation: str = "fold") -> PriceResult:
    """Value of the European exchange option at the given market state.

    The returned value is nominal: the dimensionless yield-ratio price
    scaled by S2 e^{q2 t}, equal by construction to
    S1 e^{-q1 (T-t)} q_hat_1 - S2 e^{-q2 (T-t)} q_hat_2.

    jump_expectation selects the conditional jump-sum expectation:
    "fold" uses the closed normal forms, "hermite" the quadrature route
    (cross-check; quad may supply nodes as an object with herm_x and
    herm_w attributes).
    """
    if state.t >= params.T:
        raise ValueError("state.t must be before expiry")
    if jump_expectation not in ("fold", "hermite"):
        raise ValueError("jump_expectation must be 'fold' or 'hermite'")
    spec = spec or QuadSpec()
    herm = None
    if jump_expectation == "hermite":
        herm = ((quad.herm_x, quad.herm_w) if quad is not None
                else gauss_hermite(64))
    tau = params.T - state.t
    s_tilde = state.s_tilde(params)
    K = log_strike(params)
    comp = compensator(jump1, jump2)
    x = math.log(s_tilde) - comp * tau - K
    orders = [_poisson_orders(jump1.lambda_tilde * tau),
              _poisson_orders(jump2.lambda_tilde * tau)]
    df1 = state.S1 * math.exp(-params.q1 * tau)
    df2 = state.S2 * math.exp(-params.q2 * tau)
    scale = df1 + df2

    for _ in range(8):
        integrand = _routes_integrand(tau, state.v, params, x, jump1, jump2,
                                      tuple(orders), jump_expectation, herm)
        sized, _ = _grow_phi_max(lambda w: integrand(w)[1], spec)
        res1 = fourier_half_line_result(lambda w: integrand(w)[0], sized)
        res2 = fourier_half_line_result(lambda w: integrand(w)[1], sized)
        q1_hat = 0.5 + res1.value / math.pi
        q2_hat = 0.5 + res2.value / math.pi
        value = df1 * q1_hat - df2 * q2_hat
        tail = _series_tail(tau, jump1, jump2, orders)
        if tail * scale < 1e-8 * max(abs(value), 1e-10 * scale):
            break
        orders = [o + 5 for o in orders]
    else:
        raise NumericsError(
            f"jump series truncation stalled: tail bound {tail * scale:.3e} "
            f"against target {1e-8 * max(abs(value), 1e-10 * scale):.3e}")

    clamp = sum(max(0.0, -p) + max(0.0, p - 1.0) for p in (q1_hat, q2_hat))
    q1_hat = min(max(q1_hat, 0.0), 1.0)
    q2_hat = min(max(q2_hat, 0.0), 1.0)
    value = df1 * q1_hat - df2 * q2_hat
    if value < 0.0:
        # deep out of the money both factors vanish; pin the identity
        # by moving the smaller factor rather than clipping the value
        clamp += -value
        q2_hat = min(max(df1 * q1_hat / df2, 0.0), 1.0) if df2 > 0.0 else 0.0
        value = df1 * q1_hat - df2 * q2_hat
    err = (df1 * res1.error_estimate + df2 * res2.error_estimate) / math.pi
    return PriceResult(value=value, q_hat_1=q1_hat, q_hat_2=q2_hat,
                       series_terms_used=tuple(orders),
                       quadrature_error_estimate=err,
                       clamp_adjustment=clamp)


def dual_market_view(state: MarketState, params: ModelParams,
                     jump1: JumpSpec, jump2: JumpSpec):
    """Swapped-numeraire view of the same market.

    Asset roles exchange, and the jump measures are re-weighted by the
    realized ratio jump: each leg's intensity picks up its expected
    ratio move and its lognormal mean shifts by one size variance, legs
    trading places because the reciprocal ratio inverts jump direction.
    The variance premium shifts by the ratio-variance covariation.
    """
    dual_params = ModelParams(
        sigma1=params.sigma2, sigma2=params.sigma1, rho_w=params.rho_w,
        rho1=params.rho2, rho2=params.rho1, xi=params.xi, eta=params.eta,
        omega=params.omega,
        Lambda=params.Lambda - params.omega * params.coupling,
        q1=params.q2, q2=params.q1, r=params.r, T=params.T)
    dual_jump1 = transform_jump_measure(jump2.lambda_tilde, jump2.gamma,
                                        jump2.delta, -1.0, 0.0)
    dual_jump2 = transform_jump_measure(jump1.lambda_tilde, jump1.gamma,
                                        jump1.delta, +1.0, 0.0)
    dual_state = MarketState(t=state.t, S1=state.S2, S2=state.S1, v=state.v)
    return dual_state, dual_params, dual_jump1, dual_jump2


def price_european_dual(state: MarketState, params: ModelParams,
                        jump1: JumpSpec, jump2: JumpSpec, quad=None,
                        spec: QuadSpec | None = None) -> PriceResult:
    """Price the contract through the reciprocal-ratio put.

    Under the first asset's yield numeraire the call becomes a put on
    the reciprocal ratio; its value is the swapped-view call completed
    by put-call parity, and the in-the-money factors are complements of
    the swapped ones. Agreement with price_european is a two-sided
    consistency check of the measure-change machinery.
    """
    ds, dp, dj1, dj2 = dual_market_view(state, params, jump1, jump2)
    put = price_european(ds, dp, dj1, dj2, quad=quad, spec=spec)
    tau = params.T - state.t
    df1 = state.S1 * math.exp(-params.q1 * tau)
    df2 = state.S2 * math.exp(-params.q2 * tau)
    q1_hat = 1.0 - put.q_hat_2
    q2_hat = 1.0 - put.q_hat_1
    value = df1 * q1_hat - df2 * q2_hat
    clamp = put.clamp_adjustment
    if value < 0.0:
        clamp += -value
        q2_hat = min(max(df1 * q1_hat / df2, 0.0), 1.0) if df2 > 0.0 else 0.0
        value = df1 * q1_hat - df2 * q2_hat
    return PriceResult(value=value, q_hat_1=q1_hat, q_hat_2=q2_hat,
                       series_terms_used=put.series_terms_used,
                       quadrature_error_estimate=put.quadrature_error_estimate,
                       clamp_adjustment=clamp)


def margrabe_closed_form(S1: float, S2: float, sigma_total: float,
                         tau: float, q1: float, q2: float) -> float:
    """Classical two-asset exchange value under constant volatility."""
    if sigma_total <= 0.0 or tau <= 0.0:
        raise ValueError("sigma_total and tau must be positive")
    sd = sigma_total * math.sqrt(tau)
    d1 = (math.log(S1 / S2) + (q2 - q1) * tau) / sd + 0.5 * sd
    d2 = d1 - sd
    return (S1 * math.exp(-q1 * tau) * norm.cdf(d1)
            - S2 * math.exp(-q2 * tau) * norm.cdf(d2))


def european_surface(t_grid, s_grid, v_grid, params: ModelParams,
                     jump1: JumpSpec, jump2: JumpSpec,
                     spec: QuadSpec | None = None) -> np.ndarray:
    """Dimensionless price surface on a (t, s_tilde, v) grid.

    One frequency grid is shared across each time slice, so the whole
    slice reduces to two matrix products; this keeps large surfaces for
    finite-difference consistency checks affordable. Returns shape
    (len(t), len(s), len(v)).
    """
    spec = spec or QuadSpec()
    t_grid = np.asarray(t_grid, dtype=np.float64)
    s_grid = np.asarray(s_grid, dtype=np.float64)
    v_grid = np.asarray(v_grid, dtype=np.float64)
    if np.any(s_grid <= 0.0) or np.any(v_grid <= 0.0):
        raise ValueError("s_grid and v_grid must be positive")
    K = log_strike(params)
    comp = compensator(jump1, jump2)
    df1 = math.exp(-params.q1 * params.T)
    df2 = math.exp(-params.q2 * params.T)
    kp = params.xi + params.Lambda
    out = np.empty((len(t_grid), len(s_grid), len(v_grid)))
    for it, t in enumerate(t_grid):
        tau = params.T - float(t)
        if tau <= 0.0:
            raise ValueError("t_grid must lie strictly before expiry")
        orders = (_poisson_orders(jump1.lambda_tilde * tau),
                  _poisson_orders(jump2.lambda_tilde * tau))
        pw1, pw2 = _poisson_weights(tau, jump1, jump2, orders)
        vmid = float(np.median(v_grid))

        def probe(w):
            w = np.atleast_1d(np.asarray(w, dtype=np.float64))
            _, k2 = _affine_kernels(tau, w, vmid, params)
            _, a2 = _mixture_factors(w, pw1, pw2, jump1, jump2, "fold")
            return k2 * a2 / np.maximum(np.abs(w), 1.0)

        sized, _ = _grow_phi_max(probe, spec)
        x = np.log(s_grid) - comp * tau - K
        rate = float(np.max(np.abs(x))) + 1.0
        panels = max(sized.panels,
                     int(math.ceil(sized.phi_max * rate
                                   / (0.66 * sized.points_per_panel))))
        gx, gw = gauss_legendre(sized.points_per_panel)
        edges = np.linspace(0.0, sized.phi_max, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * np.diff(edges)
        nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
        wq = (half[:, None] * gw[None, :]).ravel()

        alpha = params.xi * params.eta
        b2, d2 = _bd(tau, -nodes, kp, params.omega, params.coupling,
                     params.sigma ** 2, alpha)
        b1, d1 = _bd(tau, -nodes + 1j, kp, params.omega, params.coupling,
                     params.sigma ** 2, alpha)
        k1 = np.exp(b1[None, :] + d1[None, :] * v_grid[:, None])
        k2 = np.exp(b2[None, :] + d2[None, :] * v_grid[:, None])
        a1, a2 = _mixture_factors(nodes, pw1, pw2, jump1, jump2, "fold")
        c = math.exp(-comp * tau)
        ph = np.exp(1j * np.outer(x, nodes)) * (wq / nodes)[None, :]
        g1 = (ph @ (k1 * (a1 * c)[None, :]).T).imag
        g2 = (ph @ (k2 * a2[None, :]).T).imag
        q1_hat = 0.5 + g1 / math.pi
        q2_hat = 0.5 + g2 / math.pi
        out[it] = df1 * s_grid[:, None] * q1_hat - df2 * q2_hat
    return out


def _fd_first(fm, f0, fp, hm, hp):
    # differenced before scaling so constants give exactly zero
    return (hm * hm * (fp - f0) - hp * hp * (fm - f0)) \
        / (hm * hp * (hm + hp))


def _fd_second(fm, f0, fp, hm, hp):
    return 2.0 * (hp * (fm - f0) + hm * (fp - f0)) \
        / (hm * hp * (hm + hp))


def ipde_residual(surface, point, params: ModelParams, jump1: JumpSpec,
                  jump2: JumpSpec, hermite_order: int = 48) -> float:
    """Residual of the pricing operator at one interior grid node.

    surface is (t_grid, s_grid, v_grid, values) with values indexed
    [t, s, v]; point is an index triple. Derivatives use second-order
    differences tolerant of non-uniform spacing. Jump expectations
    integrate the time slice against the size laws by Gauss-Hermite,
    extending linearly in the ratio beyond the grid edges. The residual
    is near zero on a surface produced by the European pricer.
    """
    t_grid, s_grid, v_grid, vals = surface
    t_grid = np.asarray(t_grid, dtype=np.float64)
    s_grid = np.asarray(s_grid, dtype=np.float64)
    v_grid = np.asarray(v_grid, dtype=np.float64)
    vals = np.asarray(vals, dtype=np.float64)
    i, j, k = point
    if not (0 < i < len(t_grid) - 1 and 0 < j < len(s_grid) - 1
            and 0 < k < len(v_grid) - 1):
        raise ValueError("point must be interior to the grid")

    s = s_grid[j]
    v = v_grid[k]
    ht_m, ht_p = t_grid[i] - t_grid[i - 1], t_grid[i + 1] - t_grid[i]
    hs_m, hs_p = s_grid[j] - s_grid[j - 1], s_grid[j + 1] - s_grid[j]
    hv_m, hv_p = v_grid[k] - v_grid[k - 1], v_grid[k + 1] - v_grid[k]

    f0 = vals[i, j, k]
    dt = _fd_first(vals[i - 1, j, k], f0, vals[i + 1, j, k], ht_m, ht_p)
    ds = _fd_first(vals[i, j - 1, k], f0, vals[i, j + 1, k], hs_m, hs_p)
    dv = _fd_first(vals[i, j, k - 1], f0, vals[i, j, k + 1], hv_m, hv_p)
    dss = _fd_second(vals[i, j - 1, k], f0, vals[i, j + 1, k], hs_m, hs_p)
    dvv = _fd_second(vals[i, j, k - 1], f0, vals[i, j, k + 1], hv_m, hv_p)
    dsv = (vals[i, j + 1, k + 1] - vals[i, j + 1, k - 1]
           - vals[i, j - 1, k + 1] + vals[i, j - 1, k - 1]) \
        / ((hs_m + hs_p) * (hv_m + hv_p))

    comp = compensator(jump1, jump2)
    resid = (dt
             + 0.5 * params.sigma ** 2 * v * s * s * dss
             + params.omega * params.coupling * v * s * dsv
             + 0.5 * params.omega ** 2 * v * dvv
             + (params.xi * params.eta - (params.xi + params.Lambda) * v) * dv
             - comp * s * ds)

    slice_s = vals[i, :, k]

    def surf_at(sq):
        out = np.interp(sq, s_grid, slice_s)
        lo, hi = s_grid[0], s_grid[-1]
        left = sq < lo
        if np.any(left):
            slope = (slice_s[1] - slice_s[0]) / (s_grid[1] - s_grid[0])
            out = np.where(left, slice_s[0] + slope * (sq - lo), out)
        right = sq > hi
        if np.any(right):
            slope = (slice_s[-1] - slice_s[-2]) / (s_grid[-1] - s_grid[-2])
            out = np.where(right, slice_s[-1] + slope * (sq - hi), out)
        return out

    hx, hw = gauss_hermite(hermite_order)
    for jump, sign in ((jump1, +1.0), (jump2, -1.0)):
        if jump.lambda_tilde == 0.0:
            continue
        y = jump.gamma + jump.delta * hx
        shifted = surf_at(s * np.exp(sign * y))
        resid += jump.lambda_tilde * float(hw @ (shifted - f0))
    return float(resid)
