"""Early-exercise boundary behavior at the maturity end.

The boundary's left limit at maturity solves a one-dimensional root
problem balancing the yield carry of both assets against the expected
payoff erosion from jumps across the exercise level. The equation
involves the ratio level, the two yields, and the jump size laws only;
no diffusion parameter or variance level enters, so the limit is flat
in v by construction. For log-normal jump sizes every tail integral
collapses to normal-CDF expressions, with a direct quadrature route
retained for future jump size families.

An infinite limit (first yield zero) means early exercise is never
optimal just before maturity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import norm

from .model import JumpSpec

__all__ = [
    "BoundaryLimitResult",
    "boundary_f",
    "boundary_limit",
    "continuity_condition",
]


@dataclass(frozen=True)
class BoundaryLimitResult:
    """Root diagnostics for the boundary limit at maturity.

    b_limit is the clamped limit (at least 1, infinite when no root
    exists because the first yield vanishes). x_star is the raw root,
    None when there is none, and f_at_one is the balance function at 1
    whose sign decides continuity of the boundary at maturity.
    """

    b_limit: float
    x_star: float | None
    continuous_at_maturity: bool
    f_at_one: float


def _lower_tail_pair(lx, gamma, delta):
    """Plain and e^y-weighted mass of N(gamma, delta^2) below -lx."""
    if delta == 0.0:
        plain = np.where(gamma < -lx, 1.0, 0.0)
        return plain, math.exp(gamma) * plain
    plain = norm.cdf((-lx - gamma) / delta)
    weighted = (math.exp(gamma + 0.5 * delta ** 2)
                * norm.cdf((-lx - gamma - delta ** 2) / delta))
    return plain, weighted


def _lower_tail_pair_quad(lx, gamma, delta):
    """Quadrature route for the same two tail integrals."""
    plain = quad(lambda y: norm.pdf(y, gamma, delta), -np.inf, -lx)[0]
    weighted = quad(lambda y: math.exp(y) * norm.pdf(y, gamma, delta),
                    -np.inf, -lx)[0]
    return plain, weighted


def boundary_f(x, q1: float, q2: float, jump1: JumpSpec, jump2: JumpSpec,
               method: str = "closed"):
    """Balance function whose unique zero locates the boundary limit.

    Positive below the root and negative above it whenever q1 > 0.
    Accepts scalar or array x (x > 0). The down-jump leg reduces to the
    up-jump formulas with the size law reflected, so both legs share
    one tail-pair helper. method "quadrature" integrates the tails
    numerically instead of using the closed normal-CDF forms.
    """
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(x_arr <= 0.0):
        raise ValueError("x must be positive")
    lx = np.log(x_arr)
    if method == "closed":
        tails = _lower_tail_pair
    elif method == "quadrature":
        if x_arr.ndim:
            raise ValueError("quadrature route is scalar only")
        tails = _lower_tail_pair_quad
    else:
        raise ValueError(f"unknown method {method!r}")

    p1, w1 = tails(lx, jump1.gamma, jump1.delta)
    p2, w2 = tails(lx, -jump2.gamma, jump2.delta)
    f = (q2 + jump1.lambda_tilde * p1 + jump2.lambda_tilde * p2
         - x_arr * (q1 + jump1.lambda_tilde * w1 + jump2.lambda_tilde * w2))
    return float(f) if x_arr.ndim == 0 else f


def boundary_limit(q1: float, q2: float, jump1: JumpSpec, jump2: JumpSpec,
                   tol: float = 1e-12) -> BoundaryLimitResult:
    """Boundary limit at maturity as the clamped root of boundary_f.

    The root is bracketed by geometric expansion (the balance function
    starts positive near zero and is strictly decreasing when q1 > 0)
    and polished by Brent's method until |f| < tol. With q1 = 0 the
    function never crosses zero: the limit is infinite and exercising
    just before maturity is never optimal. Raises ValueError for
    negative yields or when both yields and both intensities vanish.
    """
    if q1 < 0.0 or q2 < 0.0:
        raise ValueError("yields must be nonnegative")
    mass = q2 + jump1.lambda_tilde + jump2.lambda_tilde
    if q1 == 0.0 and mass == 0.0:
        raise ValueError("degenerate inputs: no yield and no jumps")
    f_one = boundary_f(1.0, q1, q2, jump1, jump2)

    if q1 == 0.0:
        return BoundaryLimitResult(math.inf, None, False, f_one)
    if mass == 0.0:
        # f = -x q1 < 0 everywhere; the root degenerates to the origin
        return BoundaryLimitResult(1.0, 0.0, True, f_one)

    def f(x):
        return boundary_f(x, q1, q2, jump1, jump2)

    lo = min(1.0, mass / q1)
    for _ in range(200):
        if f(lo) > 0.0:
            break
        lo /= 8.0
    else:
        raise RuntimeError("failed to bracket the root from below")
    hi = max(8.0 * lo, 1.0)
    for _ in range(200):
        if f(hi) < 0.0:
            break
        hi *= 8.0
    else:
        raise RuntimeError("failed to bracket the root from above")

    x_star = brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16)
    while abs(f(x_star)) >= tol and hi - lo > 1e-15 * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        x_star = 0.5 * (lo + hi)

    b = max(1.0, x_star)
    return BoundaryLimitResult(b, x_star, b == 1.0, f_one)


def continuity_condition(q1: float, q2: float, jump1: JumpSpec,
                         jump2: JumpSpec) -> bool:
    """Whether the boundary is continuous at maturity.

    True when the first yield covers the second plus the expected
    one-sided payoff erosion of both jump legs, which is exactly a
    nonpositive balance function at 1. Requires q1 > 0.
    """
    if q1 <= 0.0:
        raise ValueError("condition requires q1 > 0")
    return boundary_f(1.0, q1, q2, jump1, jump2) <= 0.0
