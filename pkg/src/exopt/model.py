"""Model parameters, admissibility checks, and measure-change quantities.

Everything downstream prices in units of the second asset's yield process,
so parameters are specified directly under the pricing measure attached to
that numeraire. The physical-measure block exists only to express the
market prices of risk and the jump-measure transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Diffusion, variance, and market parameters under the pricing measure.

    sigma1, sigma2 scale sqrt(v) in each asset's diffusion; rho_w is the
    correlation between the two asset Brownian drivers, rho1/rho2 the
    correlations of each driver with the variance driver. xi, eta, omega
    are the variance process mean-reversion speed, long-run level, and
    vol-of-variance; Lambda is the variance risk premium coefficient.
    """

    sigma1: float
    sigma2: float
    rho_w: float
    rho1: float
    rho2: float
    xi: float
    eta: float
    omega: float
    Lambda: float
    q1: float
    q2: float
    r: float
    T: float

    @property
    def sigma(self) -> float:
        """Net diffusion scale of the log yield ratio."""
        return math.sqrt(
            self.sigma1 ** 2 + self.sigma2 ** 2
            - 2.0 * self.rho_w * self.sigma1 * self.sigma2
        )

    @property
    def rho_bar(self) -> float:
        """Correlation between the net ratio driver and the variance driver."""
        return (self.sigma1 * self.rho1 - self.sigma2 * self.rho2) / self.sigma

    @property
    def coupling(self) -> float:
        """sigma * rho_bar = sigma1*rho1 - sigma2*rho2, as it enters the transform."""
        return self.sigma1 * self.rho1 - self.sigma2 * self.rho2


@dataclass(frozen=True)
class JumpSpec:
    """One asset's jump component under the pricing measure.

    Jump sizes are normal in the log (Merton family): Y ~ N(gamma, delta^2).
    """

    lambda_tilde: float
    gamma: float
    delta: float

    @property
    def kappa_up(self) -> float:
        """E[e^Y - 1]."""
        return math.expm1(self.gamma + 0.5 * self.delta ** 2)

    @property
    def kappa_down(self) -> float:
        """E[e^-Y - 1]."""
        return math.expm1(-self.gamma + 0.5 * self.delta ** 2)

    def cf(self, u):
        """Characteristic-like transform E[e^{-i u Y}], complex u or arrays."""
        return np.exp(-1j * u * self.gamma - 0.5 * u * u * self.delta ** 2)


@dataclass(frozen=True)
class MarketState:
    """Valuation-time market state."""

    t: float
    S1: float
    S2: float
    v: float

    def s_tilde(self, params: ModelParams) -> float:
        """Asset yield ratio S1*e^{q1 t} / (S2*e^{q2 t})."""
        return self.S1 * math.exp(params.q1 * self.t) / (
            self.S2 * math.exp(params.q2 * self.t)
        )

    def x(self, params: ModelParams) -> float:
        return math.log(self.s_tilde(params))


@dataclass(frozen=True)
class PhysicalDrifts:
    """Physical-measure drift and jump data for the risk-premium formulas."""

    mu1: float
    mu2: float
    lambda1: float
    lambda2: float
    kappa1: float
    kappa2: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "model admissible"
        return "violations: " + "; ".join(self.violations)


def validate_params(params: ModelParams, jump1: JumpSpec, jump2: JumpSpec) -> ValidationReport:
    """Check every admissibility condition; violations are data, not errors."""
    bad: list[str] = []

    if not params.sigma1 > 0.0:
        bad.append("sigma1 must be > 0")
    if not params.sigma2 > 0.0:
        bad.append("sigma2 must be > 0")
    for name in ("rho_w", "rho1", "rho2"):
        val = getattr(params, name)
        if not -1.0 < val < 1.0:
            bad.append(f"{name} must lie in (-1, 1)")
    if not params.xi > 0.0:
        bad.append("xi must be > 0")
    if not params.eta > 0.0:
        bad.append("eta must be > 0")
    if not params.omega > 0.0:
        bad.append("omega must be > 0")
    if params.Lambda < 0.0:
        bad.append("Lambda must be >= 0")
    if params.q1 < 0.0 or params.q2 < 0.0:
        bad.append("dividend yields must be >= 0")
    if params.r < 0.0:
        bad.append("r must be >= 0")
    if not params.T > 0.0:
        bad.append("T must be > 0")

    if bad:
        # Derived quantities below assume the basics hold.
        return ValidationReport(tuple(bad))

    if 2.0 * params.xi * params.eta < params.omega ** 2:
        bad.append("Feller condition 2*xi*eta >= omega^2 fails")

    rho_cap = min(params.xi / params.omega, 1.0)
    if params.rho1 >= rho_cap:
        bad.append("rho bound: rho1 must be < min(xi/omega, 1)")
    if params.rho2 >= rho_cap:
        bad.append("rho bound: rho2 must be < min(xi/omega, 1)")

    if not params.sigma > 0.0:
        bad.append("net diffusion scale sigma must be > 0")
    else:
        if abs(params.rho_bar) > 1.0:
            bad.append("rho_bar must lie in [-1, 1]")

    for tag, jump in (("jump1", jump1), ("jump2", jump2)):
        if jump.lambda_tilde < 0.0:
            bad.append(f"{tag}: intensity must be >= 0")
        if jump.delta < 0.0:
            bad.append(f"{tag}: jump-size std must be >= 0")

    return ValidationReport(tuple(bad))


def risk_premia(
    params: ModelParams,
    phys: PhysicalDrifts,
    jump1: JumpSpec,
    jump2: JumpSpec,
    v: float,
) -> tuple[float, float, float]:
    """Market prices of diffusion and variance risk at variance level v.

    Returns (psi1, psi2, zeta). The psi numerators net the physical drift,
    carry, compensators, and the pricing-measure jump compensation.
    """
    if v <= 0.0:
        raise ValueError("variance must be > 0")
    sq = math.sqrt(v)
    psi1 = (
        phys.mu1 + params.q1 - params.r
        - params.rho_w * params.sigma1 * params.sigma1 * v
        - phys.lambda1 * phys.kappa1
        + jump1.lambda_tilde * jump1.kappa_up
    ) / (params.sigma1 * sq)
    psi2 = (
        phys.mu2 + params.q2 - params.r
        - params.sigma2 ** 2 * v
        - phys.lambda2 * phys.kappa2
        - jump2.lambda_tilde * jump2.kappa_down
    ) / (params.sigma2 * sq)
    zeta = params.Lambda / params.omega * sq
    return psi1, psi2, zeta


def transform_jump_measure(
    lambda_p: float,
    gamma_p: float,
    delta_p: float,
    gamma_tilt: float,
    nu: float,
) -> JumpSpec:
    """Map a physical-measure jump component through the exponential tilt.

    The intensity picks up e^{nu} times the tilt moment-generating factor;
    the normal jump-size law keeps its spread and shifts its mean by
    gamma_tilt * delta_p^2.
    """
    if lambda_p < 0.0:
        raise ValueError("intensity must be >= 0")
    if delta_p < 0.0:
        raise ValueError("jump-size std must be >= 0")
    lam = lambda_p * math.exp(nu + gamma_tilt * gamma_p + 0.5 * gamma_tilt ** 2 * delta_p ** 2)
    return JumpSpec(
        lambda_tilde=lam,
        gamma=gamma_p + gamma_tilt * delta_p ** 2,
        delta=delta_p,
    )


def compensator(jump1: JumpSpec, jump2: JumpSpec) -> float:
    """Drift compensation lam1*E[e^Y1 - 1] + lam2*E[e^-Y2 - 1] of the ratio."""
    return jump1.lambda_tilde * jump1.kappa_up + jump2.lambda_tilde * jump2.kappa_down


def with_lambda(params: ModelParams, Lambda: float) -> ModelParams:
    return replace(params, Lambda=Lambda)
