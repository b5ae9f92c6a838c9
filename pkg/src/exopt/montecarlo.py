"""Simulation oracle for the yield-ratio model.

Paths of (ln ratio, variance) evolve under the pricing measure: the
variance follows the square-root process, the log ratio follows its
exact exponential solution with the per-step integrated variance
approximated from the variance path, Gaussian increments correlated
through the ratio-variance coupling, and two compound Poisson legs
(up marks on the first, down marks on the second) compensated in the
drift. Within a step only the mark totals enter values on the step
grid, so each leg draws a Poisson count and one Gaussian for the
summed marks; event positions inside a step are irrelevant here.

Randomness is counter-based: paths are partitioned into fixed blocks
of 4096 and each block owns a Philox stream keyed by the seed and the
block index. Block results are assembled in index order, so estimates
are bit-identical for any worker count. Estimators stream block by
block and never hold full paths; simulate_paths stores them and is
meant for diagnostic sizes (memory grows with n_paths * n_steps).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import JumpSpec, MarketState, ModelParams, compensator
from .numerics import NumericsError

__all__ = [
    "BudgetError",
    "McConfig",
    "McEstimate",
    "McHistogram",
    "PathBatch",
    "mc_density_histogram",
    "mc_price_american_lsm",
    "mc_price_european",
    "simulate_paths",
    "write_histogram_csv",
    "write_path_summary_csv",
]

BLOCK = 4096


class BudgetError(RuntimeError):
    """Requested simulation exceeds the configured work budget."""


@dataclass(frozen=True)
class McConfig:
    """Simulation size, seed, and scheme selection.

    scheme "euler" is full-truncation Euler for the variance; "exact"
    samples the variance transition from its noncentral chi-square law
    and recovers the variance-driving integral from the increment.
    Antithetic pairing flips every Gaussian draw of the second half of
    each block against the first half (counts and exact-variance draws
    are shared), and requires an even path count.
    """

    n_paths: int
    n_steps: int
    seed: int
    scheme: str = "euler"
    antithetic: bool = False
    budget: int = 200_000_000

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be at least 1")
        if self.scheme not in ("euler", "exact"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic pairing needs an even n_paths")
        if self.budget < 1:
            raise ValueError("budget must be positive")


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with its standard error."""

    mean: float
    stderr: float
    n_paths: int
    seed: int


@dataclass(frozen=True)
class PathBatch:
    """Simulated joint paths on the step grid.

    log_ratio and variance have shape (n_paths, n_steps + 1);
    jump_counts holds the per-path total event counts of the two legs,
    shape (n_paths, 2).
    """

    times: np.ndarray
    log_ratio: np.ndarray
    variance: np.ndarray
    jump_counts: np.ndarray


@dataclass(frozen=True)
class McHistogram:
    """Normalized joint histogram of the terminal (ratio, variance).

    mass sums to one over the grid; the fraction of paths landing
    outside it is reported separately.
    """

    mass: np.ndarray
    s_edges: np.ndarray
    v_edges: np.ndarray
    n_paths: int
    outside_fraction: float


def _block_rng(seed: int, index: int) -> np.random.Generator:
    # disjoint streams: the block index sits in the second counter word,
    # far above any in-block advance
    return np.random.Generator(
        np.random.Philox(key=seed, counter=[0, index, 0, 0]))


def _block_sizes(n_paths: int):
    sizes = [BLOCK] * (n_paths // BLOCK)
    if n_paths % BLOCK:
        sizes.append(n_paths % BLOCK)
    return sizes


def _pair(rng_draw, n: int, antithetic: bool):
    """Draw n Gaussians, the second half mirroring the first if paired."""
    if not antithetic:
        return rng_draw(n)
    half = rng_draw(n // 2)
    return np.concatenate([half, -half])


def _shared(rng_draw, n: int, antithetic: bool):
    """Draw n non-Gaussian variates, shared across antithetic pairs."""
    if not antithetic:
        return rng_draw(n)
    half = rng_draw(n // 2)
    return np.concatenate([half, half])


def _walk_block(index: int, n: int, state: MarketState, params: ModelParams,
                jump1: JumpSpec, jump2: JumpSpec, cfg: McConfig,
                keep_paths: bool):
    rng = _block_rng(cfg.seed, index)
    tau = params.T - state.t
    dt = tau / cfg.n_steps
    anti = cfg.antithetic

    sig = params.sigma
    rho = params.coupling / sig
    if abs(rho) > 1.0:
        raise ValueError("ratio-variance correlation outside [-1, 1]")
    orth = math.sqrt(1.0 - rho * rho)
    kplus = params.xi + params.Lambda
    drift0 = params.xi * params.eta
    comp = compensator(jump1, jump2)
    l1, l2 = jump1.lambda_tilde, jump2.lambda_tilde

    if cfg.scheme == "exact":
        c = 2.0 * kplus / (params.omega ** 2 * -math.expm1(-kplus * dt))
        df = 4.0 * drift0 / params.omega ** 2
        decay = math.exp(-kplus * dt)

    x = np.full(n, state.x(params))
    v = np.full(n, state.v)
    c1 = np.zeros(n, dtype=np.int64)
    c2 = np.zeros(n, dtype=np.int64)
    if keep_paths:
        xs = np.empty((n, cfg.n_steps + 1))
        vs = np.empty((n, cfg.n_steps + 1))
        xs[:, 0], vs[:, 0] = x, v

    for k in range(cfg.n_steps):
        if cfg.scheme == "euler":
            zv = _pair(rng.standard_normal, n, anti)
            zs = _pair(rng.standard_normal, n, anti)
            vp = np.maximum(v, 0.0)
            dw = math.sqrt(dt) * np.sqrt(vp) * (rho * zv + orth * zs)
            x = x + (-0.5 * sig ** 2 * vp - comp) * dt + sig * dw
            v = v + (drift0 - kplus * vp) * dt \
                + params.omega * math.sqrt(dt) * np.sqrt(vp) * zv
        else:
            zs = _pair(rng.standard_normal, n, anti)
            nc = 2.0 * c * v * decay
            vn = _shared(lambda m: rng.noncentral_chisquare(df, nc[:m]),
                         n, anti) / (2.0 * c)
            vbar = 0.5 * (v + vn)
            # variance-driving integral recovered from the increment
            iz = (vn - v - (drift0 - kplus * vbar) * dt) / params.omega
            x = x + (-0.5 * sig ** 2 * vbar - comp) * dt \
                + sig * (rho * iz
                         + orth * np.sqrt(vbar * dt) * zs)
            v = vn

        m1 = _shared(lambda m: rng.poisson(l1 * dt, m), n, anti)
        m2 = _shared(lambda m: rng.poisson(l2 * dt, m), n, anti)
        z1 = _pair(rng.standard_normal, n, anti)
        z2 = _pair(rng.standard_normal, n, anti)
        x = x + m1 * jump1.gamma + jump1.delta * np.sqrt(m1) * z1 \
            - (m2 * jump2.gamma + jump2.delta * np.sqrt(m2) * z2)
        c1 += m1
        c2 += m2
        if keep_paths:
            xs[:, k + 1], vs[:, k + 1] = x, v

    counts = np.stack([c1, c2], axis=1)
    if keep_paths:
        return xs, vs, counts
    return x, v, counts


def _run_blocks(state, params, jump1, jump2, cfg, keep_paths, workers):
    if cfg.n_paths * cfg.n_steps > cfg.budget:
        raise BudgetError(
            f"{cfg.n_paths} paths x {cfg.n_steps} steps exceeds the "
            f"budget of {cfg.budget} path-steps")
    if state.t >= params.T:
        raise ValueError("state is at or past maturity")
    sizes = _block_sizes(cfg.n_paths)
    if cfg.antithetic and any(s % 2 for s in sizes):
        raise ValueError("antithetic pairing must not straddle blocks")

    def job(args):
        index, n = args
        return _walk_block(index, n, state, params, jump1, jump2, cfg,
                           keep_paths)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, enumerate(sizes)))
    else:
        results = [job(a) for a in enumerate(sizes)]
    return results


def simulate_paths(state: MarketState, params: ModelParams, jump1: JumpSpec,
                   jump2: JumpSpec, cfg: McConfig,
                   workers: int = 1) -> PathBatch:
    """Simulate full joint paths from the state's time to maturity.

    Stores every step of every path; intended for diagnostics and the
    exercise-policy regression, not for large pricing runs (the
    streaming estimators below handle those).
    """
    results = _run_blocks(state, params, jump1, jump2, cfg, True, workers)
    tau = params.T - state.t
    times = state.t + np.linspace(0.0, tau, cfg.n_steps + 1)
    return PathBatch(
        times=times,
        log_ratio=np.concatenate([r[0] for r in results]),
        variance=np.concatenate([r[1] for r in results]),
        jump_counts=np.concatenate([r[2] for r in results]),
    )


def _estimate(values: np.ndarray, cfg: McConfig) -> McEstimate:
    """Mean and standard error, antithetic pairs collapsed first."""
    if cfg.antithetic:
        values = values.reshape(-1)
        out = []
        at = 0
        for n in _block_sizes(cfg.n_paths):
            half = n // 2
            out.append(0.5 * (values[at:at + half]
                              + values[at + half:at + n]))
            at += n
        values = np.concatenate(out)
    n = len(values)
    mean = float(np.sum(values) / n)
    if n > 1:
        sd = math.sqrt(float(np.sum((values - mean) ** 2)) / (n - 1))
        stderr = sd / math.sqrt(n)
    else:
        stderr = math.inf
    return McEstimate(mean, stderr, cfg.n_paths, cfg.seed)


def _dimless_payoff(x: np.ndarray, u: float, q1: float, q2: float):
    """Exercise value at calendar time u in numeraire units."""
    return math.exp(-q1 * u) * np.maximum(
        np.exp(x) - math.exp((q1 - q2) * u), 0.0)


def mc_price_european(state: MarketState, params: ModelParams,
                      jump1: JumpSpec, jump2: JumpSpec, cfg: McConfig,
                      workers: int = 1) -> McEstimate:
    """Terminal-payoff estimate of the European contract value.

    Streams terminal states block by block; the mean is scaled back to
    currency by the numeraire at the valuation time.
    """
    results = _run_blocks(state, params, jump1, jump2, cfg, False, workers)
    pay = np.concatenate([
        _dimless_payoff(r[0], params.T, params.q1, params.q2)
        for r in results])
    scale = state.S2 * math.exp(params.q2 * state.t)
    est = _estimate(pay, cfg)
    return McEstimate(scale * est.mean, scale * est.stderr,
                      est.n_paths, est.seed)


def _poly_basis(s: np.ndarray, v: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones_like(s)]
    for total in range(1, degree + 1):
        for j in range(total + 1):
            cols.append(s ** (total - j) * v ** j)
    return np.stack(cols, axis=1)


def mc_price_american_lsm(state: MarketState, params: ModelParams,
                          jump1: JumpSpec, jump2: JumpSpec, cfg: McConfig,
                          basis_degree: int = 2,
                          workers: int = 1) -> McEstimate:
    """Least-squares exercise-policy estimate of the American value.

    Exercise dates are the step grid. The continuation value of the
    in-the-money paths is regressed on a total-degree polynomial basis
    in (ratio, variance), cross terms included; payoffs carry their own
    numeraire discounting so realized cash flows regress directly. The
    policy estimate is low-biased. Raises NumericsError if the
    regression design loses rank; dates with fewer in-the-money paths
    than basis columns keep the continuation branch.
    """
    if basis_degree < 2:
        raise ValueError("basis_degree must be at least 2")
    batch = simulate_paths(state, params, jump1, jump2, cfg, workers)
    s = np.exp(batch.log_ratio)
    n_cols = (basis_degree + 1) * (basis_degree + 2) // 2

    cash = _dimless_payoff(batch.log_ratio[:, -1], params.T,
                           params.q1, params.q2)
    for k in range(cfg.n_steps - 1, 0, -1):
        u = float(batch.times[k])
        pay = _dimless_payoff(batch.log_ratio[:, k], u,
                              params.q1, params.q2)
        itm = pay > 0.0
        if int(itm.sum()) < n_cols + 2:
            continue
        sk, vk = s[itm, k], batch.variance[itm, k]
        design = _poly_basis(sk / sk.mean(),
                             vk / max(vk.mean(), 1e-12), basis_degree)
        beta, _, rank, _ = np.linalg.lstsq(design, cash[itm], rcond=None)
        if rank < n_cols:
            raise NumericsError(
                f"continuation regression lost rank at step {k}")
        cont = design @ beta
        exercise = pay[itm] > cont
        idx = np.nonzero(itm)[0][exercise]
        cash[idx] = pay[itm][exercise]

    est = _estimate(cash, cfg)
    now = _dimless_payoff(np.array([state.x(params)]), state.t,
                          params.q1, params.q2)[0]
    scale = state.S2 * math.exp(params.q2 * state.t)
    return McEstimate(scale * max(est.mean, float(now)),
                      scale * est.stderr, est.n_paths, est.seed)


def mc_density_histogram(state: MarketState, params: ModelParams,
                         jump1: JumpSpec, jump2: JumpSpec, cfg: McConfig,
                         grid, workers: int = 1) -> McHistogram:
    """Joint histogram of the terminal (ratio, variance) over grid.

    grid is an (s_edges, v_edges) pair. Mass is normalized over the
    paths that land inside the grid, so it sums to one exactly; the
    spilled fraction is reported for coverage checks.
    """
    s_edges, v_edges = (np.asarray(g, dtype=np.float64) for g in grid)
    results = _run_blocks(state, params, jump1, jump2, cfg, False, workers)
    s_T = np.exp(np.concatenate([r[0] for r in results]))
    v_T = np.concatenate([r[1] for r in results])
    hist, _, _ = np.histogram2d(s_T, v_T, bins=(s_edges, v_edges))
    inside = hist.sum()
    if inside == 0:
        raise ValueError("grid captured no paths")
    return McHistogram(hist / inside, s_edges, v_edges, cfg.n_paths,
                       1.0 - inside / cfg.n_paths)


def write_histogram_csv(path, hist: McHistogram) -> None:
    """Write histogram bins as CSV rows (s_lo, s_hi, v_lo, v_hi, mass)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("s_lo,s_hi,v_lo,v_hi,mass\n")
        for i in range(hist.mass.shape[0]):
            for j in range(hist.mass.shape[1]):
                fh.write(f"{hist.s_edges[i]:.12g},{hist.s_edges[i + 1]:.12g},"
                         f"{hist.v_edges[j]:.12g},{hist.v_edges[j + 1]:.12g},"
                         f"{hist.mass[i, j]:.12g}\n")


def write_path_summary_csv(path, batch: PathBatch) -> None:
    """Write per-date cross-sectional summaries of a path batch."""
    s = np.exp(batch.log_ratio)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time,ratio_mean,ratio_std,variance_mean,variance_std\n")
        for k, t in enumerate(batch.times):
            fh.write(f"{t:.12g},{s[:, k].mean():.12g},{s[:, k].std():.12g},"
                     f"{batch.variance[:, k].mean():.12g},"
                     f"{batch.variance[:, k].std():.12g}\n")
