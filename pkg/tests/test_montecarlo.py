import math

import numpy as np
import pytest
from scipy.stats import chi2, kstest, ncx2, norm

from exopt.density import density_grid
from exopt.european import margrabe_closed_form, price_european
from exopt.model import JumpSpec, MarketState, ModelParams
from exopt.montecarlo import (
    BudgetError,
    McConfig,
    mc_density_histogram,
    mc_price_american_lsm,
    mc_price_european,
    simulate_paths,
    write_histogram_csv,
    write_path_summary_csv,
)
from exopt.numerics import NumericsError


ZERO = JumpSpec(0.0, 0.0, 0.1)


def flat_params(**kw):
    base = dict(sigma1=0.2, sigma2=0.3, rho_w=0.5, rho1=0.0, rho2=0.0,
                xi=2.2, eta=0.04, omega=1e-3, Lambda=0.0,
                q1=0.03, q2=0.03, r=0.05, T=1.0)
    base.update(kw)
    return ModelParams(**base)


@pytest.fixture
def state():
    return MarketState(t=0.0, S1=1.05, S2=1.0, v=0.05)


class TestConfig:

    def test_validation(self):
        with pytest.raises(ValueError):
            McConfig(n_paths=0, n_steps=10, seed=1)
        with pytest.raises(ValueError):
            McConfig(n_paths=10, n_steps=0, seed=1)
        with pytest.raises(ValueError):
            McConfig(n_paths=10, n_steps=10, seed=1, scheme="milstein")
        with pytest.raises(ValueError):
            McConfig(n_paths=11, n_steps=10, seed=1, antithetic=True)

    def test_budget_guard(self, params, jumps, state):
        cfg = McConfig(n_paths=10_000, n_steps=10_000, seed=1, budget=10**6)
        with pytest.raises(BudgetError):
            simulate_paths(state, params, *jumps, cfg)


class TestPathLaw:

    def test_worker_count_never_changes_results(self, params, jumps, state):
        cfg = McConfig(n_paths=8192, n_steps=25, seed=42)
        ref = simulate_paths(state, params, *jumps, cfg, workers=1)
        for workers in (4, 8):
            got = simulate_paths(state, params, *jumps, cfg,
                                 workers=workers)
            assert np.array_equal(ref.log_ratio, got.log_ratio)
            assert np.array_equal(ref.variance, got.variance)
            assert np.array_equal(ref.jump_counts, got.jump_counts)

    def test_ratio_is_martingale_with_jumps_on(self, params, jumps, state):
        cfg = McConfig(n_paths=16384, n_steps=50, seed=9)
        batch = simulate_paths(state, params, *jumps, cfg)
        for k in (25, 50):
            s_k = np.exp(batch.log_ratio[:, k])
            se = s_k.std(ddof=1) / math.sqrt(len(s_k))
            assert abs(s_k.mean() - state.s_tilde(params)) < 4.0 * se

    def test_variance_stationary_mean_both_schemes(self, params, jumps):
        v_stat = params.xi * params.eta / (params.xi + params.Lambda)
        st = MarketState(t=0.0, S1=1.05, S2=1.0, v=v_stat)
        for scheme in ("euler", "exact"):
            cfg = McConfig(n_paths=8192, n_steps=100, seed=7, scheme=scheme)
            batch = simulate_paths(st, params, *jumps, cfg)
            v_T = batch.variance[:, -1]
            se = v_T.std(ddof=1) / math.sqrt(len(v_T))
            assert abs(v_T.mean() - v_stat) < 4.0 * se

    def test_lognormal_limit_by_ks(self, state):
        params = flat_params()
        st = MarketState(t=0.0, S1=1.05, S2=1.0, v=0.04)
        cfg = McConfig(n_paths=20_000, n_steps=50, seed=3)
        batch = simulate_paths(st, params, ZERO, ZERO, cfg)
        mu = math.log(st.s_tilde(params)) - 0.5 * params.sigma ** 2 * 0.04
        sd = params.sigma * math.sqrt(0.04)
        res = kstest(batch.log_ratio[:, -1],
                     lambda x: norm.cdf(x, mu, sd))
        assert res.pvalue > 0.05

    def test_jump_counts_poisson_dispersion(self, params, jumps, state):
        cfg = McConfig(n_paths=16384, n_steps=50, seed=13)
        batch = simulate_paths(state, params, *jumps, cfg)
        for leg, spec in enumerate(jumps):
            counts = batch.jump_counts[:, leg]
            lam = spec.lambda_tilde * (params.T - state.t)
            n = len(counts)
            se_mean = math.sqrt(lam / n)
            assert abs(counts.mean() - lam) < 4.0 * se_mean
            disp = counts.var(ddof=1) / counts.mean()
            assert abs(disp - 1.0) < 4.0 * math.sqrt(2.0 / n)

    def test_time_grid_and_shapes(self, params, jumps):
        st = MarketState(t=0.25, S1=1.0, S2=1.0, v=0.05)
        cfg = McConfig(n_paths=100, n_steps=10, seed=1)
        batch = simulate_paths(st, params, *jumps, cfg)
        assert batch.log_ratio.shape == (100, 11)
        assert batch.variance.shape == (100, 11)
        assert batch.jump_counts.shape == (100, 2)
        assert batch.times[0] == 0.25
        assert batch.times[-1] == pytest.approx(params.T, abs=1e-15)
        assert np.all(batch.log_ratio[:, 0] == st.x(params))

    def test_rejects_expired_state(self, params, jumps):
        st = MarketState(t=1.0, S1=1.0, S2=1.0, v=0.05)
        cfg = McConfig(n_paths=10, n_steps=10, seed=1)
        with pytest.raises(ValueError):
            simulate_paths(st, params, *jumps, cfg)


class TestEuropeanEstimator:

    def test_unreachable_strike_prices_zero(self, params, jumps):
        st = MarketState(t=0.0, S1=1e-12, S2=1.0, v=0.05)
        cfg = McConfig(n_paths=2000, n_steps=20, seed=1)
        est = mc_price_european(st, params, *jumps, cfg)
        assert est.mean == 0.0
        assert est.stderr == 0.0

    def test_matches_closed_form_pure_diffusion(self):
        params = flat_params()
        st = MarketState(t=0.0, S1=1.05, S2=1.0, v=0.04)
        cfg = McConfig(n_paths=60_000, n_steps=100, seed=11,
                       antithetic=True)
        est = mc_price_european(st, params, ZERO, ZERO, cfg, workers=4)
        ref = margrabe_closed_form(1.05, 1.0, params.sigma * 0.2, 1.0,
                                   0.03, 0.03)
        assert abs(est.mean - ref) < 3.0 * est.stderr

    def test_matches_transform_pricer(self, params, jumps, state):
        cfg = McConfig(n_paths=60_000, n_steps=100, seed=11,
                       antithetic=True)
        est = mc_price_european(state, params, *jumps, cfg, workers=4)
        ref = price_european(state, params, *jumps).value
        assert abs(est.mean - ref) < 3.0 * est.stderr

    def test_antithetic_reduces_stderr(self, params, jumps, state):
        plain = McConfig(n_paths=20_000, n_steps=50, seed=17)
        paired = McConfig(n_paths=20_000, n_steps=50, seed=17,
                          antithetic=True)
        a = mc_price_european(state, params, *jumps, plain)
        b = mc_price_european(state, params, *jumps, paired)
        assert b.stderr < a.stderr

    def test_identical_config_identical_estimate(self, params, jumps,
                                                 state):
        cfg = McConfig(n_paths=5000, n_steps=20, seed=29)
        a = mc_price_european(state, params, *jumps, cfg, workers=1)
        b = mc_price_european(state, params, *jumps, cfg, workers=8)
        assert a == b


class TestAmericanLsm:

    def test_no_first_yield_collapses_to_european(self, jumps, state):
        params = ModelParams(sigma1=0.25, sigma2=0.18, rho_w=0.35,
                             rho1=-0.5, rho2=-0.3, xi=2.2, eta=0.04,
                             omega=0.35, Lambda=0.15, q1=0.0, q2=0.04,
                             r=0.05, T=1.0)
        cfg = McConfig(n_paths=30_000, n_steps=50, seed=23)
        am = mc_price_american_lsm(state, params, *jumps, cfg)
        eu = mc_price_european(state, params, *jumps, cfg)
        assert abs(am.mean - eu.mean) < 2.0 * am.stderr

    def test_dominates_european_up_to_noise(self, params, jumps, state):
        cfg = McConfig(n_paths=30_000, n_steps=50, seed=23)
        am = mc_price_american_lsm(state, params, *jumps, cfg)
        eu = mc_price_european(state, params, *jumps, cfg)
        assert am.mean >= eu.mean - 2.0 * am.stderr

    def test_premium_appears_when_second_yield_dominates(self, jumps,
                                                         state):
        params = ModelParams(sigma1=0.25, sigma2=0.18, rho_w=0.35,
                             rho1=-0.5, rho2=-0.3, xi=2.2, eta=0.04,
                             omega=0.35, Lambda=0.15, q1=0.02, q2=0.09,
                             r=0.05, T=1.0)
        cfg = McConfig(n_paths=30_000, n_steps=50, seed=31)
        am = mc_price_american_lsm(state, params, *jumps, cfg)
        eu = price_european(state, params, *jumps).value
        assert am.mean > eu + 2.0 * am.stderr

    def test_basis_degree_validated(self, params, jumps, state):
        cfg = McConfig(n_paths=1000, n_steps=10, seed=1)
        with pytest.raises(ValueError):
            mc_price_american_lsm(state, params, *jumps, cfg,
                                  basis_degree=1)

    def test_degenerate_design_raises(self, jumps):
        # frozen variance makes the variance columns collinear with the
        # intercept
        params = flat_params(omega=0.0, q1=0.02, q2=0.09)
        st = MarketState(t=0.0, S1=1.05, S2=1.0, v=0.04)
        cfg = McConfig(n_paths=4000, n_steps=10, seed=5)
        with pytest.raises(NumericsError):
            mc_price_american_lsm(st, params, ZERO, ZERO, cfg)


class TestHistogram:

    def test_against_transition_density(self, params, jumps, state):
        cfg = McConfig(n_paths=120_000, n_steps=120, seed=5,
                       scheme="exact")
        s_edges = np.linspace(0.55, 2.2, 23)
        v_edges = np.linspace(0.0, 0.35, 17)
        hist = mc_density_histogram(state, params, *jumps, cfg,
                                    (s_edges, v_edges), workers=4)
        assert hist.mass.sum() == pytest.approx(1.0, abs=1e-12)
        assert hist.outside_fraction < 1e-3 + 0.01

        gx, gw = np.polynomial.legendre.leggauss(4)
        sm = 0.5 * (s_edges[:-1] + s_edges[1:])
        sh = 0.5 * np.diff(s_edges)
        vm = 0.5 * (v_edges[:-1] + v_edges[1:])
        vh = 0.5 * np.diff(v_edges)
        s_nodes = (sm[:, None] + sh[:, None] * gx[None, :]).ravel()
        v_nodes = (vm[:, None] + vh[:, None] * gx[None, :]).ravel()
        dens = density_grid(1.0, state.s_tilde(params), state.v,
                            s_nodes, v_nodes, params, *jumps)
        d4 = dens.reshape(len(sm), 4, len(vm), 4)
        pred = np.einsum("iajb,a,b->ij", d4, gw, gw) \
            * sh[:, None] * vh[None, :]
        pred /= pred.sum()

        n_in = hist.n_paths * (1.0 - hist.outside_fraction)
        # binomial z-scores need healthy expected counts to mean much
        mask = n_in * pred >= 25.0
        se = np.sqrt(pred * (1.0 - pred) / n_in)
        z = np.abs(hist.mass - pred) / np.where(se > 0, se, 1.0)
        assert mask.sum() > 80
        assert z[mask].max() < 4.0

    def test_v_marginal_matches_cir_chi_square(self, params, jumps,
                                               state):
        cfg = McConfig(n_paths=120_000, n_steps=120, seed=5,
                       scheme="exact")
        s_edges = np.linspace(0.55, 2.2, 23)
        v_edges = np.linspace(0.0, 0.35, 17)
        hist = mc_density_histogram(state, params, *jumps, cfg,
                                    (s_edges, v_edges), workers=4)
        kap = params.xi + params.Lambda
        tau = params.T - state.t
        c = 2.0 * kap / (params.omega ** 2 * -math.expm1(-kap * tau))
        df = 4.0 * params.xi * params.eta / params.omega ** 2
        nc = 2.0 * c * state.v * math.exp(-kap * tau)
        cdf = ncx2.cdf(2.0 * c * v_edges, df, nc)
        p_bin = np.diff(cdf) / (cdf[-1] - cdf[0])

        n_in = hist.n_paths * (1.0 - hist.outside_fraction)
        obs = hist.mass.sum(axis=0) * n_in
        exp = p_bin * n_in
        keep = exp >= 5.0
        stat = float(((obs[keep] - exp[keep]) ** 2 / exp[keep]).sum())
        dof = int(keep.sum()) - 1
        assert 1.0 - chi2.cdf(stat, dof) > 0.05

    def test_empty_grid_rejected(self, params, jumps, state):
        cfg = McConfig(n_paths=1000, n_steps=10, seed=1)
        with pytest.raises(ValueError):
            mc_density_histogram(state, params, *jumps, cfg,
                                 ([100.0, 101.0], [0.9, 1.0]))


class TestCsvExports:

    def test_histogram_round_trip(self, tmp_path, params, jumps, state):
        cfg = McConfig(n_paths=4000, n_steps=20, seed=2)
        hist = mc_density_histogram(state, params, *jumps, cfg,
                                    (np.linspace(0.5, 2.5, 6),
                                     np.linspace(0.0, 0.4, 5)))
        out = tmp_path / "hist.csv"
        write_histogram_csv(out, hist)
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "s_lo,s_hi,v_lo,v_hi,mass"
        assert len(rows) == 1 + 5 * 4
        total = sum(float(r.split(",")[-1]) for r in rows[1:])
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_path_summary(self, tmp_path, params, jumps, state):
        cfg = McConfig(n_paths=500, n_steps=8, seed=2)
        batch = simulate_paths(state, params, *jumps, cfg)
        out = tmp_path / "paths.csv"
        write_path_summary_csv(out, batch)
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 1 + 9
        first = rows[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[1]) == pytest.approx(state.s_tilde(params),
                                                rel=1e-12)
