"""Wealth simulation under the physical measure and reward estimation.

Wealth follows dX/X = pi^T dR with the true (hidden) drift driving R, while
every strategy reads only the filter mean of its information regime; this
realizes the partial-information constraint directly, with no change of
measure. Log-wealth accumulates as pi^T dR - 1/2 ||pi^T sigma_R||^2 h per
step, which is exact for a strategy held constant over the step.

All implemented rules are affine in the filter mean, pi(t, m) = G_t m + g_t,
so a strategy is stored as per-node (G, g) arrays; reward estimation runs a
fused simulate/filter/trade loop vectorized over path chunks, with per-path
seed streams so results are independent of chunk size and path order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DriftlabError, ParameterError
from .filters import CovariancePath, FilterPath, Regime, covariance_path
from .market import (
    STREAM_EPS,
    STREAM_W_J,
    STREAM_W_MU,
    STREAM_W_R,
    ExpertSchedule,
    ModelParams,
    PathBundle,
    _OUStepper,
    path_rng,
)
from .numerics import TimeGrid, sym_sqrt
from .value_diffusion import DiffusionValueParts
from .value_discrete import PiecewiseCoefficients


@dataclass(frozen=True)
class StrategySpec:
    """Affine decision rule pi = G_t m + g_t fed by one regime's filter."""

    kind: str
    regime: Regime
    G: np.ndarray  # (N+1, d, d)
    g: np.ndarray  # (N+1, d)

    def rule_at(self, i: int, m: np.ndarray) -> np.ndarray:
        return m @ self.G[i].T + self.g[i]


@dataclass(frozen=True)
class RewardEstimate:
    """Sample mean/stderr of terminal utility across simulated paths."""

    mean: float
    stderr: float
    n_paths: int
    theta: float
    regime: Regime

    def z_score(self, closed_form: float) -> float:
        return (self.mean - closed_form) / self.stderr


def zero_strategy(params: ModelParams, grid: TimeGrid, regime: Regime = Regime.R) -> StrategySpec:
    n = grid.steps + 1
    d = params.d
    return StrategySpec("zero", regime, np.zeros((n, d, d)), np.zeros((n, d)))


def constant_strategy(
    p_vec, params: ModelParams, grid: TimeGrid, regime: Regime = Regime.R
) -> StrategySpec:
    n = grid.steps + 1
    d = params.d
    g = np.tile(np.atleast_1d(np.asarray(p_vec, dtype=float)), (n, 1))
    return StrategySpec("constant", regime, np.zeros((n, d, d)), g)


def myopic_strategy(params: ModelParams, grid: TimeGrid, regime: Regime) -> StrategySpec:
    """Full-information feedback rule applied to the regime's filter mean."""
    n = grid.steps + 1
    base = np.linalg.inv(params.Sigma_R) / (1.0 - params.theta)
    return StrategySpec("myopic", regime, np.tile(base, (n, 1, 1)), np.zeros((n, params.d)))


def diffusion_optimal_strategy(parts: DiffusionValueParts) -> StrategySpec:
    """Optimal rule for regime R or J: myopic plus hedging demand."""
    params = parts.params
    n = parts.grid.steps + 1
    d = params.d
    prec = np.linalg.inv(params.Sigma_R) / (1.0 - params.theta)
    G = np.empty((n, d, d))
    g = np.empty((n, d))
    Q = parts.qpath.Q
    for i in range(n):
        G[i] = prec @ (np.eye(d) + 2.0 * Q[i] @ parts.coeffs.A[i])
        g[i] = prec @ (Q[i] @ parts.coeffs.B[i])
    return StrategySpec(f"diffusion-optimal({parts.regime.value})", parts.regime, G, g)


def discrete_optimal_strategy(
    pc: PiecewiseCoefficients, qpath_Z: CovariancePath, params: ModelParams
) -> StrategySpec:
    """Optimal rule for the discrete-view investor (post-view at dates)."""
    grid = pc.grid
    n = grid.steps + 1
    d = params.d
    prec = np.linalg.inv(params.Sigma_R) / (1.0 - params.theta)
    G = np.empty((n, d, d))
    g = np.empty((n, d))
    Q = qpath_Z.Q
    for seg in pc.segments:
        # node i1 of an interior segment belongs to the next one (post-view)
        stop = seg.i1 + 1 if seg.index == len(pc.segments) else seg.i1
        for i in range(seg.i0, stop):
            a, b = seg.A[i - seg.i0], seg.B[i - seg.i0]
            G[i] = prec @ (np.eye(d) + 2.0 * Q[i] @ a)
            g[i] = prec @ (Q[i] @ b)
    return StrategySpec("discrete-optimal(Z)", Regime.Z, G, g)


def full_optimal_strategy(params: ModelParams, grid: TimeGrid) -> StrategySpec:
    """Optimal rule under full information: the myopic rule on the true drift."""
    return myopic_strategy(params, grid, Regime.F)


def simulate_wealth(
    strategy: StrategySpec,
    bundle: PathBundle,
    filter_path: FilterPath,
    params: ModelParams,
) -> float:
    """Terminal wealth of one path; strategies evaluate at left endpoints."""
    if strategy.regime != filter_path.regime:
        raise ParameterError(
            f"strategy expects regime {strategy.regime}, filter is {filter_path.regime}"
        )
    grid = bundle.grid
    h = grid.h
    M = filter_path.M[:-1]
    pi = np.einsum("ijk,ik->ij", strategy.G[:-1], M) + strategy.g[:-1]
    dR = np.diff(bundle.R, axis=0)
    quad = ((pi @ params.sigma_R) ** 2).sum(axis=1)
    log_growth = (pi * dR).sum(axis=1) - 0.5 * quad * h
    total = float(np.sum(log_growth))
    if not np.isfinite(total):
        raise DriftlabError("non-finite log-wealth during simulation")
    return params.x0 * float(np.exp(total))


def _utility(log_wealth: np.ndarray, params: ModelParams) -> np.ndarray:
    theta = params.theta
    if theta == 0.0:
        return np.log(params.x0) + log_wealth
    return (params.x0**theta / theta) * np.exp(theta * log_wealth)


def run_path_batch(
    params: ModelParams,
    schedule: ExpertSchedule | None,
    grid: TimeGrid,
    regime: Regime,
    strategy: StrategySpec | None,
    n_paths: int,
    seed: int,
    qpath: CovariancePath | None = None,
    antithetic: bool = False,
    chunk_size: int = 4096,
) -> dict[str, np.ndarray]:
    """Fused simulate/filter/trade sweep over ``n_paths`` independent paths.

    Returns per-path arrays: ``log_wealth`` (if a strategy is given),
    ``utility``, ``M_T``, ``mu_T``. Path i draws from streams derived from
    (seed, i), so the output is identical for any chunk size; with
    ``antithetic`` consecutive paths share a stream with negated draws.
    """
    steps = grid.steps
    h = grid.h
    d = params.d
    sqrt_h = np.sqrt(h)
    stepper = _OUStepper(params, h)
    e_h_T = stepper.E_h.T
    noise_T = stepper.noise_sqrt.T
    mu0_sqrt = sym_sqrt(params.mu0_cov)
    mu_bar = params.mu_bar
    sig_R_T = sqrt_h * params.sigma_R.T
    d1 = params.sigma_R.shape[1]
    d3 = params.sigma_J.shape[1]

    if regime != Regime.F and qpath is None:
        qpath = covariance_path(regime, params, schedule if regime == Regime.Z else None, grid)
    filtering = regime in (Regime.R, Regime.J, Regime.Z)
    if filtering:
        if qpath.grid.steps != steps:
            raise ParameterError("covariance path grid does not match the simulation grid")
        prec_R = np.linalg.inv(params.Sigma_R)
        gains_R = qpath.Q[:-1] @ prec_R
        if regime == Regime.J:
            prec_J = np.linalg.inv(params.Sigma_J)
            gains_J = qpath.Q[:-1] @ prec_J
            sig_J_T = sqrt_h * params.sigma_J.T
    kappa_T = params.kappa.T

    n_views = schedule.n if (regime == Regime.Z and schedule is not None) else 0
    fixed_views = n_views > 0 and schedule.gamma_mode == "fixed"
    linear_views = n_views > 0 and schedule.gamma_mode == "linear"
    if n_views:
        info_pos = {int(idx): k for k, idx in enumerate(qpath.info_idx)}
        rho_T = np.transpose(qpath.rho, (0, 2, 1))
        if fixed_views:
            gamma_sqrt_T = sym_sqrt(schedule.gamma_for(params)).T
        else:
            view_bounds = np.append(qpath.info_idx, steps)
            delta_n = schedule.delta_n(params.T)
            sig_J_view_T = sqrt_h * params.sigma_J.T
    else:
        info_pos = {}

    if strategy is not None:
        if strategy.regime != regime:
            raise ParameterError(f"strategy regime {strategy.regime} != batch regime {regime}")
        G = strategy.G
        g = strategy.g
        sigma_R = params.sigma_R

    if antithetic and n_paths % 2:
        raise ParameterError("antithetic sampling needs an even path count")

    out_logw = np.empty(n_paths) if strategy is not None else None
    out_MT = np.empty((n_paths, d))
    out_muT = np.empty((n_paths, d))

    for start in range(0, n_paths, chunk_size):
        stop = min(start + chunk_size, n_paths)
        c = stop - start
        xi0 = np.empty((c, d))
        xi_mu = np.empty((c, steps, d))
        xi_R = np.empty((c, steps, d1))
        xi_J = np.empty((c, steps, d3)) if (regime == Regime.J or linear_views) else None
        eps = np.empty((c, n_views, d)) if fixed_views else None
        for j in range(c):
            i = start + j
            src, sign = (i // 2, -1.0 if i % 2 else 1.0) if antithetic else (i, 1.0)
            rng_mu = path_rng(seed, src, STREAM_W_MU)
            xi0[j] = sign * rng_mu.standard_normal(d)
            xi_mu[j] = sign * rng_mu.standard_normal((steps, d))
            xi_R[j] = sign * path_rng(seed, src, STREAM_W_R).standard_normal((steps, d1))
            if xi_J is not None:
                xi_J[j] = sign * path_rng(seed, src, STREAM_W_J).standard_normal((steps, d3))
            if fixed_views:
                eps[j] = sign * path_rng(seed, src, STREAM_EPS).standard_normal((n_views, d))

        if linear_views:
            view_noise = np.empty((c, n_views, d))
            for k in range(n_views):
                a, b = view_bounds[k], view_bounds[k + 1]
                view_noise[:, k] = (xi_J[:, a:b].sum(axis=1) @ sig_J_view_T) / delta_n

        mu = params.mu0_mean + xi0 @ mu0_sqrt.T
        M = np.tile(params.m0, (c, 1)) if filtering else None
        logw = np.zeros(c) if strategy is not None else None

        for i in range(steps):
            k = info_pos.get(i)
            if k is not None:
                z = mu + (eps[:, k] @ gamma_sqrt_T if fixed_views else view_noise[:, k])
                M = M @ rho_T[k] + z @ (np.eye(d) - qpath.rho[k]).T
            state = mu if regime == Regime.F else M
            if strategy is not None:
                pi = state @ G[i].T + g[i]
            dR = mu * h + xi_R[:, i] @ sig_R_T
            if strategy is not None:
                logw += (pi * dR).sum(axis=1) - 0.5 * h * ((pi @ sigma_R) ** 2).sum(axis=1)
            if filtering:
                innov = (dR - M * h) @ gains_R[i].T
                if regime == Regime.J:
                    dJ = mu * h + xi_J[:, i] @ sig_J_T
                    innov += (dJ - M * h) @ gains_J[i].T
                M = M + (mu_bar - M) @ kappa_T * h + innov
            mu = mu_bar + (mu - mu_bar) @ e_h_T + xi_mu[:, i] @ noise_T

        out_muT[start:stop] = mu
        out_MT[start:stop] = M if filtering else mu
        if strategy is not None:
            out_logw[start:stop] = logw

    result = {"M_T": out_MT, "mu_T": out_muT}
    if strategy is not None:
        if not np.all(np.isfinite(out_logw)):
            bad = int(np.flatnonzero(~np.isfinite(out_logw))[0])
            raise DriftlabError(f"non-finite log-wealth on path {bad}")
        result["log_wealth"] = out_logw
        result["utility"] = _utility(out_logw, params)
    return result


def estimate_reward(
    strategy: StrategySpec,
    regime: Regime,
    params: ModelParams,
    schedule: ExpertSchedule | None,
    n_paths: int,
    seed: int,
    qpath: CovariancePath | None = None,
    antithetic: bool = False,
    grid: TimeGrid | None = None,
) -> RewardEstimate:
    """Monte Carlo estimate of E[U_theta(X_T)] under the given strategy.

    The comparison target for an optimal strategy is x0^theta/theta times
    the regime's closed-form value at (0, m0) (log value for theta = 0).
    """
    if n_paths < 100:
        raise ParameterError(f"n_paths must be at least 100, got {n_paths}")
    if grid is None:
        grid = TimeGrid(0.0, params.T, strategy.G.shape[0] - 1)
    batch = run_path_batch(
        params, schedule, grid, regime, strategy, n_paths, seed,
        qpath=qpath, antithetic=antithetic,
    )
    utility = batch["utility"]
    mean = float(utility.mean())
    stderr = float(utility.std(ddof=1) / np.sqrt(n_paths))
    return RewardEstimate(mean, stderr, n_paths, params.theta, regime)


def filter_error_stats(
    regime: Regime,
    params: ModelParams,
    schedule: ExpertSchedule | None,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    qpath: CovariancePath | None = None,
) -> tuple[float, float]:
    """Mean and stderr of ||M_T - mu_T||^2 across paths (filter accuracy)."""
    batch = run_path_batch(params, schedule, grid, regime, None, n_paths, seed, qpath=qpath)
    err = ((batch["M_T"] - batch["mu_T"]) ** 2).sum(axis=1)
    return float(err.mean()), float(err.std(ddof=1) / np.sqrt(n_paths))


def reward_report(
    estimate: RewardEstimate, strategy: StrategySpec, closed_form: float
) -> dict:
    return {
        "regime": estimate.regime.value,
        "strategy": strategy.kind,
        "theta": estimate.theta,
        "n_paths": estimate.n_paths,
        "mean": estimate.mean,
        "stderr": estimate.stderr,
        "closed_form": closed_form,
        "z_score": estimate.z_score(closed_form),
    }
