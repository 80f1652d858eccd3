"""Config-driven scenario runner emitting plot-ready CSV/JSON plus figures.

Each scenario writes one CSV per figure panel, a deterministic
``summary.json``, rendered PNG figures (unless disabled), and a
``run_meta.json`` sidecar that holds the only nondeterministic content
(timestamp). Rerunning a scenario with the same config and seed reproduces
every CSV body byte for byte.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .filters import CovariancePath, FilterPath, Regime, covariance_path, run_filter
from .info_value import discrete_value_parts, efficiency, expert_price
from .log_utility import log_value
from .market import ExpertSchedule, ModelParams, master_grid, simulate_paths
from .numerics import TimeGrid
from .reporting import matrix_header, vector_header, write_csv, write_json
from .value_diffusion import diffusion_value_and_rule, solve_diffusion_value
from .value_discrete import backward_recursion, discrete_value_and_rule
from .value_full import averaged_full_value, myopic_rule, solve_full_coefficients
from .wealth import (
    diffusion_optimal_strategy,
    discrete_optimal_strategy,
    estimate_reward,
    filter_error_stats,
    full_optimal_strategy,
    myopic_strategy,
    reward_report,
)

SCENARIOS = (
    "filter-paths",
    "covariance-asymptotics",
    "value-surfaces",
    "convergence-fixed-gamma",
    "convergence-linear-gamma",
    "mc-verify",
    "efficiency-sweep",
    "expert-price-sweep",
)

_DEFAULT_SWEEPS = {
    "covariance-asymptotics": {"fixed": [10, 400, 4000], "linear": [5, 10, 100]},
    "convergence-fixed-gamma": [10, 400, 4000],
    "convergence-linear-gamma": [10, 20, 40, 80],
    "efficiency-sweep": [1, 12, 52, 365],
    "expert-price-sweep": [1, 2, 5, 10, 20, 50, 100],
}
_DEFAULT_GAMMA_SWEEP = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]


@dataclass
class ScenarioConfig:
    scenario: str
    params: ModelParams
    schedule: ExpertSchedule
    output_dir: Path
    sweep: list | None = None
    gamma_sweep: list | None = None
    mc: dict = field(default_factory=lambda: {"n_paths": 20000, "seed": 12345})
    grid_steps: int = 2000
    plots: bool = True
    regimes: list[str] = field(default_factory=lambda: ["F", "R", "J", "Z"])
    probe_m: float = 0.05
    probe_t: float = 0.15
    m_grid: list = field(default_factory=lambda: [-0.5, 0.5, 101])

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        known = {
            "scenario", "params", "schedule", "output_dir", "sweep", "gamma_sweep",
            "mc", "grid_steps", "plots", "regimes", "probe_m", "probe_t", "m_grid",
        }
        unknown = doc.keys() - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        scenario = doc.get("scenario")
        if scenario not in SCENARIOS:
            raise ConfigError(
                f"scenario must be one of {', '.join(SCENARIOS)}; got {scenario!r}"
            )
        params = ModelParams.from_dict(doc["params"]) if "params" in doc else ModelParams.defaults()
        schedule = _resolve_schedule(doc.get("schedule"), params)
        schedule.validate_against(params)

        mc = dict(doc.get("mc", {}))
        unknown_mc = mc.keys() - {"n_paths", "seed"}
        if unknown_mc:
            raise ConfigError(f"unknown mc fields: {sorted(unknown_mc)}")
        mc.setdefault("n_paths", 20000)
        mc.setdefault("seed", 12345)
        if not (isinstance(mc["n_paths"], int) and mc["n_paths"] > 0):
            raise ConfigError(f"mc.n_paths must be a positive integer, got {mc['n_paths']!r}")

        sweep = doc.get("sweep")
        if sweep is not None:
            if not isinstance(sweep, list) or not sweep or any(v <= 0 for v in sweep):
                raise ConfigError("sweep must be a non-empty list of positive values")
        gamma_sweep = doc.get("gamma_sweep")
        if gamma_sweep is not None and any(v <= 0 for v in gamma_sweep):
            raise ConfigError("gamma_sweep values must be positive")

        regimes = doc.get("regimes", ["F", "R", "J", "Z"])
        bad = [r for r in regimes if r not in ("F", "R", "J", "Z")]
        if bad:
            raise ConfigError(f"unknown regimes {bad}; use F, R, J, Z")

        grid_steps = doc.get("grid_steps", 2000)
        if not (isinstance(grid_steps, int) and grid_steps >= 10):
            raise ConfigError(f"grid_steps must be an integer >= 10, got {grid_steps!r}")

        return cls(
            scenario=scenario,
            params=params,
            schedule=schedule,
            output_dir=Path(doc.get("output_dir", f"out/{scenario}")),
            sweep=sweep,
            gamma_sweep=gamma_sweep,
            mc=mc,
            grid_steps=grid_steps,
            plots=bool(doc.get("plots", True)),
            regimes=list(regimes),
            probe_m=float(doc.get("probe_m", 0.05)),
            probe_t=float(doc.get("probe_t", 0.15)),
            m_grid=list(doc.get("m_grid", [-0.5, 0.5, 101])),
        )


def _resolve_schedule(doc, params: ModelParams) -> ExpertSchedule:
    if doc is None:
        return ExpertSchedule.equidistant(10, params.T)
    if not isinstance(doc, dict):
        raise ConfigError("schedule must be a JSON object")
    if "dates" in doc:
        return ExpertSchedule.from_dict(doc)
    n = doc.get("n", 10)
    return ExpertSchedule.equidistant(n, params.T, doc.get("gamma_mode", "fixed"))


def default_config(scenario: str = "filter-paths") -> dict:
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}; got {scenario!r}")
    params = ModelParams.defaults()
    schedule = ExpertSchedule.equidistant(10, params.T)
    doc = {
        "scenario": scenario,
        "params": params.to_dict(),
        "schedule": schedule.to_dict(),
        "mc": {"n_paths": 20000, "seed": 12345},
        "output_dir": f"out/{scenario}",
        "plots": True,
    }
    default_sweep = _DEFAULT_SWEEPS.get(scenario)
    if isinstance(default_sweep, dict):
        default_sweep = default_sweep["fixed"]
    if default_sweep is not None:
        doc["sweep"] = default_sweep
    if scenario == "expert-price-sweep":
        doc["gamma_sweep"] = _DEFAULT_GAMMA_SWEEP
    if scenario == "value-surfaces":
        doc["probe_m"] = 0.05
        doc["probe_t"] = 0.15
    return doc


# ---------------------------------------------------------------------------
# shared export helpers


def filter_path_csv(path: Path, fp: FilterPath) -> Path:
    """FilterPath export: t, M, Q columns, info-date flag, pre-jump rows."""
    d = fp.M.shape[1]
    header = (
        ["t"] + vector_header("M", d) + matrix_header("Q", d)
        + ["is_information_date", "side"]
    )
    qp = fp.qpath
    info = {int(i): k for k, i in enumerate(qp.info_idx)}
    rows = []
    for i, t in enumerate(fp.grid.nodes):
        k = info.get(i)
        if k is not None and fp.M_minus is not None:
            rows.append(
                [t, *fp.M_minus[k], *qp.Q_minus[k].ravel(), 1, "pre"]
            )
        rows.append([t, *fp.M[i], *fp.Q[i].ravel(), 1 if k is not None else 0,
                     "post" if k is not None else ""])
    return write_csv(path, header, rows)


def coefficient_path_csv(path: Path, coeffs) -> Path:
    d = coeffs.B.shape[1]
    header = ["t"] + matrix_header("A", d) + vector_header("B", d) + ["C"]
    rows = [
        [t, *coeffs.A[i].ravel(), *coeffs.B[i], coeffs.C[i]]
        for i, t in enumerate(coeffs.grid.nodes)
    ]
    return write_csv(path, header, rows)


def _grid_for(params: ModelParams, schedule: ExpertSchedule | None, base: int) -> TimeGrid:
    return master_grid(params, schedule, base)


# ---------------------------------------------------------------------------
# scenarios


def _run_filter_paths(cfg: ScenarioConfig, outdir: Path) -> dict:
    params, schedule = cfg.params, cfg.schedule
    grid = _grid_for(params, schedule, cfg.grid_steps)
    seed = cfg.mc["seed"]
    bundle = next(simulate_paths(params, schedule, grid.h, 1, seed))
    d = params.d
    h = grid.h

    qpaths = {
        Regime.R: covariance_path(Regime.R, params, None, grid),
        Regime.Z: covariance_path(Regime.Z, params, schedule, grid),
        Regime.J: covariance_path(Regime.J, params, None, grid),
    }
    fps = {
        reg: run_filter(reg, bundle, schedule if reg == Regime.Z else None, params, qpaths[reg])
        for reg in (Regime.R, Regime.Z, Regime.J)
    }

    cum_drift = np.zeros((grid.steps + 1, d))
    np.cumsum(bundle.mu[:-1] * h, axis=0, out=cum_drift[1:])

    files = [
        write_csv(
            outdir / "observations.csv",
            ["t"] + vector_header("R", d) + vector_header("J", d)
            + vector_header("cum_drift", d),
            [[t, *bundle.R[i], *bundle.J[i], *cum_drift[i]] for i, t in enumerate(grid.nodes)],
        ),
        write_csv(
            outdir / "drift_and_means.csv",
            ["t"] + vector_header("mu", d) + vector_header("M_R", d)
            + vector_header("M_Z", d) + vector_header("M_J", d),
            [
                [t, *bundle.mu[i], *fps[Regime.R].M[i], *fps[Regime.Z].M[i], *fps[Regime.J].M[i]]
                for i, t in enumerate(grid.nodes)
            ],
        ),
        write_csv(
            outdir / "views.csv",
            ["t_k"] + vector_header("Z", d),
            [[tk, *bundle.views[k]] for k, tk in enumerate(bundle.view_dates)],
        ),
    ]
    for reg in (Regime.R, Regime.Z, Regime.J):
        files.append(filter_path_csv(outdir / f"filter_{reg.value}.csv", fps[reg]))

    if cfg.plots:
        from . import plots

        files.append(plots.filter_paths_figure(outdir / "filter_paths.png", bundle, fps, cum_drift))

    return {
        "scenario": cfg.scenario,
        "seed": seed,
        "n_views": schedule.n,
        "grid_steps": grid.steps,
        "clipped_psd": {reg.value: qpaths[reg].clipped for reg in qpaths},
        "files": [f.name for f in files],
    }


def _q_norm(q: np.ndarray) -> float:
    return float(np.linalg.norm(q, 2))


def _run_covariance_asymptotics(cfg: ScenarioConfig, outdir: Path) -> dict:
    params = cfg.params
    mode = cfg.schedule.gamma_mode
    sweep = cfg.sweep or _DEFAULT_SWEEPS["covariance-asymptotics"][mode]
    files = []
    sup_rows = []
    z_paths = {}
    base_grid = _grid_for(params, None, cfg.grid_steps)
    qp_R = covariance_path(Regime.R, params, None, base_grid)
    qp_J = covariance_path(Regime.J, params, None, base_grid)
    files.append(
        write_csv(
            outdir / "q_reference.csv",
            ["t"] + matrix_header("Q_R", params.d) + matrix_header("Q_J", params.d),
            [
                [t, *qp_R.Q[i].ravel(), *qp_J.Q[i].ravel()]
                for i, t in enumerate(base_grid.nodes)
            ],
        )
    )
    for n in sweep:
        sched = ExpertSchedule.equidistant(int(n), params.T, mode)
        grid_n = _grid_for(params, sched, cfg.grid_steps)
        qp_Z = covariance_path(Regime.Z, params, sched, grid_n)
        qp_J_n = covariance_path(Regime.J, params, None, grid_n)
        z_paths[int(n)] = (grid_n, qp_Z)
        files.append(
            write_csv(
                outdir / f"q_z_n{int(n)}.csv",
                ["t", "side"] + matrix_header("Q_Z", params.d),
                _q_rows_with_jumps(qp_Z),
            )
        )
        err_nodes = max(
            _q_norm(qp_Z.Q[i] - qp_J_n.Q[i]) for i in range(grid_n.steps + 1)
        )
        err_pre = max(
            (_q_norm(qp_Z.Q_minus[k] - qp_J_n.Q[i]) for k, i in enumerate(qp_Z.info_idx)),
            default=0.0,
        )
        sup_rows.append([int(n), max(err_nodes, err_pre), _q_norm(qp_Z.Q[grid_n.steps])])
    files.append(
        write_csv(outdir / "sup_differences.csv", ["n", "sup_Q_Z_minus_Q_J", "Q_Z_at_T"], sup_rows)
    )

    if cfg.plots:
        from . import plots

        files.append(
            plots.covariance_sweep_figure(
                outdir / "covariance_asymptotics.png", base_grid, qp_R, qp_J, z_paths, mode
            )
        )
    return {
        "scenario": cfg.scenario,
        "gamma_mode": mode,
        "sweep": [int(n) for n in sweep],
        "sup_differences": {str(r[0]): r[1] for r in sup_rows},
        "files": [f.name for f in files],
    }


def _q_rows_with_jumps(qp: CovariancePath):
    info = {int(i): k for k, i in enumerate(qp.info_idx)}
    rows = []
    for i, t in enumerate(qp.grid.nodes):
        k = info.get(i)
        if k is not None:
            rows.append([t, "pre", *qp.Q_minus[k].ravel()])
            rows.append([t, "post", *qp.Q[i].ravel()])
        else:
            rows.append([t, "", *qp.Q[i].ravel()])
    return rows


def _run_value_surfaces(cfg: ScenarioConfig, outdir: Path) -> dict:
    params, schedule = cfg.params, cfg.schedule
    grid = _grid_for(params, schedule, cfg.grid_steps)
    fc = solve_full_coefficients(params, grid)
    qp = {
        Regime.R: covariance_path(Regime.R, params, None, grid),
        Regime.J: covariance_path(Regime.J, params, None, grid),
        Regime.Z: covariance_path(Regime.Z, params, schedule, grid),
    }
    parts = {
        reg: solve_diffusion_value(reg, params, grid, qp[reg], fc)
        for reg in (Regime.R, Regime.J)
    }
    pc = backward_recursion(params, schedule, grid, qp[Regime.Z])

    m_star = np.full(params.d, cfg.probe_m)
    t_star = grid.nodes[grid.index_of(cfg.probe_t)]
    lo, hi, count = cfg.m_grid
    m_values = np.linspace(float(lo), float(hi), int(count))

    def z_pair(t, side=None):
        return discrete_value_and_rule(pc, t, m_star, qp[Regime.Z], params, side=side)

    rows_t = []
    info_nodes = set(int(i) for i in qp[Regime.Z].info_idx)
    for i, t in enumerate(grid.nodes):
        v_f = fc.value(t, m_star)
        v_r, pi_r = diffusion_value_and_rule(parts[Regime.R], t, m_star)
        v_j, pi_j = diffusion_value_and_rule(parts[Regime.J], t, m_star)
        pi_f = myopic_rule(m_star, params)
        if i in info_nodes:
            v_pre, pi_pre = z_pair(t, side="left")
            rows_t.append([t, "pre", v_f, v_r, v_j, v_pre, *pi_f, *pi_r, *pi_j, *pi_pre])
            v_post, pi_post = z_pair(t, side="right")
            rows_t.append([t, "post", v_f, v_r, v_j, v_post, *pi_f, *pi_r, *pi_j, *pi_post])
        else:
            v_z, pi_z = z_pair(t)
            rows_t.append([t, "", v_f, v_r, v_j, v_z, *pi_f, *pi_r, *pi_j, *pi_z])
    d = params.d
    header_t = (
        ["t", "side", "V_F", "V_R", "V_J", "V_Z"]
        + vector_header("pi_F", d) + vector_header("pi_R", d)
        + vector_header("pi_J", d) + vector_header("pi_Z", d)
    )
    files = [write_csv(outdir / "value_and_rule_vs_t.csv", header_t, rows_t)]

    rows_m = []
    for m in m_values:
        mv = np.full(params.d, m)
        v_f = fc.value(t_star, mv)
        v_r, pi_r = diffusion_value_and_rule(parts[Regime.R], t_star, mv)
        v_j, pi_j = diffusion_value_and_rule(parts[Regime.J], t_star, mv)
        v_z, pi_z = discrete_value_and_rule(pc, t_star, mv, qp[Regime.Z], params)
        pi_f = myopic_rule(mv, params)
        rows_m.append([m, v_f, v_r, v_j, v_z, *pi_f, *pi_r, *pi_j, *pi_z])
    header_m = (
        ["m", "V_F", "V_R", "V_J", "V_Z"]
        + vector_header("pi_F", d) + vector_header("pi_R", d)
        + vector_header("pi_J", d) + vector_header("pi_Z", d)
    )
    files.append(write_csv(outdir / "value_and_rule_vs_m.csv", header_m, rows_m))
    files.append(coefficient_path_csv(outdir / "coefficients_F.csv", fc))
    for reg in (Regime.R, Regime.J):
        files.append(coefficient_path_csv(outdir / f"coefficients_{reg.value}.csv", parts[reg].coeffs))
        files.append(
            write_csv(
                outdir / f"delta_x_{reg.value}.csv",
                ["t", "delta_X"],
                [[t, parts[reg].delta_X[i]] for i, t in enumerate(grid.nodes)],
            )
        )

    if cfg.plots:
        from . import plots

        files.append(
            plots.value_surfaces_figure(
                outdir / "value_surfaces.png", grid, rows_t, m_values, rows_m, params.d, t_star,
                cfg.probe_m,
            )
        )

    v0 = {
        "F_averaged": averaged_full_value(0.0, params.m0, params.q0, fc)[0],
        "R": parts[Regime.R].coeffs.value(0.0, params.m0),
        "J": parts[Regime.J].coeffs.value(0.0, params.m0),
        "Z": discrete_value_and_rule(pc, 0.0, params.m0, qp[Regime.Z], params)[0],
    }
    return {
        "scenario": cfg.scenario,
        "probe_m": cfg.probe_m,
        "probe_t": float(t_star),
        "value_at_0_m0": v0,
        "files": [f.name for f in files],
    }


def _run_convergence_fixed(cfg: ScenarioConfig, outdir: Path) -> dict:
    params = cfg.params
    sweep = [int(n) for n in (cfg.sweep or _DEFAULT_SWEEPS["convergence-fixed-gamma"])]
    n_paths = cfg.mc["n_paths"]
    seed = cfg.mc["seed"]
    rows = []
    for n in sweep:
        sched = ExpertSchedule.equidistant(n, params.T, "fixed")
        grid_n = _grid_for(params, sched, cfg.grid_steps)
        qp_Z = covariance_path(Regime.Z, params, sched, grid_n)
        fc_n = solve_full_coefficients(params, grid_n)
        q_half = _q_norm(qp_Z.Q[grid_n.index_of(round(params.T / 2, 12))])
        q_T = _q_norm(qp_Z.Q[grid_n.steps])
        mse, mse_se = filter_error_stats(
            Regime.Z, params, sched, grid_n, n_paths, seed, qpath=qp_Z
        )
        if params.theta != 0.0:
            parts = discrete_value_parts(params, sched, grid_n, qp_Z, fc_n)
            a0, b0, c0 = parts.pc.pre_view
            m0 = params.m0
            v0 = float(np.exp(m0 @ a0 @ m0 + b0 @ m0 + c0))
            eff = efficiency(parts)
        else:
            v0 = float("nan")
            eff = float("nan")
        rows.append([n, q_half, q_T, mse, mse_se, v0, eff])
    files = [
        write_csv(
            outdir / "convergence_fixed_gamma.csv",
            ["n", "Q_Z_at_T_half", "Q_Z_at_T", "mse_M_T", "stderr_mse", "V_Z_at_0_m0",
             "efficiency_Z"],
            rows,
        )
    ]
    if cfg.plots:
        from . import plots

        files.append(plots.convergence_figure(
            outdir / "convergence_fixed_gamma.png", rows, "fixed"))
    return {
        "scenario": cfg.scenario,
        "sweep": sweep,
        "rows": {str(r[0]): {"Q_half": r[1], "Q_T": r[2], "mse": r[3]} for r in rows},
        "files": [f.name for f in files],
    }


def _run_convergence_linear(cfg: ScenarioConfig, outdir: Path) -> dict:
    params = cfg.params
    sweep = [int(n) for n in (cfg.sweep or _DEFAULT_SWEEPS["convergence-linear-gamma"])]
    rows = []
    prev_err = None
    for n in sweep:
        sched = ExpertSchedule.equidistant(n, params.T, "linear")
        grid_n = _grid_for(params, sched, cfg.grid_steps)
        qp_Z = covariance_path(Regime.Z, params, sched, grid_n)
        qp_J = covariance_path(Regime.J, params, None, grid_n)
        err_nodes = max(
            _q_norm(qp_Z.Q[i] - qp_J.Q[i]) for i in range(grid_n.steps + 1)
        )
        err_pre = max(
            (_q_norm(qp_Z.Q_minus[k] - qp_J.Q[i]) for k, i in enumerate(qp_Z.info_idx)),
            default=0.0,
        )
        err = max(err_nodes, err_pre)
        ratio = err / prev_err if prev_err is not None else float("nan")
        gamma_n = float(np.linalg.norm(sched.gamma_for(params), 2))
        if params.theta != 0.0:
            fc_n = solve_full_coefficients(params, grid_n)
            parts = discrete_value_parts(params, sched, grid_n, qp_Z, fc_n)
            eff = efficiency(parts)
        else:
            eff = float("nan")
        rows.append([n, gamma_n, err, ratio, eff])
        prev_err = err
    eff_J = float("nan")
    if params.theta != 0.0:
        grid = _grid_for(params, None, cfg.grid_steps)
        fc = solve_full_coefficients(params, grid)
        qp_J = covariance_path(Regime.J, params, None, grid)
        eff_J = efficiency(solve_diffusion_value(Regime.J, params, grid, qp_J, fc))
    files = [
        write_csv(
            outdir / "convergence_linear_gamma.csv",
            ["n", "gamma_n", "sup_Q_err", "error_ratio", "efficiency_Z"],
            rows,
        )
    ]
    if cfg.plots:
        from . import plots

        files.append(plots.convergence_figure(
            outdir / "convergence_linear_gamma.png", rows, "linear"))
    return {
        "scenario": cfg.scenario,
        "sweep": sweep,
        "efficiency_J": eff_J,
        "error_ratios": [r[3] for r in rows[1:]],
        "files": [f.name for f in files],
    }


def _closed_form_value(regime: Regime, params, schedule, grid, fc, qpaths):
    """(strategy, closed-form target) pair for one regime at current theta."""
    if params.theta == 0.0:
        qp = qpaths[regime]
        target = log_value(regime, params, qp).value
        return myopic_strategy(params, grid, regime), target
    x_fac = params.x0**params.theta / params.theta
    if regime == Regime.F:
        vbar, *_ = averaged_full_value(0.0, params.m0, params.q0, fc)
        return full_optimal_strategy(params, grid), x_fac * vbar
    if regime in (Regime.R, Regime.J):
        parts = solve_diffusion_value(regime, params, grid, qpaths[regime], fc)
        return (
            diffusion_optimal_strategy(parts),
            x_fac * parts.coeffs.value(0.0, params.m0),
        )
    pc = backward_recursion(params, schedule, grid, qpaths[Regime.Z])
    a0, b0, c0 = pc.pre_view
    m0 = params.m0
    v0 = float(np.exp(m0 @ a0 @ m0 + b0 @ m0 + c0))
    return discrete_optimal_strategy(pc, qpaths[Regime.Z], params), x_fac * v0


def _run_mc_verify(cfg: ScenarioConfig, outdir: Path) -> dict:
    params, schedule = cfg.params, cfg.schedule
    grid = _grid_for(params, schedule, cfg.grid_steps)
    fc = solve_full_coefficients(params, grid) if params.theta != 0.0 else None
    qpaths = {
        Regime.F: covariance_path(Regime.F, params, None, grid),
        Regime.R: covariance_path(Regime.R, params, None, grid),
        Regime.J: covariance_path(Regime.J, params, None, grid),
        Regime.Z: covariance_path(Regime.Z, params, schedule, grid),
    }
    rows = []
    reports = []
    for name in cfg.regimes:
        regime = Regime(name)
        strategy, target = _closed_form_value(regime, params, schedule, grid, fc, qpaths)
        est = estimate_reward(
            strategy, regime, params, schedule if regime == Regime.Z else None,
            cfg.mc["n_paths"], cfg.mc["seed"], qpath=qpaths[regime], grid=grid,
        )
        rep = reward_report(est, strategy, target)
        reports.append(rep)
        rows.append([
            rep["regime"], rep["theta"], rep["n_paths"], rep["mean"], rep["stderr"],
            rep["closed_form"], rep["z_score"],
        ])
    files = [
        write_csv(
            outdir / "mc_verify.csv",
            ["regime", "theta", "n_paths", "mc_mean", "stderr", "closed_form", "z_score"],
            rows,
        )
    ]
    max_z = max(abs(r["z_score"]) for r in reports)
    return {
        "scenario": cfg.scenario,
        "theta": params.theta,
        "n_paths": cfg.mc["n_paths"],
        "max_abs_z": max_z,
        "all_within_3se": bool(max_z <= 3.0),
        "reports": reports,
        "files": [f.name for f in files],
    }


def _efficiency_for(params, schedule_n, base_steps) -> float:
    grid_n = _grid_for(params, schedule_n, base_steps)
    fc_n = solve_full_coefficients(params, grid_n)
    qp_Z = covariance_path(Regime.Z, params, schedule_n, grid_n)
    return efficiency(discrete_value_parts(params, schedule_n, grid_n, qp_Z, fc_n))


def _run_efficiency_sweep(cfg: ScenarioConfig, outdir: Path) -> dict:
    params = cfg.params
    mode = cfg.schedule.gamma_mode
    sweep = [int(n) for n in (cfg.sweep or _DEFAULT_SWEEPS["efficiency-sweep"])]
    thetas = [params.theta]
    if params.theta != 0.0:
        thetas.append(-params.theta)
    rows = []
    curves = {}
    for theta in thetas:
        p_t = params.replace(theta=theta)
        grid = _grid_for(p_t, None, cfg.grid_steps)
        fc = solve_full_coefficients(p_t, grid)
        qp_R = covariance_path(Regime.R, p_t, None, grid)
        eff_R = efficiency(solve_diffusion_value(Regime.R, p_t, grid, qp_R, fc))
        qp_J = covariance_path(Regime.J, p_t, None, grid)
        eff_J = efficiency(solve_diffusion_value(Regime.J, p_t, grid, qp_J, fc))
        effs = []
        for n in sweep:
            sched = ExpertSchedule.equidistant(n, p_t.T, mode)
            eff_Z = _efficiency_for(p_t, sched, cfg.grid_steps)
            rows.append([n, theta, eff_Z, eff_R, eff_J])
            effs.append(eff_Z)
        curves[theta] = (effs, eff_R, eff_J)
    files = [
        write_csv(
            outdir / "efficiency_sweep.csv",
            ["n", "theta", "efficiency_Z", "efficiency_R", "efficiency_J"],
            rows,
        )
    ]
    if cfg.plots:
        from . import plots

        files.append(plots.efficiency_figure(
            outdir / "efficiency_sweep.png", sweep, curves, mode))
    return {
        "scenario": cfg.scenario,
        "gamma_mode": mode,
        "sweep": sweep,
        "files": [f.name for f in files],
    }


def _run_expert_price_sweep(cfg: ScenarioConfig, outdir: Path) -> dict:
    params = cfg.params
    sweep = [int(n) for n in (cfg.sweep or _DEFAULT_SWEEPS["expert-price-sweep"])]
    gamma_sweep = cfg.gamma_sweep or _DEFAULT_GAMMA_SWEEP
    grid = _grid_for(params, None, cfg.grid_steps)
    fc = solve_full_coefficients(params, grid)
    qp_R = covariance_path(Regime.R, params, None, grid)
    parts_R = solve_diffusion_value(Regime.R, params, grid, qp_R, fc)
    eff_R = efficiency(parts_R)
    saturation = params.x0 * (1.0 - eff_R)

    rows_n = []
    for n in sweep:
        sched = ExpertSchedule.equidistant(n, params.T, "fixed")
        grid_n = _grid_for(params, sched, cfg.grid_steps)
        fc_n = solve_full_coefficients(params, grid_n)
        qp_Z = covariance_path(Regime.Z, params, sched, grid_n)
        qp_R_n = covariance_path(Regime.R, params, None, grid_n)
        parts_R_n = solve_diffusion_value(Regime.R, params, grid_n, qp_R_n, fc_n)
        parts_Z = discrete_value_parts(params, sched, grid_n, qp_Z, fc_n)
        x_rest, price = expert_price(params.x0, parts_Z, parts_R_n)
        rows_n.append([n, price, x_rest, saturation])

    rows_g = []
    sched10 = ExpertSchedule.equidistant(10, params.T, "fixed")
    grid10 = _grid_for(params, sched10, cfg.grid_steps)
    fc10 = solve_full_coefficients(params, grid10)
    qp_R10 = covariance_path(Regime.R, params, None, grid10)
    parts_R10 = solve_diffusion_value(Regime.R, params, grid10, qp_R10, fc10)
    for gamma in gamma_sweep:
        p_g = params.replace(Gamma=np.eye(params.d) * float(gamma))
        qp_Z = covariance_path(Regime.Z, p_g, sched10, grid10)
        parts_Z = discrete_value_parts(p_g, sched10, grid10, qp_Z, fc10)
        x_rest, price = expert_price(p_g.x0, parts_Z, parts_R10)
        rows_g.append([gamma, price, x_rest])

    files = [
        write_csv(
            outdir / "price_vs_n.csv",
            ["n", "expert_price", "x0_R_over_Z", "saturation_level"],
            rows_n,
        ),
        write_csv(outdir / "price_vs_gamma.csv", ["gamma", "expert_price", "x0_R_over_Z"], rows_g),
    ]
    if cfg.plots:
        from . import plots

        files.append(plots.price_figure(
            outdir / "expert_price_sweep.png", rows_n, rows_g, saturation))
    return {
        "scenario": cfg.scenario,
        "saturation_level": saturation,
        "sweep": sweep,
        "gamma_sweep": [float(g) for g in gamma_sweep],
        "files": [f.name for f in files],
    }


_SCENARIO_FUNCS = {
    "filter-paths": _run_filter_paths,
    "covariance-asymptotics": _run_covariance_asymptotics,
    "value-surfaces": _run_value_surfaces,
    "convergence-fixed-gamma": _run_convergence_fixed,
    "convergence-linear-gamma": _run_convergence_linear,
    "mc-verify": _run_mc_verify,
    "efficiency-sweep": _run_efficiency_sweep,
    "expert-price-sweep": _run_expert_price_sweep,
}


def run_scenario(config: ScenarioConfig) -> dict:
    """Execute one scenario; writes CSVs, figures, summary, and metadata."""
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = _SCENARIO_FUNCS[config.scenario](config, outdir)
    write_json(outdir / "summary.json", summary)
    write_json(
        outdir / "run_meta.json",
        {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()},
    )
    return summary
