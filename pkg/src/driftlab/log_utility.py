"""Closed-form log-utility value for every information regime.

The log investor is myopic: the optimal rule is Sigma_R^{-1} m in the filter
mean for all regimes, and the value separates into

    value = log x0 + 1/2 int_0^T tr(Sigma_R^{-1) (Var[mu_t] + E[mu_t] E[mu_t]^T - Q_t)) dt

so the information regime enters only through the filter covariance path.
Drift moments come from the exact mean-reversion recursions, conditioned on
the investor's initial information (m0, q0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .filters import CovariancePath, Regime
from .market import ModelParams, stationary_moments
from .numerics import TimeGrid, symmetrize


@dataclass
class LogValueReport:
    """Log-utility value with its per-node integrand for diagnostics."""

    regime: Regime
    value: float
    x0: float
    grid: TimeGrid
    integrand: np.ndarray  # (N+1,) right-continuous


def drift_moments(params: ModelParams, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional mean and covariance of mu_t given the time-0 info.

    E[mu_t] = mu_bar + e^{-kappa t}(m0 - mu_bar);
    Var[mu_t] = e^{-kappa t} q0 e^{-kappa^T t} + (q_inf - e^{-kappa t} q_inf e^{-kappa^T t}).
    """
    d = params.d
    _, q_inf = stationary_moments(params)
    e_h = expm(-params.kappa * grid.h)
    means = np.empty((grid.steps + 1, d))
    covs = np.empty((grid.steps + 1, d, d))
    e_t = np.eye(d)
    centered0 = params.m0 - params.mu_bar
    for i in range(grid.steps + 1):
        means[i] = params.mu_bar + e_t @ centered0
        covs[i] = symmetrize(e_t @ (params.q0 - q_inf) @ e_t.T + q_inf)
        e_t = e_h @ e_t
    return means, covs


def _piecewise_trapz(values: np.ndarray, values_minus: dict[int, float],
                     info_idx: np.ndarray, h: float) -> float:
    """Trapezoid over a piecewise-continuous path: each continuous piece uses
    its own one-sided limits at the jump nodes."""
    total = 0.0
    boundaries = [0] + [int(i) for i in info_idx if i > 0] + [len(values) - 1]
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        if b <= a:
            continue
        seg = values[a : b + 1].copy()
        if b in values_minus:
            seg[-1] = values_minus[b]
        total += float(np.trapz(seg, dx=h))
    return total


def log_value(regime: Regime, params: ModelParams, qpath: CovariancePath) -> LogValueReport:
    """Value of the log-utility problem for the given regime's covariance path."""
    grid = qpath.grid
    means, covs = drift_moments(params, grid)
    prec_R = np.linalg.inv(params.Sigma_R)
    Q = qpath.Q

    integrand = np.empty(grid.steps + 1)
    for i in range(grid.steps + 1):
        second_moment = covs[i] + np.outer(means[i], means[i])
        integrand[i] = np.trace(prec_R @ (second_moment - Q[i]))

    integrand_minus: dict[int, float] = {}
    if qpath.n_info:
        for k, idx in enumerate(qpath.info_idx):
            if idx > 0:
                second_moment = covs[idx] + np.outer(means[idx], means[idx])
                integrand_minus[int(idx)] = float(
                    np.trace(prec_R @ (second_moment - qpath.Q_minus[k]))
                )

    value = np.log(params.x0) + 0.5 * _piecewise_trapz(
        integrand, integrand_minus, qpath.info_idx, grid.h
    )
    return LogValueReport(regime, float(value), params.x0, grid, integrand)


def log_report_dict(report: LogValueReport) -> dict:
    return {"regime": report.regime.value, "value": report.value, "x0": report.x0}
