"""Monetary value of information: efficiency and the price of expert advice.

Both quantities come from utility indifference. An investor with information
regime H and initial capital x0 reaches the same maximal expected utility as
a fully informed investor starting with x0 * exp(-Delta_X(0)); the factor

    efficiency = exp(-Delta_X(0))  in (0, 1]

measures how close H is to full information. Comparing a return-only
investor with an expert-informed one, indifference fixes

    x0_R_over_H = x0_R * exp(Delta_X_H(0) - Delta_X_R(0)) <= x0_R,

and the gap P = x0_R - x0_R_over_H is what the return-only investor could
pay for the expert feed. (The sign of the exponent follows from solving the
indifference equation with the exponential-quadratic values; the better
informed investor needs *less* capital.)

For the diffusion regimes Delta_X(0) comes straight from the value solver.
For discrete views it is recovered from its defining relation
theta * Delta_X(0) = C_bar_F(0, q0) - C_Z(0) with the pre-view C_Z(0): the
closed-form substitution recipe for piecewise covariance paths reduces to
exactly this difference, since the A and B coefficients of the pre-view
value coincide with the Gaussian-averaged full-information ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OrderingError, ParameterError
from .filters import CovariancePath, Regime, covariance_path
from .market import ExpertSchedule, ModelParams, master_grid
from .numerics import TimeGrid
from .value_diffusion import DiffusionValueParts, solve_diffusion_value
from .value_discrete import PiecewiseCoefficients, backward_recursion
from .value_full import CoefficientPath, gaussian_average_coeffs, solve_full_coefficients

DELTA_X_TOL = 1e-8


@dataclass
class DiscreteValueParts:
    """Z-regime value solution together with its time-0 information loss."""

    pc: PiecewiseCoefficients
    delta_x0: float
    regime: Regime = Regime.Z


@dataclass(frozen=True)
class InfoValueReport:
    regime: Regime
    efficiency: float
    x0_H_over_F: float
    x0_R_over_H: float
    expert_price: float
    delta_x0_H: float
    delta_x0_R: float


def efficiency(parts) -> float:
    """exp(-Delta_X(0)) in (0, 1]; ``parts`` carries ``delta_x0``."""
    delta = float(parts.delta_x0)
    if delta < -DELTA_X_TOL:
        raise OrderingError(
            f"Delta_X(0) = {delta:.3e} is negative beyond tolerance; "
            "coefficient paths are inconsistent"
        )
    return float(np.exp(-max(delta, 0.0)))


def discrete_value_parts(
    params: ModelParams,
    schedule: ExpertSchedule | None,
    grid: TimeGrid,
    qpath_Z: CovariancePath,
    full_coeffs: CoefficientPath,
) -> DiscreteValueParts:
    """Solve the discrete-view value recursion and extract Delta_X(0)."""
    pc = backward_recursion(params, schedule, grid, qpath_Z)
    a_f, b_f, c_f = full_coeffs.at(0.0)
    _, _, c_bar = gaussian_average_coeffs(a_f, b_f, c_f, params.q0)
    _, _, c_pre = pc.pre_view
    delta_x0 = (c_bar - c_pre) / params.theta
    return DiscreteValueParts(pc, float(delta_x0))


def expert_price(x0_R: float, parts_H, parts_R) -> tuple[float, float]:
    """Capital split of a return-only investor buying the expert feed.

    Returns (x0_R_over_H, price) with price = x0_R - x0_R_over_H >= 0.
    """
    if x0_R <= 0:
        raise ParameterError(f"x0_R must be positive, got {x0_R}")
    x0_r_over_h = x0_R * float(np.exp(parts_H.delta_x0 - parts_R.delta_x0))
    price = x0_R - x0_r_over_h
    if price < -1e-10 * x0_R:
        raise OrderingError(
            f"negative expert price {price:.3e}: information ordering violated "
            f"(Delta_X_H={parts_H.delta_x0:.6g} > Delta_X_R={parts_R.delta_x0:.6g})"
        )
    return x0_r_over_h, max(price, 0.0)


def info_value_report(
    regime: Regime,
    params: ModelParams,
    schedule: ExpertSchedule | None = None,
    base_steps: int = 2000,
) -> InfoValueReport:
    """Efficiency and expert price of a regime against the R benchmark."""
    if regime not in (Regime.R, Regime.J, Regime.Z):
        raise ParameterError(f"information value is defined for R, J, Z; got {regime}")
    grid = master_grid(params, schedule if regime == Regime.Z else None, base_steps)
    fc = solve_full_coefficients(params, grid)

    qpath_R = covariance_path(Regime.R, params, None, grid)
    parts_R = solve_diffusion_value(Regime.R, params, grid, qpath_R, fc)

    if regime == Regime.R:
        parts_H = parts_R
    elif regime == Regime.J:
        qpath_J = covariance_path(Regime.J, params, None, grid)
        parts_H = solve_diffusion_value(Regime.J, params, grid, qpath_J, fc)
    else:
        qpath_Z = covariance_path(Regime.Z, params, schedule, grid)
        parts_H = discrete_value_parts(params, schedule, grid, qpath_Z, fc)

    eff = efficiency(parts_H)
    x0_r_over_h, price = expert_price(params.x0, parts_H, parts_R)
    return InfoValueReport(
        regime=regime,
        efficiency=eff,
        x0_H_over_F=params.x0 * eff,
        x0_R_over_H=x0_r_over_h,
        expert_price=price,
        delta_x0_H=float(parts_H.delta_x0),
        delta_x0_R=float(parts_R.delta_x0),
    )


def report_dict(report: InfoValueReport) -> dict:
    return {
        "regime": report.regime.value,
        "efficiency": report.efficiency,
        "x0_H_over_F": report.x0_H_over_F,
        "x0_R_over_H": report.x0_R_over_H,
        "expert_price": report.expert_price,
        "delta_x0_H": report.delta_x0_H,
        "delta_x0_R": report.delta_x0_R,
    }
