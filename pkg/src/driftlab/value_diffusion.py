"""Value function and optimal rule for the diffusion-observation regimes R, J.

The partially informed investor's coefficients come from the full-information
ones by Gaussian averaging over the filter covariance,

    A_H(t) = (I - 2 A_F(t) Q_t)^{-1} A_F(t),   B_H likewise,
    C_H(t) = C_bar_F(t, Q_t) - theta * Delta_X(t),

where Delta_X(t) >= 0 aggregates the cost of estimating the drift:

    Delta_X = 1/2 log det(I - 2 Q xi) / det(I - 2 Q A_F) + K_under - K_over,
    xi' = -2 xi Sigma_mu xi + kappa^T xi + xi kappa + 1/2 P,   xi(T) = 0,
    K_under(t) = int_t^T tr(Sigma_mu (A_F - xi)) du,
    K_over(t)  = 1/2 int_t^T tr((I - 2 Q A_F)^{-1} Q Sigma_J^{-1}) du  (J only),

with P the regime's observation precision (Sigma_R^{-1}, plus Sigma_J^{-1}
for regime J). K_over vanishes identically for regime R. The optimal rule is
the myopic rule plus a hedging demand proportional to Q_t (2 A_H m + B_H).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, WellPosednessError
from .filters import CovariancePath, Regime, obs_precision
from .market import ModelParams
from .numerics import TimeGrid, sym_sqrt, symmetrize
from .value_full import CoefficientPath, gaussian_average_coeffs, myopic_rule


@dataclass
class DiffusionValueParts:
    """Everything defining V^H and its rule for a diffusion regime."""

    regime: Regime
    params: ModelParams
    coeffs: CoefficientPath
    xi: np.ndarray        # (N+1, d, d)
    K_under: np.ndarray   # (N+1,)
    K_over: np.ndarray    # (N+1,)
    delta_X: np.ndarray   # (N+1,)
    qpath: CovariancePath

    @property
    def grid(self) -> TimeGrid:
        return self.coeffs.grid

    @property
    def delta_x0(self) -> float:
        return float(self.delta_X[0])


def solve_xi(params: ModelParams, grid: TimeGrid, precision: np.ndarray) -> np.ndarray:
    """Backward Riccati for the xi term of Delta_X; xi(T) = 0, xi <= 0 before T.

    Integrated on the half-step grid (returns 2N+1 values) so quadratures
    over xi can use Simpson weights.
    """
    sigma_mu = params.Sigma_mu
    kappa = params.kappa

    def rhs(x):
        return symmetrize(-2.0 * x @ sigma_mu @ x + kappa.T @ x + x @ kappa + 0.5 * precision)

    fine_steps = 2 * grid.steps
    h = 0.5 * grid.h
    d = params.d
    out = np.zeros((fine_steps + 1, d, d))
    x = out[fine_steps]
    for j in range(fine_steps, 0, -1):
        k1 = rhs(x)
        k2 = rhs(x - 0.5 * h * k1)
        k3 = rhs(x - 0.5 * h * k2)
        k4 = rhs(x - h * k3)
        x = symmetrize(x - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        if not np.all(np.isfinite(x)):
            t_fail = grid.t0 + (j - 1) * h
            raise WellPosednessError(f"xi Riccati blew up near t={t_fail:.6g}", t=float(t_fail))
        out[j - 1] = x
    return out


def _reverse_cumsimpson(fine_values: np.ndarray, h: float) -> np.ndarray:
    """out[i] = int_{t_i}^{T} f dt from half-step samples, composite Simpson."""
    n_steps = (len(fine_values) - 1) // 2
    inc = (h / 6.0) * (fine_values[0:-1:2] + 4.0 * fine_values[1::2] + fine_values[2::2])
    out = np.zeros(n_steps + 1)
    out[:-1] = inc[::-1].cumsum()[::-1]
    return out


def _logdet_sandwich(q_sqrt: np.ndarray, y: np.ndarray, label: str, t: float) -> float:
    """log det(I - 2 Q y) computed as det(I - 2 Q^{1/2} y Q^{1/2}) for stability."""
    d = q_sqrt.shape[0]
    core = np.eye(d) - 2.0 * q_sqrt @ y @ q_sqrt
    eigs = np.linalg.eigvalsh(symmetrize(core))
    if eigs.min() <= 0.0:
        raise WellPosednessError(
            f"(I - 2 Q {label}) lost positive definiteness at t={t:.6g}", t=t
        )
    return float(np.sum(np.log(eigs)))


def solve_diffusion_value(
    regime: Regime,
    params: ModelParams,
    grid: TimeGrid,
    qpath: CovariancePath,
    full_coeffs: CoefficientPath,
) -> DiffusionValueParts:
    """Assemble (A_H, B_H, C_H), xi, K terms, and Delta_X for regime R or J."""
    if regime not in (Regime.R, Regime.J):
        raise ParameterError(f"diffusion value solver handles regimes R and J, not {regime}")
    if qpath.regime != regime:
        raise ParameterError(f"covariance path is for regime {qpath.regime}, not {regime}")
    if params.theta == 0.0:
        raise ParameterError("log utility (theta = 0) is handled by the log-utility solver")

    d = params.d
    n_nodes = grid.steps + 1
    precision = obs_precision(regime, params)
    xi_fine = solve_xi(params, grid, precision)
    xi = xi_fine[::2]
    Q = qpath.Q
    A_F, B_F, C_F = full_coeffs.A, full_coeffs.B, full_coeffs.C
    if full_coeffs.A_fine is None:
        raise ParameterError("full-information coefficients lack half-step values")
    A_F_fine = full_coeffs.A_fine
    n_fine = len(A_F_fine)

    under_fine = np.array(
        [np.trace(params.Sigma_mu @ (A_F_fine[i] - xi_fine[i])) for i in range(n_fine)]
    )
    K_under = _reverse_cumsimpson(under_fine, grid.h)

    K_over = np.zeros(n_nodes)
    if regime == Regime.J:
        prec_J = np.linalg.inv(params.Sigma_J)
        over_fine = np.empty(n_fine)
        for i in range(n_fine):
            q_i = qpath.Q_fine[i]
            phi = np.linalg.solve(np.eye(d) - 2.0 * q_i @ A_F_fine[i], q_i)
            over_fine[i] = 0.5 * np.trace(phi @ prec_J)
        K_over = _reverse_cumsimpson(over_fine, grid.h)

    A_H = np.empty((n_nodes, d, d))
    B_H = np.empty((n_nodes, d))
    C_H = np.empty(n_nodes)
    delta_X = np.empty(n_nodes)
    nodes = grid.nodes
    for i in range(n_nodes):
        q_sqrt = sym_sqrt(Q[i])
        ld_xi = _logdet_sandwich(q_sqrt, xi[i], "xi", float(nodes[i]))
        ld_af = _logdet_sandwich(q_sqrt, A_F[i], "A_F", float(nodes[i]))
        delta_X[i] = 0.5 * (ld_xi - ld_af) + K_under[i] - K_over[i]
        try:
            a_bar, b_bar, c_bar = gaussian_average_coeffs(A_F[i], B_F[i], float(C_F[i]), Q[i])
        except WellPosednessError as exc:
            raise WellPosednessError(f"{exc} at t={nodes[i]:.6g}", t=float(nodes[i])) from None
        A_H[i], B_H[i] = a_bar, b_bar
        C_H[i] = c_bar - params.theta * delta_X[i]

    coeffs = CoefficientPath(grid, A_H, B_H, C_H, regime=regime.value)
    return DiffusionValueParts(regime, params, coeffs, xi, K_under, K_over, delta_X, qpath)


def diffusion_value_and_rule(
    parts: DiffusionValueParts, t: float, m: np.ndarray
) -> tuple[float, np.ndarray]:
    """Value V^H(t, m) and the optimal allocation at a grid node.

    The rule decomposes as myopic + hedging: Pi_F(m) plus
    1/(1-theta) Sigma_R^{-1} Q_t (2 A_H m + B_H); the hedging demand
    vanishes at T and whenever Q_t = 0.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    i = parts.grid.index_of(t)
    a, b, c = parts.coeffs.A[i], parts.coeffs.B[i], parts.coeffs.C[i]
    value = float(np.exp(m @ a @ m + b @ m + c))
    q = parts.qpath.Q[i]
    params = parts.params
    hedge = np.linalg.solve(params.Sigma_R, q @ (2.0 * a @ m + b)) / (1.0 - params.theta)
    return value, myopic_rule(m, params) + hedge
