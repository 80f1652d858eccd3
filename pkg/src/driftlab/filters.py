"""Drift filters for the four information regimes.

Regime R sees returns only, J sees returns plus the continuous expert
process, Z sees returns plus discrete expert views, F observes the drift
itself. For R/J/Z the conditional distribution of the drift is Gaussian
with mean M and covariance Q; Q solves a matrix Riccati ODE and is
deterministic, while M is driven by the observation innovations. Regime Z
adds a conjugate Bayesian update at every information date:

    rho_k = Gamma (Q- + Gamma)^{-1}
    M+    = rho_k M- + (I - rho_k) Z_k
    Q+    = rho_k Q-
    dQ    = -Q- (Gamma + Q-)^{-1} Q-

The t = 0 view is applied as a jump at 0+: a Z covariance path stores the
pre-view pair (m0, q0) as the left limit at its first information date and
the post-view values at the node itself.

Covariance paths are integrated on a half-step fine grid so that downstream
RK4 value solvers can read Q at step midpoints without interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    IntegrationError,
    MissingObservationError,
    ParameterError,
    ScheduleError,
)
from .market import ExpertSchedule, ModelParams, PathBundle
from .numerics import PSD_TOL, TimeGrid, symmetrize


class Regime(str, Enum):
    R = "R"
    J = "J"
    Z = "Z"
    F = "F"


def obs_precision(regime: Regime, params: ModelParams) -> np.ndarray:
    """Combined observation precision entering the Riccati quadratic term."""
    prec = np.linalg.inv(params.Sigma_R)
    if regime == Regime.J:
        params.require_sigma_J_pd()
        prec = prec + np.linalg.inv(params.Sigma_J)
    return symmetrize(prec)


def riccati_rhs(params: ModelParams, precision: np.ndarray):
    sigma_mu = params.Sigma_mu
    kappa = params.kappa

    def rhs(_t, q):
        return sigma_mu - kappa @ q - q @ kappa.T - q @ precision @ q

    return rhs


def _psd_project(q: np.ndarray, t: float) -> tuple[np.ndarray, int]:
    w, v = np.linalg.eigh(q)
    lo = w.min()
    if lo >= 0.0:
        return q, 0
    if lo < -PSD_TOL:
        raise IntegrationError(
            f"covariance lost positive semi-definiteness at t={t:.6g} "
            f"(min eigenvalue {lo:.3e})",
            t=t,
        )
    return symmetrize((v * np.clip(w, 0.0, None)) @ v.T), 1


def _propagate(rhs, q_init: np.ndarray, t0: float, h: float, steps: int):
    """RK4 with per-step symmetrization and a PSD guard.

    Eigenvalues dipping below zero by at most PSD_TOL are clipped (counted);
    worse violations abort with the failing time.
    """
    d = q_init.shape[0]
    out = np.empty((steps + 1, d, d))
    out[0] = symmetrize(q_init)
    q = out[0]
    clipped = 0
    for j in range(steps):
        t = t0 + j * h
        k1 = rhs(t, q)
        k2 = rhs(t + 0.5 * h, q + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, q + 0.5 * h * k2)
        k4 = rhs(t + h, q + h * k3)
        q = symmetrize(q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if not np.all(np.isfinite(q)):
            raise IntegrationError(f"Riccati flow blew up at t={t + h:.6g}", t=t + h)
        q, c = _psd_project(q, t + h)
        clipped += c
        out[j + 1] = q
    return out, clipped


def propagate_covariance(
    regime: Regime,
    q_init: np.ndarray,
    interval: tuple[float, float],
    params: ModelParams,
    steps: int = 2000,
) -> np.ndarray:
    """Solve dQ = Sigma_mu - kappa Q - Q kappa^T - Q P Q on [a, b].

    P is the regime's observation precision (regime F has no filtering
    problem and is rejected). Returns Q at the steps+1 uniform nodes.
    """
    if regime == Regime.F:
        raise ParameterError("regime F has zero filter covariance; nothing to propagate")
    q_init = np.atleast_2d(np.asarray(q_init, dtype=float))
    if not np.allclose(q_init, q_init.T) or np.linalg.eigvalsh(q_init).min() < -PSD_TOL:
        raise ParameterError("q_init must be symmetric positive semi-definite")
    a, b = interval
    grid = TimeGrid(a, b, steps)
    path, _ = _propagate(riccati_rhs(params, obs_precision(regime, params)), q_init, a, grid.h, steps)
    return path


def update_at_view(
    m_minus: np.ndarray, q_minus: np.ndarray, z: np.ndarray, Gamma: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Conjugate Gaussian update of the filter at an information date.

    Returns (m_plus, q_plus, rho, deltaQ). Equivalent to the Bayes posterior
    for a N(m-, q-) prior and a view observed with noise covariance Gamma.
    """
    m_minus = np.atleast_1d(np.asarray(m_minus, dtype=float))
    q_minus = np.atleast_2d(np.asarray(q_minus, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    d = len(m_minus)
    inv = np.linalg.inv(Gamma + q_minus)
    rho = Gamma @ inv
    m_plus = rho @ m_minus + (np.eye(d) - rho) @ z
    q_plus = symmetrize(rho @ q_minus)
    delta_q = symmetrize(-q_minus @ inv @ q_minus)
    return m_plus, q_plus, rho, delta_q


@dataclass
class CovariancePath:
    """Deterministic filter covariance on [0, T] with jump bookkeeping.

    ``Q_fine`` holds right-continuous values on the half-step grid; at each
    information date the pre-jump (left-limit) matrix lives in ``Q_minus``.
    ``clipped`` counts PSD-guard projections applied during integration.
    """

    grid: TimeGrid
    regime: Regime
    Q_fine: np.ndarray
    info_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    info_dates: np.ndarray = field(default_factory=lambda: np.empty(0))
    Q_minus: np.ndarray | None = None
    rho: np.ndarray | None = None
    deltaQ: np.ndarray | None = None
    clipped: int = 0

    @property
    def Q(self) -> np.ndarray:
        """Values at the master grid nodes (right-continuous)."""
        return self.Q_fine[::2]

    @property
    def n_info(self) -> int:
        return len(self.info_idx)

    def at(self, t: float, side: str = "right") -> np.ndarray:
        fine_idx = round(2.0 * (t - self.grid.t0) / self.grid.h)
        half = 0.5 * self.grid.h
        if abs(self.grid.t0 + fine_idx * half - t) > 1e-9:
            raise ScheduleError(f"t={t} is not on the half-step covariance grid")
        if side == "left":
            k = np.searchsorted(self.info_idx * 2, fine_idx)
            if k < self.n_info and self.info_idx[k] * 2 == fine_idx:
                return self.Q_minus[k]
        return self.Q_fine[fine_idx]

    def fine_slice(self, i0: int, i1: int, left_limit_at_end: bool = False) -> np.ndarray:
        """Q on the fine grid between master nodes i0..i1 (inclusive)."""
        seg = self.Q_fine[2 * i0 : 2 * i1 + 1].copy()
        if left_limit_at_end:
            k = np.searchsorted(self.info_idx, i1)
            if k < self.n_info and self.info_idx[k] == i1:
                seg[-1] = self.Q_minus[k]
        return seg


def covariance_path(
    regime: Regime,
    params: ModelParams,
    schedule: ExpertSchedule | None,
    grid: TimeGrid,
) -> CovariancePath:
    """Full-horizon covariance path for a regime, jumps included for Z."""
    d = params.d
    fine_steps = 2 * grid.steps
    half = 0.5 * grid.h
    if regime == Regime.F:
        return CovariancePath(grid, regime, np.zeros((fine_steps + 1, d, d)))

    if regime in (Regime.R, Regime.J):
        rhs = riccati_rhs(params, obs_precision(regime, params))
        q_fine, clipped = _propagate(rhs, params.q0, 0.0, half, fine_steps)
        return CovariancePath(grid, regime, q_fine, clipped=clipped)

    if schedule is None or schedule.n == 0:
        rhs = riccati_rhs(params, obs_precision(Regime.R, params))
        q_fine, clipped = _propagate(rhs, params.q0, 0.0, half, fine_steps)
        return CovariancePath(grid, regime, q_fine, clipped=clipped)

    schedule.validate_against(params)
    info_idx = schedule.grid_indices(grid)
    gamma = schedule.gamma_for(params)
    rhs = riccati_rhs(params, obs_precision(Regime.R, params))

    n = schedule.n
    q_fine = np.empty((fine_steps + 1, d, d))
    q_minus = np.empty((n, d, d))
    rho = np.empty((n, d, d))
    delta_q = np.empty((n, d, d))
    clipped = 0

    q = np.atleast_2d(params.q0)
    boundaries = list(2 * info_idx) + [fine_steps]
    for k in range(n):
        q_minus[k] = q
        _, q, rho[k], delta_q[k] = update_at_view(np.zeros(d), q, np.zeros(d), gamma)
        i0, i1 = boundaries[k], boundaries[k + 1]
        seg, c = _propagate(rhs, q, grid.t0 + i0 * half, half, i1 - i0)
        clipped += c
        q_fine[i0 : i1 + 1] = seg
        q = seg[-1]

    return CovariancePath(
        grid, regime, q_fine,
        info_idx=info_idx, info_dates=schedule.dates.copy(),
        Q_minus=q_minus, rho=rho, deltaQ=delta_q, clipped=clipped,
    )


@dataclass
class FilterPath:
    """Conditional mean path for one bundle plus the shared covariance path.

    For regime Z, ``M_minus[k]`` is the left limit of M at information date
    k (M_minus[0] is the filter mean before the time-0 view).
    """

    grid: TimeGrid
    regime: Regime
    M: np.ndarray
    qpath: CovariancePath
    M_minus: np.ndarray | None = None

    @property
    def Q(self) -> np.ndarray:
        return self.qpath.Q


def filter_mean_step(
    m, dR, q_gain_R, kappa_T, mu_bar, h, dJ=None, q_gain_J=None
):
    """One Euler innovation step, batched over leading axes (row convention)."""
    drift = (mu_bar - m) @ kappa_T * h
    innov = (dR - m * h) @ q_gain_R.T
    if dJ is not None:
        innov = innov + (dJ - m * h) @ q_gain_J.T
    return m + drift + innov


def run_filter(
    regime: Regime,
    bundle: PathBundle,
    schedule: ExpertSchedule | None,
    params: ModelParams,
    qpath: CovariancePath | None = None,
) -> FilterPath:
    """Filter one bundle: propagate M in innovation form, update at views.

    The innovation increments are reconstructed from the simulated
    observations as dR - M dt (and dJ - M dt for regime J). Pass a
    precomputed ``qpath`` to share the deterministic covariance across
    bundles.
    """
    grid = bundle.grid
    if regime == Regime.F:
        q = covariance_path(Regime.F, params, None, grid)
        return FilterPath(grid, regime, bundle.mu.copy(), q)

    if qpath is None:
        qpath = covariance_path(regime, params, schedule if regime == Regime.Z else None, grid)
    if qpath.regime != regime:
        raise ParameterError(f"covariance path is for regime {qpath.regime}, not {regime}")

    if regime == Regime.J and bundle.J is None:
        raise MissingObservationError("regime J requires bundle.J")
    views_needed = regime == Regime.Z and qpath.n_info > 0
    if views_needed and bundle.views is None:
        raise MissingObservationError("regime Z requires expert views on the bundle")

    d = params.d
    h = grid.h
    kappa_T = params.kappa.T
    prec_R = np.linalg.inv(params.Sigma_R)
    prec_J = np.linalg.inv(params.Sigma_J) if regime == Regime.J else None
    Q = qpath.Q
    gains_R = Q @ prec_R
    gains_J = Q @ prec_J if regime == Regime.J else None

    info_pos = {int(i): k for k, i in enumerate(qpath.info_idx)} if views_needed else {}
    gamma = schedule.gamma_for(params) if views_needed else None

    M = np.empty((grid.steps + 1, d))
    M_minus = np.empty((qpath.n_info, d)) if views_needed else None
    m = np.atleast_1d(params.m0).astype(float)

    for i in range(grid.steps + 1):
        k = info_pos.get(i)
        if k is not None:
            M_minus[k] = m
            m, _, _, _ = update_at_view(m, qpath.Q_minus[k], bundle.views[k], gamma)
        M[i] = m
        if i == grid.steps:
            break
        dR = bundle.R[i + 1] - bundle.R[i]
        dJ = bundle.J[i + 1] - bundle.J[i] if regime == Regime.J else None
        m = filter_mean_step(
            m, dR, gains_R[i], kappa_T, params.mu_bar, h,
            dJ=dJ, q_gain_J=gains_J[i] if regime == Regime.J else None,
        )

    return FilterPath(grid, regime, M, qpath, M_minus=M_minus)
