"""Market model: hidden mean-reverting drift, returns, and expert opinions.

The traded assets have return dynamics dR = mu dt + sigma_R dW^R where the
drift mu follows a mean-reverting Gaussian (Ornstein-Uhlenbeck) process that
investors cannot observe. Extra information arrives either as discrete noisy
views Z_k = mu_{t_k} + Gamma^{1/2} eps_k at known dates, or as a continuous
observation process dJ = mu dt + sigma_J dW^J.

Simulation uses the exact Gaussian OU transition per step (no Euler bias in
the drift path); returns and J use left-point drift quadrature, whose O(h)
bias is dominated by Monte Carlo error at the path counts used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from .errors import MissingObservationError, ParameterError, ScheduleError
from .numerics import TimeGrid, is_psd, min_eigval, sym_sqrt, symmetrize

# stream ids for counter-based per-path seed derivation
STREAM_W_R = 0
STREAM_W_MU = 1
STREAM_W_J = 2
STREAM_EPS = 3


def _as_vector(x, d: int, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if v.shape != (d,):
        raise ParameterError(f"{name} must be a {d}-vector, got shape {v.shape}")
    return v


def _as_matrix(x, rows: int, name: str, cols: int | None = None) -> np.ndarray:
    m = np.atleast_2d(np.asarray(x, dtype=float))
    if m.shape[0] != rows or (cols is not None and m.shape[1] != cols):
        want = f"({rows}, {cols})" if cols is not None else f"({rows}, *)"
        raise ParameterError(f"{name} must have shape {want}, got {m.shape}")
    return m


@dataclass(frozen=True)
class ModelParams:
    """All market, expert, and preference constants.

    theta is the power-utility exponent (< 1); theta = 0 selects log
    utility. (m0, q0) are the filter's initial conditional moments of the
    drift, (mu0_mean, mu0_cov) the distribution the simulated drift actually
    starts from; the closed-form/Monte-Carlo comparisons assume the two
    coincide, as they do in the default configuration.
    """

    d: int
    kappa: np.ndarray
    mu_bar: np.ndarray
    sigma_mu: np.ndarray
    sigma_R: np.ndarray
    sigma_J: np.ndarray
    Gamma: np.ndarray
    theta: float
    T: float
    m0: np.ndarray
    q0: np.ndarray
    mu0_mean: np.ndarray
    mu0_cov: np.ndarray
    x0: float = 1.0

    def __post_init__(self):
        d = self.d
        if not (isinstance(d, (int, np.integer)) and d >= 1):
            raise ParameterError(f"d must be a positive integer, got {d!r}")
        coerce = object.__setattr__
        coerce(self, "kappa", _as_matrix(self.kappa, d, "kappa", d))
        coerce(self, "mu_bar", _as_vector(self.mu_bar, d, "mu_bar"))
        coerce(self, "sigma_mu", _as_matrix(self.sigma_mu, d, "sigma_mu"))
        coerce(self, "sigma_R", _as_matrix(self.sigma_R, d, "sigma_R"))
        coerce(self, "sigma_J", _as_matrix(self.sigma_J, d, "sigma_J"))
        coerce(self, "Gamma", _as_matrix(self.Gamma, d, "Gamma", d))
        coerce(self, "m0", _as_vector(self.m0, d, "m0"))
        coerce(self, "q0", _as_matrix(self.q0, d, "q0", d))
        coerce(self, "mu0_mean", _as_vector(self.mu0_mean, d, "mu0_mean"))
        coerce(self, "mu0_cov", _as_matrix(self.mu0_cov, d, "mu0_cov", d))

        if min_eigval(self.kappa) <= 0:
            raise ParameterError("kappa must be positive definite (symmetric part)")
        if min_eigval(self.Sigma_R) <= 0:
            raise ParameterError("sigma_R sigma_R^T must be positive definite")
        if min_eigval(self.Gamma) <= 0 or not np.allclose(self.Gamma, self.Gamma.T):
            raise ParameterError("Gamma must be symmetric positive definite")
        for name, mat in (("q0", self.q0), ("mu0_cov", self.mu0_cov)):
            if not np.allclose(mat, mat.T) or not is_psd(mat):
                raise ParameterError(f"{name} must be symmetric positive semi-definite")
        if not self.theta < 1.0:
            raise ParameterError(f"theta must be < 1, got {self.theta}")
        if not self.T > 0:
            raise ParameterError(f"T must be positive, got {self.T}")
        if not self.x0 > 0:
            raise ParameterError(f"x0 must be positive, got {self.x0}")

    @property
    def Sigma_R(self) -> np.ndarray:
        return self.sigma_R @ self.sigma_R.T

    @property
    def Sigma_mu(self) -> np.ndarray:
        return self.sigma_mu @ self.sigma_mu.T

    @property
    def Sigma_J(self) -> np.ndarray:
        return self.sigma_J @ self.sigma_J.T

    @property
    def is_log_utility(self) -> bool:
        return self.theta == 0.0

    def require_sigma_J_pd(self):
        if min_eigval(self.Sigma_J) <= 0:
            raise ParameterError("sigma_J sigma_J^T must be positive definite for regime J")

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace as _replace

        return _replace(self, **changes)

    @classmethod
    def defaults(cls) -> "ModelParams":
        """Baseline one-asset configuration used by the bundled scenarios.

        The drift starts from its stationary distribution and the filter is
        initialized with the same moments (an investor who knows the model
        but nothing extra about the current drift).
        """
        kappa = 3.0
        sigma_mu = 1.0
        q_stat = sigma_mu**2 / (2 * kappa)
        return cls(
            d=1,
            kappa=kappa,
            mu_bar=0.0,
            sigma_mu=sigma_mu,
            sigma_R=0.25,
            sigma_J=0.1,
            Gamma=0.1,
            theta=0.3,
            T=1.0,
            m0=0.0,
            q0=q_stat,
            mu0_mean=0.0,
            mu0_cov=q_stat,
            x0=1.0,
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        required = {
            "d", "kappa", "mu_bar", "sigma_mu", "sigma_R", "sigma_J",
            "Gamma", "theta", "T", "m0", "q0", "mu0_mean", "mu0_cov",
        }
        missing = required - doc.keys()
        if missing:
            raise ParameterError(f"params document missing fields: {sorted(missing)}")
        unknown = doc.keys() - required - {"x0"}
        if unknown:
            raise ParameterError(f"params document has unknown fields: {sorted(unknown)}")
        return cls(**{k: doc[k] for k in doc})

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "kappa": self.kappa.tolist(),
            "mu_bar": self.mu_bar.tolist(),
            "sigma_mu": self.sigma_mu.tolist(),
            "sigma_R": self.sigma_R.tolist(),
            "sigma_J": self.sigma_J.tolist(),
            "Gamma": self.Gamma.tolist(),
            "theta": self.theta,
            "T": self.T,
            "m0": self.m0.tolist(),
            "q0": self.q0.tolist(),
            "mu0_mean": self.mu0_mean.tolist(),
            "mu0_cov": self.mu0_cov.tolist(),
            "x0": self.x0,
        }


@dataclass(frozen=True)
class ExpertSchedule:
    """Known information dates 0 = t_0 < t_1 < ... < t_{n-1} < T.

    gamma_mode "fixed" keeps the view covariance at params.Gamma for every
    n; "linear" scales it as (n/T) sigma_J sigma_J^T and ties the view noise
    to the increments of the continuous expert process, which requires
    equidistant dates.
    """

    dates: np.ndarray
    gamma_mode: str = "fixed"

    def __post_init__(self):
        dates = np.atleast_1d(np.asarray(self.dates, dtype=float)).reshape(-1)
        object.__setattr__(self, "dates", dates)
        if self.gamma_mode not in ("fixed", "linear"):
            raise ScheduleError(f"gamma_mode must be 'fixed' or 'linear', got {self.gamma_mode!r}")
        if self.n > 0:
            if dates[0] != 0.0:
                raise ScheduleError(f"first information date must be 0, got {dates[0]}")
            if self.n > 1 and not np.all(np.diff(dates) > 0):
                raise ScheduleError("information dates must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.dates)

    @classmethod
    def equidistant(cls, n: int, T: float, gamma_mode: str = "fixed") -> "ExpertSchedule":
        if n < 0:
            raise ScheduleError(f"n must be non-negative, got {n}")
        dates = np.arange(n) * (T / n) if n > 0 else np.empty(0)
        return cls(dates=dates, gamma_mode=gamma_mode)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExpertSchedule":
        unknown = doc.keys() - {"dates", "n", "gamma_mode"}
        if unknown:
            raise ScheduleError(f"schedule document has unknown fields: {sorted(unknown)}")
        if "dates" not in doc:
            raise ScheduleError("schedule document missing 'dates'")
        sched = cls(dates=doc["dates"], gamma_mode=doc.get("gamma_mode", "fixed"))
        if "n" in doc and doc["n"] != sched.n:
            raise ScheduleError(f"schedule 'n'={doc['n']} disagrees with {sched.n} dates")
        return sched

    def to_dict(self) -> dict:
        return {"dates": self.dates.tolist(), "n": self.n, "gamma_mode": self.gamma_mode}

    def validate_against(self, params: ModelParams):
        if self.n > 0 and self.dates[-1] >= params.T:
            raise ScheduleError(
                f"last information date {self.dates[-1]} must lie before T={params.T}"
            )
        if self.gamma_mode == "linear":
            params.require_sigma_J_pd()
            if self.n > 0:
                step = params.T / self.n
                if not np.allclose(self.dates, np.arange(self.n) * step, atol=1e-12):
                    raise ScheduleError("linear gamma_mode requires equidistant dates k*T/n")

    def delta_n(self, T: float) -> float:
        if self.n == 0:
            raise ScheduleError("delta_n undefined for an empty schedule")
        return T / self.n

    def gamma_for(self, params: ModelParams) -> np.ndarray:
        """Effective view covariance under this schedule's gamma mode."""
        if self.gamma_mode == "linear":
            return (self.n / params.T) * params.Sigma_J
        return params.Gamma

    def grid_indices(self, grid: TimeGrid) -> np.ndarray:
        """Grid node index of every information date; off-grid dates are an error."""
        try:
            return np.array([grid.index_of(t) for t in self.dates], dtype=int)
        except Exception as exc:
            raise ScheduleError(f"information date off the time grid: {exc}") from exc


def master_grid(params: ModelParams, schedule: ExpertSchedule | None = None,
                base_steps: int = 2000) -> TimeGrid:
    """Uniform grid on [0, T] with at least ``base_steps`` steps whose nodes
    contain every information date (steps rounded up to a multiple of n for
    equidistant schedules)."""
    steps = base_steps
    if schedule is not None and schedule.n > 0:
        n = schedule.n
        step = params.T / n
        if np.allclose(schedule.dates, np.arange(n) * step, atol=1e-12):
            steps = n * max(1, int(np.ceil(base_steps / n)))
        grid = TimeGrid(0.0, params.T, steps)
        schedule.grid_indices(grid)  # validates alignment
        return grid
    return TimeGrid(0.0, params.T, steps)


@dataclass(frozen=True)
class PathBundle:
    """One simulated world on a shared uniform grid.

    J and views may be absent when the caller only needs the return process.
    ``seed_info`` records (master seed, path index) so a bundle can be
    reproduced bit-for-bit in isolation.
    """

    grid: TimeGrid
    mu: np.ndarray
    R: np.ndarray
    J: np.ndarray | None = None
    view_dates: np.ndarray = field(default_factory=lambda: np.empty(0))
    views: np.ndarray | None = None
    seed_info: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes


def path_rng(master_seed: int, path_index: int, stream: int) -> np.random.Generator:
    """Counter-based stream derivation: independent of batch order and size."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(path_index, stream))
    )


class _OUStepper:
    """Precomputed exact one-step Gaussian transition for the drift."""

    def __init__(self, params: ModelParams, h: float):
        kappa = params.kappa
        self.E_h = expm(-kappa * h)
        self.q_inf = stationary_moments(params)[1]
        step_cov = self.q_inf - self.E_h @ self.q_inf @ self.E_h.T
        self.noise_sqrt = sym_sqrt(symmetrize(step_cov))
        self.mu_bar = params.mu_bar


def stationary_moments(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Stationary mean and covariance of the drift process.

    The covariance solves the Lyapunov identity kappa q + q kappa^T =
    Sigma_mu (scalar case: sigma_mu^2 / (2 kappa)).
    """
    q = solve_continuous_lyapunov(params.kappa, params.Sigma_mu)
    q = symmetrize(q)
    resid = params.kappa @ q + q @ params.kappa.T - params.Sigma_mu
    if np.linalg.norm(resid) > 1e-10 * max(1.0, np.linalg.norm(params.Sigma_mu)):
        raise ParameterError("Lyapunov solve failed; check that kappa is positive definite")
    return params.mu_bar.copy(), q


def simulate_paths(
    params: ModelParams,
    schedule: ExpertSchedule | None,
    grid_step: float,
    count: int,
    seed: int,
    with_J: bool = True,
    with_views: bool = True,
) -> Iterator[PathBundle]:
    """Yield ``count`` independent path bundles on the uniform grid.

    The drift uses the exact OU transition; R and J accumulate left-point
    drift increments plus their Brownian parts. Each path draws from its own
    derived streams, so bundle i is the same whether generated alone or as
    part of a batch.
    """
    steps = round(params.T / grid_step)
    if steps < 1 or abs(steps * grid_step - params.T) > 1e-9 * params.T:
        raise ScheduleError(f"grid_step {grid_step} does not divide the horizon T={params.T}")
    grid = TimeGrid(0.0, params.T, steps)
    if schedule is not None:
        schedule.validate_against(params)
        info_idx = schedule.grid_indices(grid)
    else:
        info_idx = np.empty(0, dtype=int)

    stepper = _OUStepper(params, grid.h)
    d = params.d
    d1 = params.sigma_R.shape[1]
    d3 = params.sigma_J.shape[1]
    mu0_sqrt = sym_sqrt(params.mu0_cov)
    sqrt_h = np.sqrt(grid.h)
    h = grid.h
    want_views = with_views and schedule is not None and schedule.n > 0
    if want_views and schedule.gamma_mode == "linear" and not with_J:
        raise MissingObservationError("linear-mode views require the J path; pass with_J=True")
    gamma_sqrt = None
    if want_views and schedule.gamma_mode == "fixed":
        gamma_sqrt = sym_sqrt(schedule.gamma_for(params))

    for i in range(count):
        rng_mu = path_rng(seed, i, STREAM_W_MU)
        mu = np.empty((steps + 1, d))
        mu[0] = params.mu0_mean + mu0_sqrt @ rng_mu.standard_normal(d)
        xi_mu = rng_mu.standard_normal((steps, d))
        for j in range(steps):
            centered = mu[j] - stepper.mu_bar
            mu[j + 1] = stepper.mu_bar + stepper.E_h @ centered + stepper.noise_sqrt @ xi_mu[j]

        rng_R = path_rng(seed, i, STREAM_W_R)
        dW_R = sqrt_h * rng_R.standard_normal((steps, d1))
        R = np.zeros((steps + 1, d))
        np.cumsum(mu[:-1] * h + dW_R @ params.sigma_R.T, axis=0, out=R[1:])

        J = None
        if with_J:
            rng_J = path_rng(seed, i, STREAM_W_J)
            dW_J = sqrt_h * rng_J.standard_normal((steps, d3))
            J = np.zeros((steps + 1, d))
            np.cumsum(mu[:-1] * h + dW_J @ params.sigma_J.T, axis=0, out=J[1:])

        bundle = PathBundle(
            grid=grid, mu=mu, R=R, J=J,
            view_dates=schedule.dates.copy() if schedule is not None else np.empty(0),
            views=None,
            seed_info={"seed": seed, "path_index": i},
        )
        if want_views:
            views = _views_for_bundle(bundle, schedule, params, info_idx, gamma_sqrt)
            bundle = PathBundle(
                grid=grid, mu=mu, R=R, J=J,
                view_dates=schedule.dates.copy(), views=views,
                seed_info=bundle.seed_info,
            )
        yield bundle


def _views_for_bundle(bundle, schedule, params, info_idx, gamma_sqrt):
    n = schedule.n
    d = params.d
    if schedule.gamma_mode == "fixed":
        rng_eps = path_rng(bundle.seed_info["seed"], bundle.seed_info["path_index"], STREAM_EPS)
        eps = rng_eps.standard_normal((n, d))
        return bundle.mu[info_idx] + eps @ gamma_sqrt.T
    # linear mode: view noise is the J-Brownian increment over [t_k, t_{k+1}],
    # recovered exactly from J minus its accumulated left-point drift
    grid = bundle.grid
    h = grid.h
    delta = schedule.delta_n(params.T)
    drift_cum = np.zeros((grid.steps + 1, d))
    np.cumsum(bundle.mu[:-1] * h, axis=0, out=drift_cum[1:])
    right_idx = np.append(info_idx[1:], grid.steps)
    noise = (bundle.J[right_idx] - bundle.J[info_idx]) - (drift_cum[right_idx] - drift_cum[info_idx])
    return bundle.mu[info_idx] + noise / delta


def generate_expert_views(
    bundle: PathBundle,
    schedule: ExpertSchedule,
    params: ModelParams,
    Gamma: np.ndarray | None = None,
) -> np.ndarray:
    """Expert views for an existing bundle; deterministic given the bundle.

    Fixed mode redraws the view noise from the bundle's own eps stream, so
    calling this twice gives identical views. Linear mode rebuilds the views
    from the same J-Brownian increments that drove bundle.J.
    """
    schedule.validate_against(params)
    info_idx = schedule.grid_indices(bundle.grid)
    if schedule.gamma_mode == "linear":
        if bundle.J is None:
            raise MissingObservationError("linear-mode views need bundle.J")
        return _views_for_bundle(bundle, schedule, params, info_idx, None)
    gamma = params.Gamma if Gamma is None else np.atleast_2d(np.asarray(Gamma, dtype=float))
    if not np.allclose(gamma, gamma.T) or min_eigval(gamma) <= 0:
        raise ParameterError("Gamma must be symmetric positive definite")
    return _views_for_bundle(bundle, schedule, params, info_idx, sym_sqrt(gamma))
