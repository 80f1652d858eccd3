"""Backward recursion for the investor observing discrete expert views.

Between information dates the value coefficients (A_k, B_k, C_k) solve the
dynamic-programming ODE system driven by the filter covariance Q (the same
system the diffusion regimes satisfy); at each information date the triple
is pasted through the jump of the conditional distribution:

    Lambda_k = (I + 2 A~ dQ_k)^{-1}            A~ = A_{k+1}(t_k)
    A_k(t_k) = Lambda_k A~
    B_k(t_k) = Lambda_k B~
    C_k(t_k) = C~ - 1/2 B~^T (dQ_k Lambda_k) B~ + 1/2 log det Lambda_k

where dQ_k <= 0 is the covariance decrement of the view update. The same map
applied at t = 0 yields the pre-view value v_0 (the time-0 view is not part
of the investor's initial information). The pasting is exactly the
closed-form Gaussian expectation of exp-quadratic functions, exposed here as
``gaussian_quadratic_expectation``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, WellPosednessError
from .filters import CovariancePath, Regime
from .market import ExpertSchedule, ModelParams
from .numerics import TimeGrid, sym_sqrt, symmetrize
from .value_full import myopic_rule


def hjb_coefficient_rhs(params: ModelParams, precision: np.ndarray):
    """Time derivatives of (A, B, C) given the current filter covariance.

    ``precision`` is the observation precision entering the diffusion part
    of the filter (Sigma_R^{-1} for return-only observation). Returned
    callable maps (Q, A, B) to (dA, dB, dC).
    """
    theta = params.theta
    kappa = params.kappa
    kappa_mu_bar = kappa @ params.mu_bar
    prec_R = np.linalg.inv(params.Sigma_R)
    c0 = theta / (2.0 * (1.0 - theta))
    c1 = theta / (1.0 - theta)

    def rhs(q, a, b):
        qa = q @ a        # Q A
        aq = qa.T         # A Q (A, Q symmetric)
        qb = q @ b
        da = (
            kappa.T @ a + a @ kappa
            - 2.0 * aq @ precision @ qa
            - 2.0 * c1 * aq @ prec_R @ qa
            - c1 * symmetrize(2.0 * aq @ prec_R)
            - c0 * prec_R
        )
        db = (
            kappa.T @ b
            - c1 * prec_R @ qb
            - 2.0 * aq @ precision @ qb
            - 2.0 * c1 * aq @ prec_R @ qb
            - 2.0 * a @ kappa_mu_bar
        )
        dc = (
            -b @ kappa_mu_bar
            - 0.5 * qb @ precision @ qb
            - c0 * qb @ prec_R @ qb
            - np.trace(precision @ q @ qa)
        )
        return symmetrize(da), db, dc

    return rhs


@dataclass
class Segment:
    """Value coefficients on one expert interval [t_{k-1}, t_k]."""

    index: int          # k, 1-based; segment n ends at T
    i0: int             # master grid node of t_{k-1}
    i1: int             # master grid node of t_k (or T)
    A: np.ndarray       # (i1-i0+1, d, d)
    B: np.ndarray
    C: np.ndarray


@dataclass
class PiecewiseCoefficients:
    """Per-interval coefficient paths plus the jump maps tying them together.

    ``pre_view`` holds the (A, B, C) triple at t = 0 before the time-0 view;
    evaluating the value function at t = 0 uses it, while the optimal
    strategy on [0, t_1) uses segment 1 (the post-view coefficients).
    ``jump_maps[k]`` is the Lambda matrix applied at information date k
    (k = 0 is the time-0 view).
    """

    grid: TimeGrid
    segments: list[Segment]
    jump_maps: dict[int, np.ndarray] = field(default_factory=dict)
    pre_view: tuple[np.ndarray, np.ndarray, float] | None = None
    theta: float = 0.3

    def segment_for(self, t: float, side: str = "right") -> Segment:
        i = self.grid.index_of(t)
        if side not in ("left", "right"):
            raise DomainError(f"side must be 'left' or 'right', got {side!r}")
        for seg in self.segments:
            if seg.i0 <= i <= seg.i1:
                if i == seg.i1 and side == "right" and seg.index < len(self.segments):
                    continue
                return seg
        raise DomainError(f"t={t} outside [0, T]")

    def coefficients_at(
        self, t: float, side: str = "right"
    ) -> tuple[np.ndarray, np.ndarray, float]:
        """(A, B, C) at time t.

        Convention: right-continuous at interior information dates; at t = 0
        the default is the pre-view triple v_0 (matching the investor's
        information at time zero), with side="right" selecting the post-view
        segment-1 values.
        """
        i = self.grid.index_of(t)
        if i == 0 and side != "right" and self.pre_view is not None:
            return self.pre_view
        seg = self.segment_for(t, side=side)
        j = i - seg.i0
        return seg.A[j], seg.B[j], float(seg.C[j])


def _pasting(a_tilde, b_tilde, c_tilde, delta_q, k):
    """Map the post-date triple through the information-date jump."""
    d = len(b_tilde)
    sigma_y = symmetrize(-delta_q)
    s = sym_sqrt(sigma_y)
    core = np.eye(d) - 2.0 * s @ a_tilde @ s
    eigs = np.linalg.eigvalsh(symmetrize(core))
    if eigs.min() <= 0.0:
        raise WellPosednessError(
            f"jump pasting at information date {k} is ill-posed "
            f"(min eigenvalue {eigs.min():.3e} of I + 2 A dQ)"
        )
    lam = np.linalg.inv(np.eye(d) + 2.0 * a_tilde @ delta_q)
    log_det_lam = -float(np.sum(np.log(eigs)))
    a_new = symmetrize(lam @ a_tilde)
    b_new = lam @ b_tilde
    c_new = c_tilde - 0.5 * b_tilde @ symmetrize(delta_q @ lam) @ b_tilde + 0.5 * log_det_lam
    return a_new, b_new, float(c_new), lam


def _integrate_segment(rhs, q_fine: np.ndarray, h: float, terminal, t_right: float):
    """Backward RK4 over one segment; q_fine holds Q at the half-step nodes."""
    m = (len(q_fine) - 1) // 2
    d = terminal[1].shape[0]
    A = np.empty((m + 1, d, d))
    B = np.empty((m + 1, d))
    C = np.empty(m + 1)
    A[m], B[m], C[m] = terminal
    a, b, c = terminal
    for j in range(m, 0, -1):
        da1, db1, dc1 = rhs(q_fine[2 * j], a, b)
        da2, db2, dc2 = rhs(q_fine[2 * j - 1], a - 0.5 * h * da1, b - 0.5 * h * db1)
        da3, db3, dc3 = rhs(q_fine[2 * j - 1], a - 0.5 * h * da2, b - 0.5 * h * db2)
        da4, db4, dc4 = rhs(q_fine[2 * j - 2], a - h * da3, b - h * db3)
        a = symmetrize(a - (h / 6.0) * (da1 + 2 * da2 + 2 * da3 + da4))
        b = b - (h / 6.0) * (db1 + 2 * db2 + 2 * db3 + db4)
        c = c - (h / 6.0) * (dc1 + 2 * dc2 + 2 * dc3 + dc4)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.isfinite(c)):
            t_fail = t_right - (m - j + 1) * h
            raise WellPosednessError(
                f"value coefficients exploded near t={t_fail:.6g}", t=float(t_fail)
            )
        A[j - 1], B[j - 1], C[j - 1] = a, b, c
    return A, B, C


def backward_recursion(
    params: ModelParams,
    schedule: ExpertSchedule | None,
    grid: TimeGrid,
    qpath_Z: CovariancePath,
) -> PiecewiseCoefficients:
    """Solve the coupled terminal-value problems interval by interval.

    Starts from (0, 0, 0) at T on the last interval; each earlier interval's
    terminal condition is the pasted triple at its right endpoint. With an
    empty schedule this degenerates to a single interval and reproduces the
    return-only regime's coefficients.
    """
    if params.theta == 0.0:
        raise ParameterError("log utility (theta = 0) is handled by the log-utility solver")
    if qpath_Z.regime != Regime.Z:
        raise ParameterError(f"expected a regime-Z covariance path, got {qpath_Z.regime}")

    d = params.d
    rhs = hjb_coefficient_rhs(params, np.linalg.inv(params.Sigma_R))
    n = qpath_Z.n_info
    boundaries = list(qpath_Z.info_idx) + [grid.steps] if n > 0 else [0, grid.steps]

    segments: list[Segment] = []
    jump_maps: dict[int, np.ndarray] = {}
    a = np.zeros((d, d))
    b = np.zeros(d)
    c = 0.0
    n_seg = max(n, 1)
    for k in range(n_seg, 0, -1):
        i0, i1 = boundaries[k - 1], boundaries[k]
        q_fine = qpath_Z.fine_slice(i0, i1, left_limit_at_end=True)
        A, B, C = _integrate_segment(rhs, q_fine, grid.h, (a, b, c), float(grid.nodes[i1]))
        segments.append(Segment(k, int(i0), int(i1), A, B, C))
        a, b, c = A[0], B[0], C[0]
        if n > 0:
            a, b, c, lam = _pasting(a, b, c, qpath_Z.deltaQ[k - 1], k - 1)
            jump_maps[k - 1] = lam

    segments.reverse()
    pre_view = (a, b, c) if n > 0 else (segments[0].A[0], segments[0].B[0], float(segments[0].C[0]))
    return PiecewiseCoefficients(grid, segments, jump_maps, pre_view, theta=params.theta)


def discrete_value_and_rule(
    pc: PiecewiseCoefficients,
    t: float,
    m: np.ndarray,
    qpath_Z: CovariancePath,
    params: ModelParams,
    side: str | None = None,
) -> tuple[float, np.ndarray]:
    """Value and optimal allocation at (t, m) for the discrete-view investor.

    Default convention: the value is right-continuous at interior
    information dates but pre-view at t = 0 (the time-0 view is not part of
    the initial information), while the rule always reflects the information
    actually available for trading (post-view). Pass side="left"/"right"
    to pin both explicitly, e.g. side="left" for the pre-jump pair at t_k.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    i = pc.grid.index_of(t)
    value_side = side if side is not None else ("left" if i == 0 else "right")
    rule_side = side if side is not None else "right"

    a_v, b_v, c_v = pc.coefficients_at(t, side=value_side)
    value = float(np.exp(m @ a_v @ m + b_v @ m + c_v))

    a, b, _ = pc.coefficients_at(t, side=rule_side)
    q = qpath_Z.at(t, side=rule_side)
    hedge = np.linalg.solve(params.Sigma_R, q @ (2.0 * a @ m + b)) / (1.0 - params.theta)
    return value, myopic_rule(m, params) + hedge


def gaussian_quadratic_expectation(
    U_mat: np.ndarray, b: np.ndarray, mean: np.ndarray, cov: np.ndarray
) -> float:
    """E[exp{(Y + b)^T U (Y + b)}] for Y ~ N(mean, cov) in closed form.

    Requires I - 2 U cov positive definite; otherwise the integral diverges.
    """
    U_mat = symmetrize(np.atleast_2d(np.asarray(U_mat, dtype=float)))
    cov = symmetrize(np.atleast_2d(np.asarray(cov, dtype=float)))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = len(b)
    s = sym_sqrt(cov)
    eigs = np.linalg.eigvalsh(symmetrize(np.eye(d) - 2.0 * s @ U_mat @ s))
    if eigs.min() <= 0.0:
        raise DomainError(
            f"I - 2 U cov is not positive definite (min eigenvalue {eigs.min():.3e}); "
            "the Gaussian integral diverges"
        )
    shift = mean + b
    core = np.linalg.solve(np.eye(d) - 2.0 * U_mat @ cov, U_mat)
    log_value = -0.5 * float(np.sum(np.log(eigs))) + shift @ symmetrize(core) @ shift
    return float(np.exp(log_value))
