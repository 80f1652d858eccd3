"""Full-information value function and the myopic decision rule.

The fully informed investor's value function is exponential-quadratic in the
drift state, V(t, m) = exp(m^T A m + m^T B + C), with coefficients solving a
terminal value problem backward from (0, 0, 0) at T:

    A' = -2 A Sigma_mu A + kappa^T A + A kappa - theta/(2(1-theta)) Sigma_R^{-1}
    B' = -2 A kappa mu_bar + (kappa^T - 2 A Sigma_mu) B
    C' = -1/2 B^T Sigma_mu B - B^T kappa mu_bar - tr(Sigma_mu A)

A is an autonomous matrix Riccati; for theta in (0, 1) it can blow up before
reaching t = 0, which is reported as an explosion time. The Gaussian-averaged
value E[V(t, m + q^{1/2} eps)] stays exponential-quadratic with transformed
coefficients; it needs (I - 2 A(t) q) positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError, ParameterError, WellPosednessError
from .market import ModelParams
from .numerics import TimeGrid, sym_sqrt, symmetrize


@dataclass
class CoefficientPath:
    """Time-gridded (A, B, C) triple of an exponential-quadratic value.

    When integrated in-house the path also carries values at step midpoints
    (``*_fine`` arrays on the half-step grid), which downstream quadratures
    and RK4 stages read to stay at fourth-order accuracy.
    """

    grid: TimeGrid
    A: np.ndarray  # (N+1, d, d)
    B: np.ndarray  # (N+1, d)
    C: np.ndarray  # (N+1,)
    regime: str = "F"
    A_fine: np.ndarray | None = None  # (2N+1, d, d)
    B_fine: np.ndarray | None = None
    C_fine: np.ndarray | None = None

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        i = self.grid.index_of(t)
        return self.A[i], self.B[i], float(self.C[i])

    def value(self, t: float, m: np.ndarray) -> float:
        a, b, c = self.at(t)
        m = np.atleast_1d(np.asarray(m, dtype=float))
        return float(np.exp(m @ a @ m + b @ m + c))


def _theta_source(params: ModelParams) -> np.ndarray:
    c0 = params.theta / (2.0 * (1.0 - params.theta))
    return c0 * np.linalg.inv(params.Sigma_R)


def solve_full_coefficients(params: ModelParams, grid: TimeGrid) -> CoefficientPath:
    """Backward RK4 sweep of the coupled (A, B, C) system on the grid.

    The three equations are integrated jointly so the B and C stages see
    stage-consistent A values; this is equivalent to solving A first, then
    B, then quadrature for C, without cross-interpolation error.
    """
    if params.theta == 0.0:
        raise ParameterError("log utility (theta = 0) is handled by the log-utility solver")
    d = params.d
    sigma_mu = params.Sigma_mu
    kappa = params.kappa
    kappa_mu_bar = kappa @ params.mu_bar
    source = _theta_source(params)

    def rhs(a, b):
        da = -2.0 * a @ sigma_mu @ a + kappa.T @ a + a @ kappa - source
        db = -2.0 * a @ kappa_mu_bar + (kappa.T - 2.0 * a @ sigma_mu) @ b
        dc = -0.5 * b @ sigma_mu @ b - b @ kappa_mu_bar - np.trace(sigma_mu @ a)
        return symmetrize(da), db, dc

    fine_steps = 2 * grid.steps
    h = 0.5 * grid.h
    A = np.zeros((fine_steps + 1, d, d))
    B = np.zeros((fine_steps + 1, d))
    C = np.zeros(fine_steps + 1)
    a, b, c = A[fine_steps], B[fine_steps], 0.0
    for j in range(fine_steps, 0, -1):
        da1, db1, dc1 = rhs(a, b)
        da2, db2, dc2 = rhs(a - 0.5 * h * da1, b - 0.5 * h * db1)
        da3, db3, dc3 = rhs(a - 0.5 * h * da2, b - 0.5 * h * db2)
        da4, db4, dc4 = rhs(a - h * da3, b - h * db3)
        a = symmetrize(a - (h / 6.0) * (da1 + 2 * da2 + 2 * da3 + da4))
        b = b - (h / 6.0) * (db1 + 2 * db2 + 2 * db3 + db4)
        c = c - (h / 6.0) * (dc1 + 2 * dc2 + 2 * dc3 + dc4)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.isfinite(c)):
            t_fail = grid.t0 + 0.5 * (j - 1) * grid.h
            raise WellPosednessError(
                f"value coefficients exploded near t={t_fail:.6g}; the horizon exceeds "
                "the problem's explosion time for this theta",
                t=float(t_fail),
            )
        A[j - 1], B[j - 1], C[j - 1] = a, b, c
    return CoefficientPath(
        grid, A[::2], B[::2], C[::2], regime="F", A_fine=A, B_fine=B, C_fine=C
    )


def myopic_rule(m: np.ndarray, params: ModelParams) -> np.ndarray:
    """Feedback rule of the fully informed investor, 1/(1-theta) Sigma_R^{-1} m.

    Time-independent; theta = 0 gives the log-utility rule Sigma_R^{-1} m.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    return np.linalg.solve(params.Sigma_R, m) / (1.0 - params.theta)


def gaussian_average_coeffs(
    a: np.ndarray, b: np.ndarray, c: float, q: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Coefficients of E[V(m + q^{1/2} eps)] for V = exp(m^T a m + b^T m + c).

    Requires (I - 2 a q) positive definite (checked in the symmetric sandwich
    form I - 2 q^{1/2} a q^{1/2}); failing that the Gaussian integral
    diverges, which is the well-posedness boundary.
    """
    d = len(b)
    q = symmetrize(np.atleast_2d(q))
    s = sym_sqrt(q)
    core = np.eye(d) - 2.0 * s @ a @ s
    eigs = np.linalg.eigvalsh(symmetrize(core))
    if eigs.min() <= 0.0:
        raise WellPosednessError(
            f"(I - 2 A q) is not positive definite (min eigenvalue {eigs.min():.3e})"
        )
    lhs = np.eye(d) - 2.0 * a @ q
    a_bar = symmetrize(np.linalg.solve(lhs, a))
    b_bar = np.linalg.solve(lhs, b)
    logdet = float(np.sum(np.log(np.linalg.eigvalsh(symmetrize(core)))))
    c_bar = c + 0.5 * b @ np.linalg.solve(np.eye(d) - 2.0 * q @ a, q) @ b - 0.5 * logdet
    return a_bar, b_bar, float(c_bar)


def averaged_full_value(
    t: float, m: np.ndarray, q: np.ndarray, coeffs: CoefficientPath
) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Gaussian-averaged full-information value at (t, m) with drift cov q.

    Returns (value, A_bar, B_bar, C_bar); value = E[V(t, m + q^{1/2} eps)]
    for a standard normal eps.
    """
    a, b, c = coeffs.at(t)
    try:
        a_bar, b_bar, c_bar = gaussian_average_coeffs(a, b, c, q)
    except WellPosednessError as exc:
        raise WellPosednessError(f"{exc} at t={t:.6g}", t=t) from None
    m = np.atleast_1d(np.asarray(m, dtype=float))
    value = float(np.exp(m @ a_bar @ m + b_bar @ m + c_bar))
    return value, a_bar, b_bar, c_bar
