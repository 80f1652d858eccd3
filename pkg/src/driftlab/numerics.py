"""Dense small-matrix utilities and fixed-step RK4 integration.

Everything here is sized for the model dimensions of this library (d <= ~10):
dense matrices, eigendecompositions, no sparsity, no adaptive stepping. The
fixed step keeps ODE nodes aligned with the master time grid and with expert
information dates, which downstream modules rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IntegrationError

PSD_TOL = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``steps`` intervals on [t0, t1]."""

    t0: float
    t1: float
    steps: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise DomainError(f"empty time grid: t0={self.t0}, t1={self.t1}")
        if self.steps < 1:
            raise DomainError(f"grid needs at least one step, got {self.steps}")

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.steps + 1)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the node equal to ``t``; raises if ``t`` is off-grid."""
        idx = round((t - self.t0) / self.h)
        if idx < 0 or idx > self.steps or abs(self.t0 + idx * self.h - t) > tol:
            raise DomainError(f"t={t} is not a node of the grid (h={self.h})")
        return idx


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def integrate_matrix_ode(rhs, anchor, grid: TimeGrid, direction: str = "forward") -> np.ndarray:
    """Classical RK4 for dY/dt = rhs(t, Y) with Y of any array shape.

    ``anchor`` is ``(t_anchor, Y_anchor)``; for ``direction="forward"`` the
    anchor must sit at ``grid.t0``, for ``"backward"`` at ``grid.t1``. The
    returned array holds Y at every grid node in ascending time order.

    Raises :class:`IntegrationError` carrying the failing node time as soon
    as a non-finite value appears; callers use this as the blow-up /
    explosion-time signal.
    """
    t_anchor, y_anchor = anchor
    y0 = np.asarray(y_anchor, dtype=float)
    nodes = grid.nodes
    out = np.empty((grid.steps + 1,) + y0.shape)

    if direction == "forward":
        if abs(t_anchor - grid.t0) > 1e-12 * max(1.0, abs(grid.t0)):
            raise DomainError("forward integration anchors at grid.t0")
        order = range(grid.steps)
        out[0] = y0
        h = grid.h
    elif direction == "backward":
        if abs(t_anchor - grid.t1) > 1e-12 * max(1.0, abs(grid.t1)):
            raise DomainError("backward integration anchors at grid.t1")
        order = range(grid.steps, 0, -1)
        out[-1] = y0
        h = -grid.h
    else:
        raise DomainError(f"unknown direction {direction!r}")

    y = y0
    for i in order:
        t = nodes[i]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        j = i + 1 if direction == "forward" else i - 1
        if not np.all(np.isfinite(y)):
            raise IntegrationError(
                f"ODE solution became non-finite at t={nodes[j]:.6g}", t=float(nodes[j])
            )
        out[j] = y
    return out


def sym_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues above ``-PSD_TOL`` are clipped to zero; anything more
    negative means the input is genuinely indefinite.
    """
    a = np.asarray(a, dtype=float)
    w, v = np.linalg.eigh(symmetrize(a))
    if w.min() < -PSD_TOL * max(1.0, abs(w.max())):
        raise DomainError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return symmetrize((v * np.sqrt(w)) @ v.T)


def logdet_pd(a: np.ndarray) -> float:
    """log det of a symmetric positive definite matrix.

    A non-PD argument signals a violated well-posedness condition upstream,
    so it raises rather than returning -inf/nan.
    """
    a = np.asarray(a, dtype=float)
    sign, logdet = np.linalg.slogdet(symmetrize(a))
    if sign <= 0 or not np.isfinite(logdet):
        raise DomainError("matrix is not positive definite in logdet_pd")
    # slogdet succeeds on some indefinite matrices with positive determinant;
    # a Cholesky attempt pins down definiteness.
    try:
        np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError:
        raise DomainError("matrix is not positive definite in logdet_pd") from None
    return float(logdet)


def min_eigval(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(a)).min())


def is_psd(a: np.ndarray, tol: float = PSD_TOL) -> bool:
    return min_eigval(a) >= -tol
