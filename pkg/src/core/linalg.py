"""
Dense linear algebra kernel.

Symmetric solves, vectorized 2x2 Cramer solves for least squares, and a
primal active-set method for concave quadratic programs with linear
equalities and upper bounds:

    maximize    0.5 x'Hx + q'x
    subject to  E x = e,  x <= u

with H negative definite. Multipliers follow the Lagrangian
0.5 x'Hx + q'x - lambda'(Ex - e) - mu'(x - u), so mu >= 0 at optimality.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from ..shared.error_handler import (
    DegenerateHistoryError,
    SingularMatrixError,
    SolverError,
    ValidationError,
)
from ..shared.settings import get_settings

logger = logging.getLogger(__name__)

DETERMINANT_TOLERANCE = 1e-12


def solve_symmetric(a: np.ndarray, b: np.ndarray, tolerance: Optional[float] = None) -> np.ndarray:
    """
    Solve a x = b for symmetric a (definite or indefinite).

    Raises SingularMatrixError when the factorization fails or the
    residual exceeds tolerance * (1 + scale); never regularizes.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"Matrix must be square, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValidationError(f"Right-hand side length {b.shape[0]} does not match {a.shape[0]}")
    tolerance = get_settings().linear_tolerance if tolerance is None else tolerance

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            x = scipy.linalg.solve(a, b, assume_a='sym', check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SingularMatrixError(f"Symmetric solve failed: {e}", details={'size': a.shape[0]})

    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("Symmetric solve produced non-finite values", details={'size': a.shape[0]})

    residual = float(np.max(np.abs(a @ x - b))) if x.size else 0.0
    b_norm = float(np.max(np.abs(b))) if b.size else 0.0
    ax_norm = float(np.max(np.abs(a)) * np.max(np.abs(x))) if x.size else 0.0
    if residual > tolerance * (1.0 + max(b_norm, ax_norm)):
        raise SingularMatrixError(
            f"Symmetric solve residual {residual:.3e} exceeds tolerance",
            details={'residual': residual, 'size': a.shape[0]}
        )
    return x


def cramer_2x2(m00, m01, m10, m11, b0, b1, tolerance: float = DETERMINANT_TOLERANCE):
    """
    Elementwise Cramer solve of [[m00, m01], [m10, m11]] x = (b0, b1).

    Accepts scalars or equally shaped arrays. Returns (x0, x1, det, ok)
    where ok flags systems with |det| >= tolerance * scale, scale being the
    larger of |m00*m11| and |m01*m10|. Entries with ok False hold NaN.
    """
    m00, m01, m10, m11, b0, b1 = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (m00, m01, m10, m11, b0, b1))
    )
    det = m00 * m11 - m01 * m10
    scale = np.maximum(np.abs(m00 * m11), np.abs(m01 * m10))
    ok = (np.abs(det) >= tolerance * scale) & (scale > 0)
    safe_det = np.where(ok, det, 1.0)
    x0 = np.where(ok, (b0 * m11 - m01 * b1) / safe_det, np.nan)
    x1 = np.where(ok, (m00 * b1 - m10 * b0) / safe_det, np.nan)
    return x0, x1, det, ok


def solve_2x2(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact Cramer solve of a 2x2 system; near-singular input is a degenerate history."""
    m = np.asarray(m, dtype=float)
    b = np.asarray(b, dtype=float)
    if m.shape != (2, 2) or b.shape != (2,):
        raise ValidationError(f"solve_2x2 needs a 2x2 matrix and a 2-vector, got {m.shape}, {b.shape}")
    x0, x1, det, ok = cramer_2x2(m[0, 0], m[0, 1], m[1, 0], m[1, 1], b[0], b[1])
    if not bool(ok):
        raise DegenerateHistoryError(
            f"2x2 system is singular (det={float(det):.3e})", determinant=float(det)
        )
    return np.array([float(x0), float(x1)])


@dataclass(frozen=True, eq=False)
class KktSystem:
    """
    Data of a concave QP with equalities and upper bounds.

    hessian may be given as its diagonal (1-D). reference_row names one
    redundant equality row; it is dropped and its multiplier fixed at 0.
    initial_point, when given, must be feasible.
    """
    hessian: np.ndarray
    equality_matrix: np.ndarray
    equality_rhs: np.ndarray
    linear_term: np.ndarray
    upper_bounds: np.ndarray
    reference_row: Optional[int] = None
    initial_point: Optional[np.ndarray] = None

    def __post_init__(self):
        hessian = np.asarray(self.hessian, dtype=float)
        equality = np.atleast_2d(np.asarray(self.equality_matrix, dtype=float))
        rhs = np.atleast_1d(np.asarray(self.equality_rhs, dtype=float))
        linear = np.asarray(self.linear_term, dtype=float)
        upper = np.asarray(self.upper_bounds, dtype=float)
        m = linear.shape[0]

        if hessian.ndim == 1:
            if hessian.shape != (m,):
                raise ValidationError(f"Hessian diagonal length {hessian.shape[0]} != {m}")
            if np.any(hessian >= 0):
                raise ValidationError("Hessian must be negative definite")
        elif hessian.shape == (m, m):
            if not np.allclose(hessian, hessian.T, rtol=0, atol=1e-12 * (1 + np.max(np.abs(hessian)))):
                raise ValidationError("Hessian must be symmetric")
        else:
            raise ValidationError(f"Hessian shape {hessian.shape} does not conform to {m} variables")
        if equality.shape[1] != m or rhs.shape != (equality.shape[0],):
            raise ValidationError(
                f"Equality system {equality.shape} / {rhs.shape} does not conform to {m} variables"
            )
        if upper.shape != (m,):
            raise ValidationError(f"Upper bounds length {upper.shape} != {m}")
        if self.reference_row is not None and not (0 <= self.reference_row < equality.shape[0]):
            raise ValidationError(f"reference_row {self.reference_row} out of range")

        object.__setattr__(self, 'hessian', hessian)
        object.__setattr__(self, 'equality_matrix', equality)
        object.__setattr__(self, 'equality_rhs', rhs)
        object.__setattr__(self, 'linear_term', linear)
        object.__setattr__(self, 'upper_bounds', upper)
        if self.initial_point is not None:
            object.__setattr__(self, 'initial_point', np.asarray(self.initial_point, dtype=float))

    @property
    def size(self) -> int:
        return self.linear_term.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.hessian.ndim == 1

    @property
    def kept_rows(self) -> np.ndarray:
        rows = np.arange(self.equality_matrix.shape[0])
        if self.reference_row is None:
            return rows
        return rows[rows != self.reference_row]

    def hessian_matrix(self) -> np.ndarray:
        return np.diag(self.hessian) if self.is_diagonal else self.hessian

    def hessian_times(self, x: np.ndarray) -> np.ndarray:
        return self.hessian * x if self.is_diagonal else self.hessian @ x


class ActiveSetResult(NamedTuple):
    solution: np.ndarray
    eq_duals: np.ndarray
    bound_duals: np.ndarray
    active_set: Tuple[int, ...]
    iterations: int
    residual: float


def kkt_residual(sys: KktSystem, x: np.ndarray, eq_duals: np.ndarray, bound_duals: np.ndarray) -> float:
    """Largest relative violation among the KKT conditions."""
    q_scale = 1.0 + float(np.max(np.abs(sys.linear_term)))
    e_scale = 1.0 + (float(np.max(np.abs(sys.equality_rhs))) if sys.equality_rhs.size else 0.0)
    stationarity = sys.hessian_times(x) + sys.linear_term - sys.equality_matrix.T @ eq_duals - bound_duals
    primal = sys.equality_matrix @ x - sys.equality_rhs
    finite = np.isfinite(sys.upper_bounds)
    slack = np.where(finite, sys.upper_bounds - x, np.inf)
    parts = [
        float(np.max(np.abs(stationarity))) / q_scale,
        float(np.max(np.abs(primal))) / e_scale if primal.size else 0.0,
        float(np.max(np.maximum(-slack, 0.0))),
        float(np.max(np.maximum(-bound_duals, 0.0))) / q_scale,
        float(np.max(np.abs(np.where(finite, bound_duals * np.where(finite, slack, 0.0), bound_duals))))
        / q_scale,
    ]
    return max(parts)


def _solve_with_fixed(sys: KktSystem, fixed: np.ndarray):
    """
    Equality-constrained optimum with x[fixed] held at their upper bounds.

    Returns (x, eq_duals over all rows, bound_duals) where bound_duals are
    zero on free variables.
    """
    rows = sys.kept_rows
    E = sys.equality_matrix[rows]
    e = sys.equality_rhs[rows]
    q = sys.linear_term
    u = sys.upper_bounds
    free = ~fixed
    E_F, E_A = E[:, free], E[:, fixed]
    u_A = u[fixed]

    if sys.is_diagonal:
        d = -sys.hessian
        d_F = d[free]
        if rows.size:
            if not free.any():
                raise SingularMatrixError("No free variables left to satisfy the equalities")
            scaled = E_F / d_F
            schur = scaled @ E_F.T
            rhs = scaled @ q[free] - e + E_A @ u_A
            lam = solve_symmetric(schur, rhs)
        else:
            lam = np.zeros(0)
        x = u.copy()
        x[free] = (q[free] - E_F.T @ lam) / d_F
        mu = np.zeros_like(x)
        mu[fixed] = -d[fixed] * u_A + q[fixed] - E_A.T @ lam
    else:
        H = sys.hessian
        H_FF = H[np.ix_(free, free)]
        H_FA = H[np.ix_(free, fixed)]
        k = rows.size
        kkt = np.block([
            [H_FF, -E_F.T],
            [-E_F, np.zeros((k, k))],
        ])
        rhs = np.concatenate([-q[free] - H_FA @ u_A, -(e - E_A @ u_A)])
        sol = solve_symmetric(kkt, rhs)
        n_free = int(free.sum())
        x = u.copy()
        x[free] = sol[:n_free]
        lam = sol[n_free:]
        mu = np.zeros_like(x)
        mu[fixed] = H[fixed] @ x + q[fixed] - E_A.T @ lam

    eq_duals = np.zeros(sys.equality_matrix.shape[0])
    eq_duals[rows] = lam
    return x, eq_duals, mu


def _feasible_start(sys: KktSystem) -> np.ndarray:
    if sys.initial_point is not None:
        return sys.initial_point.copy()
    rows = sys.kept_rows
    bounds = [(None, float(ub)) if np.isfinite(ub) else (None, None) for ub in sys.upper_bounds]
    result = linprog(
        c=np.zeros(sys.size),
        A_eq=sys.equality_matrix[rows] if rows.size else None,
        b_eq=sys.equality_rhs[rows] if rows.size else None,
        bounds=bounds,
        method='highs'
    )
    if result.status != 0:
        raise SolverError(f"Feasible region is empty or unbounded: {result.message}")
    return np.minimum(result.x, sys.upper_bounds)


def solve_eq_qp_active_set(sys: KktSystem, max_iterations: Optional[int] = None,
                           tolerance: Optional[float] = None) -> ActiveSetResult:
    """
    Solve the QP by a primal active-set method.

    The unconstrained (equality-only) optimum is tried first; if it
    respects every bound it is returned at once. Otherwise the method
    walks from a feasible start, adding the first blocking bound on each
    step and releasing the bound with the most negative multiplier when a
    step is zero. Raises SolverError after max_iterations (default 10*M).
    """
    tolerance = get_settings().kkt_tolerance if tolerance is None else tolerance
    m = sys.size
    max_iterations = 10 * m if max_iterations is None else max_iterations
    u = sys.upper_bounds
    step_tol = 1e-12 * (1.0 + float(np.max(np.abs(np.where(np.isfinite(u), u, 0.0)))))

    def _eqp(fixed):
        try:
            return _solve_with_fixed(sys, fixed)
        except SingularMatrixError as e:
            raise SolverError(f"Equality subproblem is singular: {e.message}",
                              details={'fixed': int(fixed.sum())})

    working = np.zeros(m, dtype=bool)
    x_hat, lam, mu = _eqp(working)
    iterations = 1
    if np.all(x_hat <= u + step_tol):
        return _finish(sys, np.minimum(x_hat, u), lam, mu, iterations, tolerance)

    x = _feasible_start(sys)
    if np.any(x > u + step_tol):
        raise SolverError("Initial point violates the upper bounds")
    residual = np.inf

    while iterations < max_iterations:
        step = x_hat - x
        if np.max(np.abs(step)) <= step_tol * (1.0 + float(np.max(np.abs(x)))):
            candidates = np.flatnonzero(working)
            if candidates.size == 0 or mu[candidates].min() >= -tolerance:
                return _finish(sys, x_hat, lam, mu, iterations, tolerance)
            release = candidates[np.argmin(mu[candidates])]
            working[release] = False
        else:
            moving = (~working) & (step > 0) & np.isfinite(u)
            ratios = np.full(m, np.inf)
            ratios[moving] = (u[moving] - x[moving]) / step[moving]
            blocking = int(np.argmin(ratios))
            alpha = min(1.0, max(float(ratios[blocking]), 0.0))
            x = x + alpha * step
            if alpha < 1.0:
                x[blocking] = u[blocking]
                working[blocking] = True
            else:
                x = x_hat
                residual = kkt_residual(sys, x, lam, mu)
                continue
        x_hat, lam, mu = _eqp(working)
        x_hat[working] = u[working]
        iterations += 1
        residual = kkt_residual(sys, x_hat, lam, np.where(working, mu, 0.0))

    raise SolverError(
        f"Active-set method did not converge in {max_iterations} iterations",
        residual=float(residual),
        iterations=iterations
    )


def _finish(sys: KktSystem, x, lam, mu, iterations, tolerance) -> ActiveSetResult:
    mu = np.where(mu > 0, mu, 0.0)
    residual = kkt_residual(sys, x, lam, mu)
    if residual > tolerance:
        raise SolverError(
            f"KKT residual {residual:.3e} exceeds tolerance {tolerance:.1e}",
            residual=residual,
            iterations=iterations
        )
    q_scale = 1.0 + float(np.max(np.abs(sys.linear_term)))
    active = tuple(int(i) for i in np.flatnonzero(mu > tolerance * q_scale))
    logger.debug(f"Active-set solve finished in {iterations} iterations, {len(active)} active bounds")
    return ActiveSetResult(x, lam, mu, active, iterations, residual)
