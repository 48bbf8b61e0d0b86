"""Time-difference-of-arrival localisation by hyperbolic least squares."""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceError, DegenerateGeometryError

C_LIGHT = 299_792_458.0
MAX_ITER = 50
STEP_TOL_M = 1e-9


def range_differences(x: np.ndarray, receivers: np.ndarray) -> np.ndarray:
    """||x - r_i|| - ||x - r_0|| for i = 1..m-1."""
    d = np.linalg.norm(receivers - x, axis=1)
    return d[1:] - d[0]


def tdoa_residual(x, receivers, tdoas, c: float = C_LIGHT) -> float:
    """Euclidean norm of the range-difference residuals at ``x`` (meters)."""
    r = np.asarray(receivers, dtype=np.float64)
    t = _rel_tdoas(tdoas, len(r))
    return float(np.linalg.norm(range_differences(np.asarray(x, dtype=np.float64), r) - c * t))


def _rel_tdoas(tdoas, m: int) -> np.ndarray:
    t = np.asarray(tdoas, dtype=np.float64)
    if t.shape == (m,):
        return t[1:] - t[0]
    if t.shape == (m - 1,):
        return t
    raise ValueError(f"expected {m - 1} or {m} TDOA values, got {t.shape}")


def _linear_seed(r: np.ndarray, dd: np.ndarray) -> np.ndarray | None:
    """Closed-form solve treating the reference range as an extra unknown (needs >= 5 receivers)."""
    # ||x - r_i||^2 - ||x - r_0||^2 = dd_i^2 + 2 dd_i d_0
    a = np.column_stack([-2.0 * (r[1:] - r[0]), -2.0 * dd])
    b = dd**2 - (np.sum(r[1:] ** 2, axis=1) - np.sum(r[0] ** 2))
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < 4:
        return None
    return sol[:3]


def _gauss_newton(x0, r, dd, free):
    x = x0.copy()
    for it in range(MAX_ITER):
        diff = x - r
        d = np.linalg.norm(diff, axis=1)
        d = np.maximum(d, 1e-12)
        u = diff / d[:, None]
        res = (d[1:] - d[0]) - dd
        J = (u[1:] - u[0])[:, free]
        step, *_ = np.linalg.lstsq(J, -res, rcond=None)
        cost = res @ res
        # backtracking keeps the iteration from overshooting far from the solution
        lam = 1.0
        while lam > 1e-6:
            xn = x.copy()
            xn[free] += lam * step
            rn = range_differences(xn, r) - dd
            if rn @ rn <= cost:
                break
            lam *= 0.5
        x = xn
        if np.linalg.norm(lam * step) < STEP_TOL_M:
            return x, True
    return x, False


def tdoa_localize(
    receiver_positions,
    tdoas,
    c: float = C_LIGHT,
    altitude: float | None = None,
) -> np.ndarray:
    """Emitter position from arrival-time differences relative to receiver 0.

    ``tdoas`` holds either m absolute arrival times or the m-1 differences
    t_i - t_0. Receivers spanning 3-D (>= 4, non-coplanar) give a full fix;
    coplanar receivers need ``altitude`` and solve for x, y only. Gauss-Newton
    starts from the receiver centroid and, with 5 or more receivers, also from
    a closed-form linear solution; the lower-residual result wins.
    """
    r = np.asarray(receiver_positions, dtype=np.float64)
    if r.ndim != 2 or r.shape[1] != 3 or len(r) < 3:
        raise DegenerateGeometryError("need at least three 3-D receiver positions")
    dd = c * _rel_tdoas(tdoas, len(r))
    rank = np.linalg.matrix_rank(r[1:] - r[0], tol=1e-9)
    if rank < 2:
        raise DegenerateGeometryError("receivers are collinear")
    centroid = r.mean(axis=0)
    if rank == 2 or len(r) < 4:
        if altitude is None:
            raise DegenerateGeometryError("coplanar receivers need a fixed target altitude")
        free = np.array([0, 1])
        centroid[2] = altitude
        seeds = [centroid]
    else:
        free = np.arange(3)
        seeds = [centroid]
        if altitude is not None:
            seeds[0] = np.array([centroid[0], centroid[1], altitude])
        if len(r) >= 5:
            lin = _linear_seed(r, dd)
            if lin is not None:
                seeds.insert(0, lin)
    best = None
    for s in seeds:
        x, ok = _gauss_newton(np.asarray(s, dtype=np.float64), r, dd, free)
        res = np.linalg.norm(range_differences(x, r) - dd)
        if best is None or res < best[1] - 1e-15 or (ok and not best[2] and res <= best[1] + 1e-12):
            best = (x, res, ok)
    if not best[2]:
        raise ConvergenceError(f"Gauss-Newton did not converge in {MAX_ITER} iterations")
    return best[0]
