"""Small dense linear algebra and a fixed-step RK4 integrator.

Matrices and vectors are plain float64 ``numpy.ndarray`` objects. Linear
solves use Gaussian elimination with partial pivoting so that a singular
system is reported with the offending pivot; matrix equations (Lyapunov,
Sylvester) are solved by Kronecker vectorization on top of it.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

PIVOT_TOL = 1e-12


class DimensionError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, column: int, pivot: float):
        self.column = column
        self.pivot = pivot
        super().__init__(
            f"singular matrix: pivot {pivot:.3e} in column {column} is below {PIVOT_TOL:g}"
        )


class NotHurwitzError(ValueError):
    pass


class EigenvalueError(np.linalg.LinAlgError):
    pass


class NonFiniteDerivativeError(FloatingPointError):
    def __init__(self, t: float, index: int):
        self.t = t
        self.index = index
        super().__init__(f"non-finite derivative at t={t:.6g}, component {index}")


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def mat_mul(a, b) -> np.ndarray:
    a = _as_matrix(a, "a")
    b = np.asarray(b, dtype=float)
    if b.ndim not in (1, 2):
        raise DimensionError(f"b must be 1-D or 2-D, got shape {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for a vector or matrix right-hand side.

    Raises :class:`SingularMatrixError` when a pivot magnitude falls to
    ``PIVOT_TOL`` or below.
    """
    a = _as_matrix(a, "a")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"a must be square, got {a.shape}")
    b = np.asarray(b, dtype=float)
    vector_rhs = b.ndim == 1
    rhs = b.reshape(n, -1) if vector_rhs else b
    if rhs.shape[0] != n:
        raise DimensionError(f"rhs has {rhs.shape[0]} rows, expected {n}")

    aug = np.hstack([a, rhs]).copy()
    for k in range(n):
        p = k + int(np.argmax(np.abs(aug[k:, k])))
        if abs(aug[p, k]) <= PIVOT_TOL:
            raise SingularMatrixError(k, float(aug[p, k]))
        if p != k:
            aug[[k, p]] = aug[[p, k]]
        factors = aug[k + 1:, k] / aug[k, k]
        aug[k + 1:, k:] -= np.outer(factors, aug[k, k:])
    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (aug[k, n:] - aug[k, k + 1:n] @ x[k + 1:]) / aug[k, k]

    scale = 1.0 + np.max(np.abs(rhs), initial=0.0)
    if np.max(np.abs(a @ x - rhs), initial=0.0) > 1e-9 * scale:
        raise np.linalg.LinAlgError("linear solve residual above 1e-9 (ill-conditioned system)")
    return x[:, 0] if vector_rhs else x


def inverse(a) -> np.ndarray:
    a = _as_matrix(a)
    return solve_linear(a, np.eye(a.shape[0]))


def eigvals(a) -> np.ndarray:
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"eigenvalues need a square matrix, got {a.shape}")
    try:
        return np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueError(f"eigenvalue iteration did not converge: {exc}") from exc


def eig_real_parts(a) -> np.ndarray:
    return np.sort(eigvals(a).real)


def is_hurwitz(a, margin: float = 0.0) -> bool:
    return bool(np.max(eig_real_parts(a)) < -margin)


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization (Fortran order)."""
    return np.asarray(x, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v).reshape(rows, cols, order="F")


def sylvester_solve(a, b, c) -> np.ndarray:
    """Solve ``a @ x + x @ b = c`` through ``(I kron a + b.T kron I) vec(x) = vec(c)``."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    c = _as_matrix(c, "c")
    m, n = c.shape
    if a.shape != (m, m) or b.shape != (n, n):
        raise DimensionError(f"incompatible shapes a{a.shape}, b{b.shape}, c{c.shape}")
    op = np.kron(np.eye(n), a) + np.kron(b.T, np.eye(m))
    return unvec(solve_linear(op, vec(c)), m, n)


def lyapunov_solve(a, q) -> np.ndarray:
    """Return the symmetric ``p`` with ``p @ a + a.T @ p = -q``.

    ``a`` must be Hurwitz and ``q`` symmetric positive definite.
    """
    a = _as_matrix(a, "a")
    q = _as_matrix(q, "q")
    n = a.shape[0]
    if a.shape != (n, n) or q.shape != (n, n):
        raise DimensionError(f"lyapunov_solve needs square a and q of equal size, got {a.shape}, {q.shape}")
    re = eig_real_parts(a)
    if re.max() >= 0.0:
        raise NotHurwitzError(f"matrix is not Hurwitz (max real part {re.max():.3e})")
    if np.max(np.abs(q - q.T)) > 1e-12 * (1.0 + np.max(np.abs(q))):
        raise ValueError("q must be symmetric")
    if np.linalg.eigvalsh(q).min() <= 0.0:
        raise ValueError("q must be positive definite")

    # vec(p a) + vec(a^T p) = (a^T kron I + I kron a^T) vec(p)
    eye = np.eye(n)
    op = np.kron(a.T, eye) + np.kron(eye, a.T)
    p = unvec(solve_linear(op, -vec(q)), n, n)
    p = 0.5 * (p + p.T)
    resid = np.max(np.abs(p @ a + a.T @ p + q))
    if resid > 1e-8 * (1.0 + np.max(np.abs(q))):
        raise np.linalg.LinAlgError(f"Lyapunov residual {resid:.3e} above 1e-8")
    return p


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``y' = f(t, y)``."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    y = np.asarray(y, dtype=float)

    def stage(ts, ys):
        d = np.asarray(f(ts, ys), dtype=float)
        bad = np.flatnonzero(~np.isfinite(d))
        if bad.size:
            raise NonFiniteDerivativeError(ts, int(bad[0]))
        return d

    k1 = stage(t, y)
    k2 = stage(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = stage(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = stage(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(f, t0: float, y0, dt: float, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 over ``n_steps``; returns sample times and states (including ``y0``)."""
    ys = np.empty((n_steps + 1, np.size(y0)))
    ys[0] = y0
    y = np.asarray(y0, dtype=float)
    for k in range(n_steps):
        y = rk4_step(f, t0 + k * dt, y, dt)
        ys[k + 1] = y
    return t0 + dt * np.arange(n_steps + 1), ys
