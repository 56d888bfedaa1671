"""Numerical certificates: closed-loop assembly, the passivity-type Lyapunov
matrix construction, regulator (Francis) equations, observer gain checks and
the adaptive Lyapunov function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adaptive import ObserverParams
from .linalg import DimensionError, eigvals, inverse, lyapunov_solve, solve_linear, unvec, vec
from .plant import ErrorModel, TransformedModel, VesselParams, block_diag
from .regulator import InternalModel, gamma_matrix, sigma_residuals

NEG_DEF_MARGIN = 1e-9


@dataclass
class Certificate:
    name: str
    residuals: dict[str, float] = field(default_factory=dict)
    eigen_summary: dict[str, float] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    hard: bool = True
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.checks) and all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "hard": self.hard,
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "eigen_summary": {k: float(v) for k, v in self.eigen_summary.items()},
            "error": self.error,
        }

    def summary_line(self) -> str:
        status = "PASS" if self.passed else ("FAIL" if self.hard else "WARN")
        parts = [f"{k}={v:.3e}" for k, v in self.residuals.items()]
        parts += [f"{k}={v:.4g}" for k, v in self.eigen_summary.items()]
        if self.error:
            parts.append(f"error: {self.error}")
        return f"[{status}] {self.name}: " + ", ".join(parts)


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def assemble_closed_loop(tm: TransformedModel, F, G, gamma=None) -> ClosedLoop:
    """State ``(eta_tilde, z1, z2)`` with the adaptation error as input.

    Without ``gamma`` this is the disturbance-free loop obtained with the
    feedforward ``tau0 = -Gamma eta_tilde``. With ``gamma`` the loop without
    that term is returned: ``A + B Gamma E`` where ``E`` selects ``eta_tilde``.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    n = F.shape[0]
    if F.shape != (n, n) or G.shape != (n, 3) or tm.A11.shape != (3, 3):
        raise DimensionError(f"closed-loop blocks have incompatible shapes F{F.shape}, G{G.shape}")
    Z3 = np.zeros((3, 3))
    Zn3 = np.zeros((n, 3))
    Z3n = np.zeros((3, n))
    A = np.block([
        [F, Zn3, G],
        [Z3n, tm.A11, tm.A12],
        [Z3n, tm.A21, tm.A22 - tm.B2],
    ])
    B = np.vstack([G, Z3, -tm.B2])
    C = np.hstack([Z3n, Z3, np.eye(3)])
    if gamma is not None:
        Gam = np.asarray(gamma, dtype=float)
        if Gam.shape == (3, 3):
            Gam = gamma_matrix(Gam)
        A = A + B @ Gam @ np.hstack([np.eye(n), np.zeros((n, 6))])
    return ClosedLoop(A=A, B=B, C=C)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def proposition1_P(cl: ClosedLoop, tm: TransformedModel, F, G, z2_block=None) -> tuple[np.ndarray, Certificate]:
    """Construct ``P = T^T P_tilde T`` with ``P_tilde = diag(P1, I, B2^-1)``.

    ``T`` has ``G B2^-1`` in its upper-right block and ``P1`` solves
    ``P1 F + F^T P1 = -I``. ``z2_block`` replaces ``B2^-1`` (used to probe
    the identity ``P B = -C^T``). The certificate checks ``P B = -C^T``,
    negative definiteness of ``P A + A^T P`` and positive definiteness of ``P``.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    n = F.shape[0]
    cert = Certificate("proposition1")
    B2_inv = inverse(tm.B2)
    T = np.eye(n + 6)
    T[:n, n + 3:] = G @ B2_inv
    P1 = lyapunov_solve(F, np.eye(n))
    P_tilde = block_diag(P1, np.eye(3), B2_inv if z2_block is None else z2_block)
    P = T.T @ P_tilde @ T

    TB_target = np.vstack([np.zeros((n + 3, 3)), -tm.B2])
    lyap = P @ cl.A + cl.A.T @ P
    cert.residuals["PB_plus_Ct"] = float(np.max(np.abs(P @ cl.B + cl.C.T)))
    cert.residuals["TB_identity"] = float(np.max(np.abs(T @ cl.B - TB_target)))
    cert.residuals["P_asymmetry"] = float(np.max(np.abs(P - P.T)))
    cert.eigen_summary["lyap_max_eig"] = float(np.linalg.eigvalsh(_sym(lyap)).max())
    cert.eigen_summary["P_min_eig"] = float(np.linalg.eigvalsh(_sym(P)).min())
    cert.eigen_summary["B2_sym_min_eig"] = tm.b2_min_eig
    cert.checks["PB_equals_minus_Ct"] = cert.residuals["PB_plus_Ct"] < 1e-9
    cert.checks["lyapunov_negative_definite"] = cert.eigen_summary["lyap_max_eig"] < -NEG_DEF_MARGIN
    cert.checks["P_symmetric_positive_definite"] = (
        cert.residuals["P_asymmetry"] <= 1e-12 * (1.0 + np.max(np.abs(P)))
        and cert.eigen_summary["P_min_eig"] > NEG_DEF_MARGIN
    )
    return P, cert


def francis_solve(err: ErrorModel, S) -> tuple[np.ndarray, np.ndarray, Certificate]:
    """Solve ``Pi S = A Pi + B Psi + P`` and ``C_e Pi = 0`` jointly for ``(Pi, Psi)``."""
    S = np.asarray(S, dtype=float)
    A, B, P, Ce = err.A, err.B, err.P, err.C_e
    nx, nu, nw = A.shape[0], B.shape[1], S.shape[0]
    ny = Ce.shape[0]
    if ny != nu:
        raise DimensionError("regulator equations need as many outputs as inputs")
    Iw = np.eye(nw)
    # unknown = (vec Pi, vec Psi)
    top = np.hstack([np.kron(S.T, np.eye(nx)) - np.kron(Iw, A), -np.kron(Iw, B)])
    bottom = np.hstack([np.kron(Iw, Ce), np.zeros((ny * nw, nu * nw))])
    rhs = np.concatenate([vec(P), np.zeros(ny * nw)])
    sol = solve_linear(np.vstack([top, bottom]), rhs)
    Pi = unvec(sol[: nx * nw], nx, nw)
    Psi = unvec(sol[nx * nw:], nu, nw)

    cert = Certificate("francis")
    cert.residuals["regulator_eq"] = float(np.max(np.abs(Pi @ S - A @ Pi - B @ Psi - P)))
    cert.residuals["output_zero"] = float(np.max(np.abs(Ce @ Pi)))
    cert.checks["regulator_eq"] = cert.residuals["regulator_eq"] < 1e-8
    cert.checks["output_zero"] = cert.residuals["output_zero"] < 1e-8
    return Pi, Psi, cert


def q_pinv(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    return np.stack([np.linalg.pinv(Q[i]) for i in range(Q.shape[0])])


class LyapunovDomainError(ValueError):
    pass


def lyapunov_V(x, gamma_tilde, P, Q, tol: float = 1e-10) -> float:
    """``x^T P x + sum_i Gamma_tilde_i Q_i^+ Gamma_tilde_i^T``.

    ``Q_i`` may be singular; the adaptation term is then evaluated on the
    range of ``Q_i`` and any component of ``Gamma_tilde_i`` outside it is an
    error.
    """
    x = np.asarray(x, dtype=float)
    gt = np.asarray(gamma_tilde, dtype=float).reshape(-1, 3)
    Q = np.asarray(Q, dtype=float)
    total = float(x @ np.asarray(P) @ x)
    for i in range(gt.shape[0]):
        Qp = np.linalg.pinv(Q[i])
        outside = gt[i] - Q[i] @ Qp @ gt[i]
        if np.max(np.abs(outside)) > tol * (1.0 + np.max(np.abs(gt[i]))):
            raise LyapunovDomainError(f"Gamma_tilde_{i + 1} has a component outside range(Q_{i + 1})")
        total += float(gt[i] @ Qp @ gt[i])
    return total


def observer_matrix_check(p: ObserverParams, vessel: VesselParams) -> Certificate:
    """Spectrum of ``A_o`` (real and negative) and ``delta0 = ||(M^-1 - M_bar^-1) M_bar||_1 < 1``."""
    cert = Certificate("observer_gains", hard=False)
    ev = eigvals(p.A_o)
    delta0 = float(np.abs((vessel.M_inv - p.M_bar_inv) @ p.M_bar).sum(axis=0).max())
    cert.eigen_summary["A_o_max_real"] = float(ev.real.max())
    cert.eigen_summary["A_o_max_abs_imag"] = float(np.abs(ev.imag).max())
    cert.eigen_summary["A_o_min_real"] = float(ev.real.min())
    cert.residuals["delta0"] = delta0
    cert.checks["A_o_real_spectrum"] = cert.eigen_summary["A_o_max_abs_imag"] < 1e-8
    cert.checks["A_o_negative_spectrum"] = cert.eigen_summary["A_o_max_real"] < 0.0
    cert.checks["M_bar_condition"] = delta0 < 1.0
    return cert


def hurwitz_certificate(name: str, A, margin: float = NEG_DEF_MARGIN) -> Certificate:
    cert = Certificate(name)
    re = eigvals(A).real
    cert.eigen_summary["max_real"] = float(re.max())
    cert.checks["hurwitz"] = bool(re.max() < -margin)
    return cert


def sigma_certificate(im: InternalModel, gamma, exo, Sigma) -> Certificate:
    cert = Certificate("sigma")
    r1, r2 = sigma_residuals(im, gamma, exo, Sigma)
    cert.residuals["sylvester"] = r1
    cert.residuals["output"] = r2
    cert.checks["sylvester"] = r1 < 1e-8
    cert.checks["output"] = r2 < 1e-8
    return cert


def lyapunov_state(eta, w, Sigma, xi1, z2) -> np.ndarray:
    """Closed-loop state ``(eta - Sigma w, z1, z2)`` used by :func:`lyapunov_V`."""
    eta = np.asarray(eta, dtype=float)
    w = np.asarray(w, dtype=float)
    eta_t = eta - w @ Sigma.T if eta.ndim == 2 else eta - Sigma @ w
    return np.concatenate([eta_t, np.asarray(xi1, dtype=float), np.asarray(z2, dtype=float)], axis=-1)

