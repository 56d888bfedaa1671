"""Vessel model, disturbance exosystem and the error/transformed models.

The vessel obeys ``M xdd + D xd = tau + tau_d`` with a disturbance produced
by a block-diagonal linear exosystem ``wd = S(q) w, tau_d = H w``; each
channel block carries a bias state and an undamped oscillator of squared
frequency ``q_i``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import SingularMatrixError, inverse, rk4_step, solve_linear

N_CHANNELS = 3
CHANNEL_SIZE = 3
N_EXO = N_CHANNELS * CHANNEL_SIZE


class TransformError(ValueError):
    pass


def _sym_min_eig(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (a + a.T)).min())


def block_diag(*blocks) -> np.ndarray:
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


@dataclass(frozen=True, eq=False)
class VesselParams:
    M: np.ndarray
    D: np.ndarray
    allow_nonsymmetric_M: bool = False
    M_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        D = np.array(self.D, dtype=float)
        if M.shape != (3, 3) or D.shape != (3, 3):
            raise ValueError(f"M and D must be 3x3, got {M.shape} and {D.shape}")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(D))):
            raise ValueError("M and D must be finite")
        if np.max(np.abs(M - M.T)) > 1e-12 * (1.0 + np.max(np.abs(M))):
            if not self.allow_nonsymmetric_M:
                raise ValueError("M is not symmetric (set allow_nonsymmetric_M to accept it)")
            warnings.warn("inertia matrix M is not symmetric", stacklevel=2)
        M_inv = inverse(M)
        for name, val in (("M", M), ("D", D), ("M_inv", M_inv)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)


@dataclass(frozen=True, eq=False)
class ExosystemParams:
    q: np.ndarray
    H_rows: np.ndarray
    w0: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        H = np.array(self.H_rows, dtype=float)
        w0 = np.array(self.w0, dtype=float).reshape(-1)
        if q.shape != (N_CHANNELS,):
            raise ValueError(f"q must have {N_CHANNELS} entries")
        if np.any(~np.isfinite(q)) or np.any(q <= 0.0):
            raise ValueError(f"every q_i must be positive, got {q.tolist()}")
        if H.shape != (N_CHANNELS, CHANNEL_SIZE):
            raise ValueError(f"H_rows must be {N_CHANNELS}x{CHANNEL_SIZE}")
        if w0.shape != (N_EXO,):
            raise ValueError(f"w0 must have {N_EXO} entries")
        for name, val in (("q", q), ("H_rows", H), ("w0", w0)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def S(self) -> np.ndarray:
        return build_S(self.q)

    @property
    def H(self) -> np.ndarray:
        return block_diag(*self.H_rows)


def S_block(q_i: float) -> np.ndarray:
    return np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -q_i, 0.0]])


def build_S(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if np.any(q <= 0.0):
        raise ValueError(f"every q_i must be positive, got {q.tolist()}")
    return block_diag(*[S_block(qi) for qi in q])


@dataclass(frozen=True, eq=False)
class SinusoidChannel:
    """``bias + amplitude * sin(freq * t + phase)``."""

    bias: float
    amplitude: float
    freq: float
    phase: float


NOMINAL_DISTURBANCE = (
    SinusoidChannel(2.0, 9.0, 0.75, 9.0),
    SinusoidChannel(1.0, 3.0, 0.50, 4.0),
    SinusoidChannel(5.0, 4.0, 0.25, 7.0),
)


def disturbance_closed_form(channels, t) -> np.ndarray:
    """Evaluate the disturbance channels at time(s) ``t``; returns shape ``(3,)`` or ``(len(t), 3)``."""
    t = np.asarray(t, dtype=float)
    cols = [c.bias + c.amplitude * np.sin(c.freq * t + c.phase) for c in channels]
    return np.stack(cols, axis=-1)


def exosystem_from_channels(channels, H_rows=None) -> ExosystemParams:
    """Exosystem whose output ``(1 1 0)`` per channel reproduces the closed-form sinusoids."""
    w0 = []
    for c in channels:
        w0 += [c.bias, c.amplitude * math.sin(c.phase), c.amplitude * c.freq * math.cos(c.phase)]
    if H_rows is None:
        H_rows = [[1.0, 1.0, 0.0]] * len(channels)
    return ExosystemParams(q=[c.freq ** 2 for c in channels], H_rows=H_rows, w0=w0)


def exo_derivative(q, w: np.ndarray) -> np.ndarray:
    dw = np.zeros_like(w)
    for i, qi in enumerate(q):
        dw[3 * i + 1] = w[3 * i + 2]
        dw[3 * i + 2] = -qi * w[3 * i + 1]
    return dw


def exo_to_closed_form_check(exo: ExosystemParams, channels, t_final: float = 100.0,
                             dt: float = 1e-3) -> dict:
    """Integrate the exosystem with RK4 and compare ``H w(t)`` against the closed form."""
    H = exo.H
    q = exo.q
    n = int(round(t_final / dt))
    w = exo.w0.copy()
    max_err = float(np.max(np.abs(H @ w - disturbance_closed_form(channels, 0.0))))
    for k in range(1, n + 1):
        w = rk4_step(lambda _t, y: exo_derivative(q, y), (k - 1) * dt, w, dt)
        err = np.max(np.abs(H @ w - disturbance_closed_form(channels, k * dt)))
        max_err = max(max_err, float(err))
    return {"max_abs_error": max_err, "t_final": t_final, "dt": dt, "steps": n}


def oscillator_energy(q, w: np.ndarray) -> np.ndarray:
    """Per-channel invariant ``w_b^2 + w_c^2 / q_i``; ``w`` may be a batch of states."""
    w = np.asarray(w, dtype=float)
    wb = w[..., 1::3]
    wc = w[..., 2::3]
    return wb ** 2 + wc ** 2 / np.asarray(q)


@dataclass(frozen=True, eq=False)
class ErrorModel:
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    C_e: np.ndarray


def build_error_model(v: VesselParams, exo: ExosystemParams) -> ErrorModel:
    """Error dynamics ``xi' = A xi + B tau + P w`` with ``xi = (x - x_r, xd)``."""
    Z = np.zeros((3, 3))
    I = np.eye(3)
    A = np.block([[Z, I], [Z, -solve_linear(v.M, v.D)]])
    B = np.vstack([Z, v.M_inv])
    P = np.vstack([np.zeros((3, N_EXO)), solve_linear(v.M, exo.H)])
    C_e = np.hstack([I, Z])
    return ErrorModel(A=A, B=B, P=P, C_e=C_e)


@dataclass(frozen=True, eq=False)
class TransformedModel:
    T1: np.ndarray
    T2: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B2: np.ndarray
    P2: np.ndarray
    b2_min_eig: float
    b2_asymmetry: float

    @property
    def b2_positive_definite(self) -> bool:
        return self.b2_min_eig > 1e-9

    def to_z(self, xi1, xi2) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(xi1, dtype=float), self.T1 @ xi1 + self.T2 @ xi2

    def from_z(self, z1, z2) -> tuple[np.ndarray, np.ndarray]:
        z1 = np.asarray(z1, dtype=float)
        return z1, solve_linear(self.T2, np.asarray(z2, dtype=float) - self.T1 @ z1)


def _check_spd(name: str, K: np.ndarray) -> None:
    if np.max(np.abs(K - K.T)) > 1e-12 * (1.0 + np.max(np.abs(K))):
        raise TransformError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(K).min() <= 0.0:
        raise TransformError(f"{name} must be positive definite")


def build_transform(v: VesselParams, K1, K2, exo: ExosystemParams | None = None,
                    strict: bool = True) -> TransformedModel:
    """Coordinates ``z1 = xi1, z2 = T1 xi1 + T2 xi2`` with ``T1 = M K1``, ``T2 = M K2 - D``.

    With ``strict`` the input matrix ``B2 = T2 M^-1`` must be positive definite
    (checked on its symmetric part); otherwise the violation is only recorded.
    """
    K1 = np.asarray(K1, dtype=float)
    K2 = np.asarray(K2, dtype=float)
    _check_spd("K1", K1)
    _check_spd("K2", K2)
    T1 = v.M @ K1
    T2 = v.M @ K2 - v.D
    try:
        T2_inv = inverse(T2)
    except SingularMatrixError as exc:
        raise TransformError(f"T2 = M K2 - D is singular ({exc})") from exc
    MinvD = v.M_inv @ v.D
    W = T1 - T2 @ MinvD
    B2 = T2 @ v.M_inv
    b2_min = _sym_min_eig(B2)
    if strict and b2_min <= 1e-9:
        raise TransformError(
            f"B2 = T2 M^-1 is not positive definite (symmetric-part min eigenvalue {b2_min:.4g})"
        )
    H = exo.H if exo is not None else np.zeros((3, N_EXO))
    return TransformedModel(
        T1=T1, T2=T2,
        A11=-T2_inv @ T1, A12=T2_inv,
        A21=-W @ T2_inv @ T1, A22=W @ T2_inv,
        B2=B2, P2=B2 @ H,
        b2_min_eig=b2_min,
        b2_asymmetry=float(np.max(np.abs(B2 - B2.T))),
    )


def vessel_derivative(v: VesselParams, x, xd, tau, tau_d) -> tuple[np.ndarray, np.ndarray]:
    xd = np.asarray(xd, dtype=float)
    f = np.asarray(tau, dtype=float) + np.asarray(tau_d, dtype=float) - v.D @ xd
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(f))):
        raise ValueError("non-finite vessel state or input")
    return xd.copy(), v.M_inv @ f
