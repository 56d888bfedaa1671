"""Realizable adaptive controller: saturated velocity-error estimate, extended
high-gain observer and gradient adaptation of the internal-model output rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import inverse
from .regulator import InternalModel, gamma_matrix


@dataclass(frozen=True, eq=False)
class ObserverParams:
    kappa: float
    C0: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    M_bar: np.ndarray
    L: float
    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.L > 0.0:
            raise ValueError(f"saturation limit L must be positive, got {self.L}")
        for name in ("C0", "C1", "C2", "M_bar", "K1", "K2"):
            m = np.array(getattr(self, name), dtype=float)
            if m.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3")
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        object.__setattr__(self, "M_bar_inv", inverse(self.M_bar))

    @property
    def A_o(self) -> np.ndarray:
        Z = np.zeros((3, 3))
        I = np.eye(3)
        return np.block([[-self.C2, I, Z], [-self.C1, Z, I], [-self.C0, Z, Z]])


class ObserverState(NamedTuple):
    xi1: np.ndarray
    xi2: np.ndarray
    sigma: np.ndarray


def smooth_sat(v, L: float) -> np.ndarray:
    """Componentwise ``L tanh(v / L)``; ``L = inf`` disables saturation."""
    v = np.asarray(v, dtype=float)
    if np.isinf(L):
        return v.copy()
    return L * np.tanh(v / L)


def z2_hat(obs: ObserverState, p: ObserverParams) -> np.ndarray:
    zbar = p.M_bar @ (obs.sigma + p.K1 @ obs.xi1 + p.K2 @ obs.xi2)
    return smooth_sat(zbar, p.L)


def observer_derivative(obs: ObserverState, x_e, z2h, p: ObserverParams, tau=None) -> ObserverState:
    """Extended observer with innovation ``x_e - xi1_hat``.

    Passing ``tau`` selects the variant that feeds the applied control
    (``+M_bar^-1 tau``) in place of ``-M_bar^-1 z2_hat``.
    """
    inn = np.asarray(x_e, dtype=float) - obs.xi1
    k = p.kappa
    feed = p.M_bar_inv @ np.asarray(tau, dtype=float) if tau is not None else -p.M_bar_inv @ z2h
    return ObserverState(
        xi1=obs.xi2 + k * (p.C2 @ inn),
        xi2=obs.sigma + feed + k ** 2 * (p.C1 @ inn),
        sigma=k ** 3 * (p.C0 @ inn),
    )


def adaptation_derivative(gamma_hat, z2, eta, Q) -> np.ndarray:
    """``d/dt Gamma_hat_i^T = Q_i z2_i eta_i`` for each channel; returns shape (3, 3)."""
    eta = np.asarray(eta, dtype=float).reshape(3, 3)
    z2 = np.asarray(z2, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return np.stack([Q[i] @ eta[i] * z2[i] for i in range(3)])


def control_law(im: InternalModel, gamma_hat, eta, z2h) -> tuple[np.ndarray, np.ndarray]:
    """``tau = -Gamma_hat eta - z2_hat`` and ``eta' = F eta + G (Gamma_hat eta + z2_hat)``."""
    eta = np.asarray(eta, dtype=float)
    u = gamma_matrix(gamma_hat) @ eta + np.asarray(z2h, dtype=float)
    return -u, im.F @ eta + im.G @ u


def oracle_adaptive_control(im: InternalModel, gamma_hat, eta, z2, Q, tau0=None):
    """Adaptive internal model driven by the true ``z2`` (simulation only).

    Returns ``(tau, eta_dot, gamma_hat_dot)``. With ``tau0=None`` this is
    :func:`control_law` fed ``z2`` in place of its estimate.
    """
    u = np.asarray(z2, dtype=float)
    if tau0 is not None:
        u = u + np.asarray(tau0, dtype=float)
    tau, eta_dot = control_law(im, gamma_hat, eta, u)
    return tau, eta_dot, adaptation_derivative(gamma_hat, z2, eta, Q)
