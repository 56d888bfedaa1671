"""Internal model design: companion blocks, spectrum-matching output rows, Sigma.

The internal model is ``eta' = F eta + G u`` with ``F = diag(F_i)`` Hurwitz
in companion form and ``G = diag(G_i)``, ``G_i = (0, 0, 1)^T``. The row
``Gamma_i`` is chosen so that ``F_i + G_i Gamma_i`` has the spectrum of the
exosystem block ``S_i(q_i)``, i.e. characteristic polynomial ``s^3 + q_i s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import eig_real_parts, sylvester_solve
from .plant import N_CHANNELS, ExosystemParams, S_block, block_diag


class InternalModelError(ValueError):
    pass


def build_companion(poly) -> tuple[np.ndarray, np.ndarray]:
    """Companion block for the monic polynomial ``s^n + a_{n-1} s^{n-1} + ... + a_0``.

    ``poly`` lists ``(a_0, ..., a_{n-1})``; the polynomial must be Hurwitz.
    """
    a = np.asarray(poly, dtype=float).reshape(-1)
    n = a.size
    F = np.eye(n, k=1)
    F[-1, :] = -a
    G = np.zeros(n)
    G[-1] = 1.0
    re = eig_real_parts(F)
    if re.max() >= 0.0:
        raise InternalModelError(f"polynomial {a.tolist()} is not Hurwitz (root real part {re.max():.4g})")
    return F, G


def companion_poly(F_i: np.ndarray) -> np.ndarray:
    """Recover ``(a_0, ..., a_{n-1})`` from a companion block; raises if ``F_i`` is not companion."""
    F_i = np.asarray(F_i, dtype=float)
    n = F_i.shape[0]
    if not np.array_equal(F_i[:-1], np.eye(n, k=1)[:-1]):
        raise InternalModelError("internal-model block is not in companion (Frobenius) form")
    return -F_i[-1].copy()


@dataclass(frozen=True, eq=False)
class InternalModel:
    F_blocks: np.ndarray  # (3, 3, 3)
    G_blocks: np.ndarray  # (3, 3), one input column per channel

    def __post_init__(self):
        F = np.array(self.F_blocks, dtype=float)
        G = np.array(self.G_blocks, dtype=float)
        if F.shape != (N_CHANNELS, 3, 3) or G.shape != (N_CHANNELS, 3):
            raise InternalModelError(f"expected F blocks (3,3,3) and G columns (3,3), got {F.shape}, {G.shape}")
        for i in range(N_CHANNELS):
            companion_poly(F[i])
            if not np.array_equal(G[i], [0.0, 0.0, 1.0]):
                raise InternalModelError(f"G_{i + 1} must be (0, 0, 1)")
        F.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "F_blocks", F)
        object.__setattr__(self, "G_blocks", G)

    @classmethod
    def from_polys(cls, polys) -> "InternalModel":
        blocks = [build_companion(p) for p in polys]
        return cls(np.stack([b[0] for b in blocks]), np.stack([b[1] for b in blocks]))

    @property
    def char_polys(self) -> np.ndarray:
        return np.stack([companion_poly(f) for f in self.F_blocks])

    @property
    def F(self) -> np.ndarray:
        return block_diag(*self.F_blocks)

    @property
    def G(self) -> np.ndarray:
        return block_diag(*[g.reshape(3, 1) for g in self.G_blocks])

    def is_hurwitz(self) -> bool:
        return all(eig_real_parts(f).max() < 0.0 for f in self.F_blocks)


def gamma_from_q(poly, q_i: float) -> np.ndarray:
    """Row matching ``F_i + G_i Gamma_i`` to the spectrum ``{0, +-i sqrt(q_i)}``.

    For the companion polynomial ``(1, 3, 3)`` this is ``(1, 3 - q_i, 3)``.
    """
    a = np.asarray(poly, dtype=float)
    target = np.array([0.0, q_i, 0.0])
    return a - target


def gamma_rows(im: InternalModel, q) -> np.ndarray:
    return np.stack([gamma_from_q(p, qi) for p, qi in zip(im.char_polys, q)])


def gamma_matrix(rows) -> np.ndarray:
    """``Gamma = diag(Gamma_1, Gamma_2, Gamma_3)`` as a 3 x 9 matrix."""
    return block_diag(*[np.reshape(r, (1, 3)) for r in rows])


def q_readout(im: InternalModel, gamma_hat) -> np.ndarray:
    """Frequency estimates ``q_hat_i = a_1 - Gamma_hat_{i,2}``."""
    gamma_hat = np.asarray(gamma_hat)
    return im.char_polys[:, 1] - gamma_hat[..., 1]


def sigma_solve(im: InternalModel, gamma, exo: ExosystemParams, tol: float = 1e-8) -> np.ndarray:
    """Block-diagonal ``Sigma`` with ``Sigma S = (F + G Gamma) Sigma`` and ``H = Gamma Sigma``.

    Given the output constraint, the first equation is equivalent to the
    Sylvester equation ``Sigma S - F Sigma = G H``, which has a unique solution
    because ``F`` is Hurwitz and ``S`` is not. Both original residuals are
    then checked; a ``Gamma`` not matched to ``q`` leaves them large.
    """
    gamma = np.asarray(gamma, dtype=float)
    blocks = []
    for i in range(N_CHANNELS):
        F_i = im.F_blocks[i]
        G_i = im.G_blocks[i].reshape(3, 1)
        S_i = S_block(exo.q[i])
        H_i = exo.H_rows[i].reshape(1, 3)
        g_i = gamma[i].reshape(1, 3)
        Sig = sylvester_solve(-F_i, S_i, G_i @ H_i)
        r_sylv = np.max(np.abs(Sig @ S_i - (F_i + G_i @ g_i) @ Sig))
        r_out = np.max(np.abs(H_i - g_i @ Sig))
        if max(r_sylv, r_out) > tol:
            raise InternalModelError(
                f"no Sigma for channel {i + 1}: residuals {r_sylv:.3e} / {r_out:.3e} "
                "(Gamma does not match the exosystem spectrum)"
            )
        blocks.append(Sig)
    return block_diag(*blocks)


def sigma_residuals(im: InternalModel, gamma, exo: ExosystemParams, Sigma) -> tuple[float, float]:
    Gam = gamma_matrix(gamma)
    r1 = np.max(np.abs(Sigma @ exo.S - (im.F + im.G @ Gam) @ Sigma))
    r2 = np.max(np.abs(exo.H - Gam @ Sigma))
    return float(r1), float(r2)


def ideal_control(im: InternalModel, gamma, eta, z2, tau0=None) -> tuple[np.ndarray, np.ndarray]:
    """Known-frequency internal-model controller.

    ``tau = -Gamma eta - z2 - tau0`` and ``eta' = F eta + G (Gamma eta + z2 + tau0)``.
    The closed loop takes the disturbance-free block form when
    ``tau0 = -Gamma (eta - Sigma w)``.
    """
    eta = np.asarray(eta, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    u = gamma_matrix(gamma) @ eta + z2
    if tau0 is not None:
        u = u + np.asarray(tau0, dtype=float)
    return -u, im.F @ eta + im.G @ u


def tau0_feedforward(gamma, eta, Sigma, w) -> np.ndarray:
    return -gamma_matrix(gamma) @ (np.asarray(eta) - Sigma @ np.asarray(w))
