"""Closed-loop right-hand side and fixed-step RK4 loop.

The same source runs compiled by numba or as plain numpy. The compiled path
is the default; set ``VESSELKEEP_NO_NUMBA=1`` (or pass ``backend="numpy"``)
to run the interpreted path, which is slower but needs no JIT.

State layout (42 entries)::

    x 0:3 | xd 3:6 | w 6:15 | eta 15:24 | gamma_hat 24:33 (row-major per channel)
    | xi1_hat 33:36 | xi2_hat 36:39 | sigma 39:42
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

STATE_SIZE = 42
SL_X = slice(0, 3)
SL_XD = slice(3, 6)
SL_W = slice(6, 15)
SL_ETA = slice(15, 24)
SL_GAMMA = slice(24, 33)
SL_XI1 = slice(33, 36)
SL_XI2 = slice(36, 39)
SL_SIGMA = slice(39, 42)

KIND_OPEN_LOOP = 0
KIND_IDEAL = 1
KIND_ORACLE = 2
KIND_OBSERVER = 3

# indices into the (N_MATS, 3, 3) parameter stack
M_INV, DAMP, T1, T2, C0, C1, C2, M_BAR, M_BAR_INV, K1, K2, H_ROWS, GAMMA_TRUE, G_COLS = range(14)
N_MATS = 14
# indices into the (3, 3, 3, 3) per-channel block stack
B_F, B_Q, B_SIGMA = range(3)
# option flags
OPT_TAU0, OPT_TAU_FEED, OPT_SAT = range(3)

DIVERGENCE_LIMIT = 1e9


def _rhs(y, kind, opts, mats, blocks, q, xr, kappa, L, dy, tau):
    """Write the state derivative into ``dy`` and the applied control into ``tau``."""
    x = y[0:3]
    v = y[3:6]
    xe = x - xr

    td = np.zeros(3)
    for i in range(3):
        for j in range(3):
            td[i] += mats[H_ROWS, i, j] * y[6 + 3 * i + j]

    for k in range(STATE_SIZE):
        dy[k] = 0.0
    for i in range(3):
        tau[i] = 0.0

    if kind != KIND_OPEN_LOOP:
        # internal-model output Gamma eta (true rows for the ideal loop)
        g_eta = np.zeros(3)
        for i in range(3):
            for j in range(3):
                if kind == KIND_IDEAL:
                    g = mats[GAMMA_TRUE, i, j]
                else:
                    g = y[24 + 3 * i + j]
                g_eta[i] += g * y[15 + 3 * i + j]

        if kind == KIND_OBSERVER:
            xh1 = y[33:36]
            xh2 = y[36:39]
            sg = y[39:42]
            zbar = mats[M_BAR] @ (sg + mats[K1] @ xh1 + mats[K2] @ xh2)
            if opts[OPT_SAT]:
                u = L * np.tanh(zbar / L)
            else:
                u = zbar
        else:
            u = mats[T1] @ xe + mats[T2] @ v

        ff = np.zeros(3)
        if kind != KIND_OBSERVER and opts[OPT_TAU0]:
            # tau0 = -Gamma (eta - Sigma w) with the true rows
            for i in range(3):
                acc = 0.0
                for j in range(3):
                    sw = 0.0
                    for m in range(3):
                        sw += blocks[B_SIGMA, i, j, m] * y[6 + 3 * i + m]
                    acc += mats[GAMMA_TRUE, i, j] * (y[15 + 3 * i + j] - sw)
                ff[i] = -acc

        for i in range(3):
            drive = g_eta[i] + u[i] + ff[i]
            tau[i] = -drive
            for j in range(3):
                acc = 0.0
                for m in range(3):
                    acc += blocks[B_F, i, j, m] * y[15 + 3 * i + m]
                dy[15 + 3 * i + j] = acc + mats[G_COLS, i, j] * drive

        if kind == KIND_ORACLE or kind == KIND_OBSERVER:
            for i in range(3):
                for j in range(3):
                    acc = 0.0
                    for m in range(3):
                        acc += blocks[B_Q, i, j, m] * y[15 + 3 * i + m]
                    dy[24 + 3 * i + j] = acc * u[i]

        if kind == KIND_OBSERVER:
            inn = xe - y[33:36]
            if opts[OPT_TAU_FEED]:
                feed = mats[M_BAR_INV] @ tau
            else:
                feed = -(mats[M_BAR_INV] @ u)
            d1 = y[36:39] + kappa * (mats[C2] @ inn)
            d2 = y[39:42] + feed + (kappa * kappa) * (mats[C1] @ inn)
            d3 = (kappa * kappa * kappa) * (mats[C0] @ inn)
            for k in range(3):
                dy[33 + k] = d1[k]
                dy[36 + k] = d2[k]
                dy[39 + k] = d3[k]

    acc_v = mats[M_INV] @ (tau + td - mats[DAMP] @ v)
    for k in range(3):
        dy[k] = v[k]
        dy[3 + k] = acc_v[k]
    for i in range(3):
        dy[6 + 3 * i + 1] = y[6 + 3 * i + 2]
        dy[6 + 3 * i + 2] = -q[i] * y[6 + 3 * i + 1]


def _make_loops(rhs, decorate):
    """Build the RK4 loop and the control readout around a given ``rhs``."""

    def integrate(y0, n_steps, dt, stride, kind, opts, mats, blocks, q, xr, kappa, L):
        """RK4 from ``y0`` for ``n_steps``; records every ``stride`` steps and the last step.

        Returns ``(states, steps, status, fail_step)``; ``status`` is 0 on
        success and 1 when a component left ``[-1e9, 1e9]`` or became non-finite.
        """
        n = y0.shape[0]
        n_rows = n_steps // stride + 1
        if n_steps % stride != 0:
            n_rows += 1
        out = np.empty((n_rows, n))
        steps = np.empty(n_rows, dtype=np.int64)
        y = y0.copy()
        out[0] = y
        steps[0] = 0
        row = 1
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tau = np.empty(3)
        half = 0.5 * dt
        sixth = dt / 6.0
        status = 0
        fail_step = -1
        for s in range(1, n_steps + 1):
            rhs(y, kind, opts, mats, blocks, q, xr, kappa, L, k1, tau)
            rhs(y + half * k1, kind, opts, mats, blocks, q, xr, kappa, L, k2, tau)
            rhs(y + half * k2, kind, opts, mats, blocks, q, xr, kappa, L, k3, tau)
            rhs(y + dt * k3, kind, opts, mats, blocks, q, xr, kappa, L, k4, tau)
            for k in range(n):
                y[k] = y[k] + sixth * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
            bad = False
            for k in range(n):
                if not (abs(y[k]) <= DIVERGENCE_LIMIT):
                    bad = True
                    break
            if bad or s % stride == 0 or s == n_steps:
                out[row] = y
                steps[row] = s
                row += 1
            if bad:
                status = 1
                fail_step = s
                break
        return out[:row], steps[:row], status, fail_step

    def controls(states, kind, opts, mats, blocks, q, xr, kappa, L):
        n_rows = states.shape[0]
        out = np.empty((n_rows, 3))
        dy = np.empty(states.shape[1])
        tau = np.empty(3)
        for r in range(n_rows):
            rhs(states[r].copy(), kind, opts, mats, blocks, q, xr, kappa, L, dy, tau)
            out[r] = tau
        return out

    return decorate(integrate), decorate(controls)


rhs_numpy = _rhs
integrate_numpy, controls_numpy = _make_loops(_rhs, lambda f: f)

if HAVE_NUMBA:
    rhs_numba = njit(cache=True)(_rhs)
    integrate_numba, controls_numba = _make_loops(rhs_numba, njit)


def default_backend() -> str:
    if not HAVE_NUMBA or os.environ.get("VESSELKEEP_NO_NUMBA", "").strip() not in ("", "0"):
        return "numpy"
    return "numba"


def get_kernels(backend: str | None = None):
    """Return ``(rhs, integrate, controls)`` for ``"numba"`` or ``"numpy"``."""
    backend = backend or default_backend()
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return rhs_numba, integrate_numba, controls_numba
    if backend == "numpy":
        return rhs_numpy, integrate_numpy, controls_numpy
    raise ValueError(f"unknown backend {backend!r}")
