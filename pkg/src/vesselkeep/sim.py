"""Scenario assembly, closed-loop integration, logging and metrics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import kernels as kn
from .adaptive import ObserverParams
from .certificates import (
    Certificate,
    assemble_closed_loop,
    francis_solve,
    hurwitz_certificate,
    lyapunov_state,
    observer_matrix_check,
    proposition1_P,
    sigma_certificate,
)
from .linalg import eigvals
from .plant import (
    ExosystemParams,
    TransformError,
    VesselParams,
    build_error_model,
    build_transform,
)
from .regulator import InternalModel, InternalModelError, gamma_rows, q_readout, sigma_solve

log = logging.getLogger(__name__)

CONTROLLER_KINDS = {
    "open-loop": kn.KIND_OPEN_LOOP,
    "ideal-known-gamma": kn.KIND_IDEAL,
    "adaptive-oracle": kn.KIND_ORACLE,
    "adaptive-observer": kn.KIND_OBSERVER,
}
KIND_ALIASES = {"ideal-known-Γ": "ideal-known-gamma", "ideal": "ideal-known-gamma",
                "oracle": "adaptive-oracle", "observer": "adaptive-observer"}
STEP_BOUND = 0.5
STEP_BOUND_SLACK = 5.0


class ScenarioError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, t: float, component: int, value: float, log: "RunLog"):
        self.t = t
        self.component = component
        self.value = value
        self.log = log
        super().__init__(
            f"trajectory diverged at t={t:.6g}: state component {component} = {value:.3e}"
        )


@dataclass(frozen=True, eq=False)
class ControllerConfig:
    internal_model: InternalModel
    gamma_hat0: np.ndarray
    Q: np.ndarray
    observer: ObserverParams

    def __post_init__(self):
        g = np.array(self.gamma_hat0, dtype=float)
        Q = np.array(self.Q, dtype=float)
        if g.shape != (3, 3):
            raise ScenarioError("gamma_hat0 must be 3 rows of 3")
        if Q.shape != (3, 3, 3):
            raise ScenarioError("Q must hold three 3x3 blocks")
        for i in range(3):
            if np.max(np.abs(Q[i] - Q[i].T)) > 1e-12 or np.linalg.eigvalsh(Q[i]).min() < -1e-12:
                raise ScenarioError(f"Q_{i + 1} must be symmetric positive semidefinite")
        object.__setattr__(self, "gamma_hat0", g)
        object.__setattr__(self, "Q", Q)

    @property
    def K1(self) -> np.ndarray:
        return self.observer.K1

    @property
    def K2(self) -> np.ndarray:
        return self.observer.K2


@dataclass(frozen=True, eq=False)
class Scenario:
    vessel: VesselParams
    exo: ExosystemParams
    controller: ControllerConfig
    x_r: np.ndarray
    x0: np.ndarray
    xdot0: np.ndarray
    t_final: float = 500.0
    dt: float = 1e-4
    controller_kind: str = "adaptive-observer"
    log_stride: int | None = None
    observer_tau_feed: bool = False
    oracle_tau0: bool = True
    name: str = ""

    def __post_init__(self):
        for f in ("x_r", "x0", "xdot0"):
            a = np.array(getattr(self, f), dtype=float).reshape(-1)
            if a.shape != (3,):
                raise ScenarioError(f"{f} must have 3 entries")
            object.__setattr__(self, f, a)
        if not self.dt > 0.0:
            raise ScenarioError(f"dt must be positive, got {self.dt}")
        if not self.t_final > 0.0:
            raise ScenarioError(f"t_final must be positive, got {self.t_final}")
        kind = KIND_ALIASES.get(self.controller_kind, self.controller_kind)
        object.__setattr__(self, "controller_kind", kind)
        if self.controller_kind not in CONTROLLER_KINDS:
            raise ScenarioError(
                f"controller_kind must be one of {sorted(CONTROLLER_KINDS)}, got {self.controller_kind!r}"
            )
        if self.log_stride is not None and self.log_stride < 1:
            raise ScenarioError("log_stride must be >= 1")

    @property
    def kind(self) -> int:
        return CONTROLLER_KINDS[self.controller_kind]

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def stride(self) -> int:
        if self.log_stride is not None:
            return self.log_stride
        return max(1, int(round(0.1 / self.dt)))

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Assembly:
    """Matrices derived once per scenario."""

    transform: object
    gamma_true: np.ndarray
    Sigma: np.ndarray
    closed_loop: object
    P: np.ndarray | None
    certificates: list[Certificate]


def _safe_cert(name: str, fn, hard: bool = True) -> Certificate:
    try:
        cert = fn()
    except (ValueError, np.linalg.LinAlgError) as exc:
        return Certificate(name, hard=hard, error=str(exc))
    return cert


def assemble(scn: Scenario) -> Assembly:
    """Build transform, true internal-model rows, Sigma, closed loop and certificates.

    Raises :class:`ScenarioError` for structural failures (singular ``T2``,
    internal model without a Sigma solution); certificate failures are
    recorded, not raised.
    """
    ctrl = scn.controller
    im = ctrl.internal_model
    try:
        tm = build_transform(scn.vessel, ctrl.K1, ctrl.K2, scn.exo, strict=False)
    except TransformError as exc:
        raise ScenarioError(str(exc)) from exc
    gamma_true = gamma_rows(im, scn.exo.q)
    certs: list[Certificate] = []

    transform_cert = Certificate("transform")
    transform_cert.eigen_summary["B2_sym_min_eig"] = tm.b2_min_eig
    transform_cert.residuals["B2_asymmetry"] = tm.b2_asymmetry
    transform_cert.checks["B2_positive_definite"] = tm.b2_positive_definite
    certs.append(transform_cert)

    certs.append(_safe_cert("internal_model", lambda: hurwitz_certificate("internal_model", im.F, margin=0.0)))

    Sigma = None
    try:
        Sigma = sigma_solve(im, gamma_true, scn.exo)
        certs.append(sigma_certificate(im, gamma_true, scn.exo, Sigma))
    except (InternalModelError, np.linalg.LinAlgError) as exc:
        certs.append(Certificate("sigma", error=str(exc)))

    err = build_error_model(scn.vessel, scn.exo)
    certs.append(_safe_cert("francis", lambda: francis_solve(err, scn.exo.S)[2]))

    cl = assemble_closed_loop(tm, im.F, im.G)
    certs.append(hurwitz_certificate("closed_loop", cl.A))

    P = None
    try:
        P, cert = proposition1_P(cl, tm, im.F, im.G)
        certs.append(cert)
        if not cert.passed:
            # V is only a Lyapunov function for a certified P
            P = None
    except (ValueError, np.linalg.LinAlgError) as exc:
        certs.append(Certificate("proposition1", error=str(exc)))

    certs.append(observer_matrix_check(ctrl.observer, scn.vessel))
    if Sigma is None and scn.kind in (kn.KIND_IDEAL, kn.KIND_ORACLE) and scn.oracle_tau0:
        raise ScenarioError("the disturbance feedforward needs Sigma, which has no solution")
    return Assembly(tm, gamma_true, Sigma, cl, P, certs)


def fastest_mode(scn: Scenario, asm: Assembly) -> float:
    """Largest eigenvalue magnitude the integrator has to resolve."""
    lam = [np.abs(eigvals(asm.closed_loop.A)).max(), np.sqrt(scn.exo.q.max())]
    if scn.kind == kn.KIND_OBSERVER:
        lam.append(scn.controller.observer.kappa * np.abs(eigvals(scn.controller.observer.A_o)).max())
    return float(max(lam))


def check_step_size(scn: Scenario, asm: Assembly) -> float:
    """Return ``|lambda|max * dt``; refuse steps more than 5x past the 0.5 bound."""
    ratio = fastest_mode(scn, asm) * scn.dt
    if ratio > STEP_BOUND * STEP_BOUND_SLACK:
        raise ScenarioError(
            f"dt={scn.dt:g} too large: |lambda|max*dt = {ratio:.3g} exceeds {STEP_BOUND * STEP_BOUND_SLACK:g}"
        )
    if ratio > STEP_BOUND:
        log.warning("dt=%g gives |lambda|max*dt = %.3g above %.1f", scn.dt, ratio, STEP_BOUND)
    return ratio


def initial_state(scn: Scenario, asm: Assembly) -> np.ndarray:
    y = np.zeros(kn.STATE_SIZE)
    y[kn.SL_X] = scn.x0
    y[kn.SL_XD] = scn.xdot0
    y[kn.SL_W] = scn.exo.w0
    if scn.kind == kn.KIND_IDEAL:
        y[kn.SL_GAMMA] = asm.gamma_true.reshape(-1)
    else:
        y[kn.SL_GAMMA] = scn.controller.gamma_hat0.reshape(-1)
    if scn.kind == kn.KIND_OBSERVER:
        # zero initial innovation: x_e is measured
        y[kn.SL_XI1] = scn.x0 - scn.x_r
    return y


def pack_params(scn: Scenario, asm: Assembly):
    ctrl = scn.controller
    obs = ctrl.observer
    im = ctrl.internal_model
    tm = asm.transform
    mats = np.zeros((kn.N_MATS, 3, 3))
    mats[kn.M_INV] = scn.vessel.M_inv
    mats[kn.DAMP] = scn.vessel.D
    mats[kn.T1] = tm.T1
    mats[kn.T2] = tm.T2
    mats[kn.C0] = obs.C0
    mats[kn.C1] = obs.C1
    mats[kn.C2] = obs.C2
    mats[kn.M_BAR] = obs.M_bar
    mats[kn.M_BAR_INV] = obs.M_bar_inv
    mats[kn.K1] = obs.K1
    mats[kn.K2] = obs.K2
    mats[kn.H_ROWS] = scn.exo.H_rows
    mats[kn.GAMMA_TRUE] = asm.gamma_true
    mats[kn.G_COLS] = im.G_blocks
    blocks = np.zeros((3, 3, 3, 3))
    blocks[kn.B_F] = im.F_blocks
    blocks[kn.B_Q] = ctrl.Q
    if asm.Sigma is not None:
        for i in range(3):
            blocks[kn.B_SIGMA, i] = asm.Sigma[3 * i:3 * i + 3, 3 * i:3 * i + 3]
    opts = np.zeros(3, dtype=np.int64)
    opts[kn.OPT_TAU0] = int(scn.oracle_tau0)
    opts[kn.OPT_TAU_FEED] = int(scn.observer_tau_feed)
    opts[kn.OPT_SAT] = int(np.isfinite(obs.L))
    L = float(obs.L) if np.isfinite(obs.L) else 1.0
    return (scn.kind, opts, mats, blocks, np.array(scn.exo.q, dtype=float),
            scn.x_r.copy(), float(obs.kappa), L)


@dataclass(eq=False)
class RunLog:
    scenario: Scenario
    t: np.ndarray
    states: np.ndarray
    tau: np.ndarray
    assembly: Assembly = field(repr=False)
    status: str = "ok"

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def kind(self) -> str:
        return self.scenario.controller_kind

    @property
    def x(self) -> np.ndarray:
        return self.states[:, kn.SL_X]

    @property
    def x_e(self) -> np.ndarray:
        return self.x - self.scenario.x_r

    @property
    def xdot(self) -> np.ndarray:
        return self.states[:, kn.SL_XD]

    @property
    def w(self) -> np.ndarray:
        return self.states[:, kn.SL_W]

    @property
    def eta(self) -> np.ndarray:
        return self.states[:, kn.SL_ETA]

    @property
    def gamma_hat(self) -> np.ndarray:
        return self.states[:, kn.SL_GAMMA].reshape(-1, 3, 3)

    @property
    def tau_d(self) -> np.ndarray:
        H = self.scenario.exo.H_rows
        w = self.w.reshape(-1, 3, 3)
        return np.einsum("ij,nij->ni", H, w)

    @property
    def has_controller(self) -> bool:
        return self.kind != "open-loop"

    @property
    def has_observer(self) -> bool:
        return self.kind == "adaptive-observer"

    @property
    def q_hat(self) -> np.ndarray | None:
        if not self.has_controller:
            return None
        return q_readout(self.scenario.controller.internal_model, self.gamma_hat)

    @property
    def q_tilde(self) -> np.ndarray | None:
        qh = self.q_hat
        return None if qh is None else qh - self.scenario.exo.q

    @property
    def obs_err(self) -> np.ndarray | None:
        """``||xi - xi_hat||`` over both observer position and velocity estimates."""
        if not self.has_observer:
            return None
        e1 = self.x_e - self.states[:, kn.SL_XI1]
        e2 = self.xdot - self.states[:, kn.SL_XI2]
        return np.sqrt((e1 ** 2).sum(axis=1) + (e2 ** 2).sum(axis=1))

    @property
    def obs_vel_err(self) -> np.ndarray | None:
        if not self.has_observer:
            return None
        return np.linalg.norm(self.xdot - self.states[:, kn.SL_XI2], axis=1)

    @property
    def z2(self) -> np.ndarray:
        tm = self.assembly.transform
        return self.x_e @ tm.T1.T + self.xdot @ tm.T2.T

    @cached_property
    def V(self) -> np.ndarray | None:
        """Adaptive Lyapunov function along the log, or ``None`` when undefined."""
        asm = self.assembly
        if not self.has_controller or asm.P is None or asm.Sigma is None:
            return None
        Q = self.scenario.controller.Q
        gt = self.gamma_hat - asm.gamma_true
        Qp = np.stack([np.linalg.pinv(Q[i]) for i in range(3)])
        # Gamma_tilde must lie in range(Q_i) for the pseudo-inverse term to be meaningful
        proj = np.einsum("ijk,ikl,nil->nij", Q, Qp, gt)
        if np.max(np.abs(gt - proj), initial=0.0) > 1e-10 * (1.0 + np.max(np.abs(gt), initial=0.0)):
            return None
        X = lyapunov_state(self.eta, self.w, asm.Sigma, self.x_e, self.z2)
        quad = np.einsum("ni,ij,nj->n", X, asm.P, X)
        adapt = np.einsum("nij,ijk,nik->n", gt, Qp, gt)
        return quad + adapt


def run(scn: Scenario, backend: str | None = None, check_dt: bool = True) -> RunLog:
    """Integrate the closed loop; raises :class:`DivergenceError` on blow-up."""
    asm = assemble(scn)
    if check_dt:
        check_step_size(scn, asm)
    _, integrate, controls = kn.get_kernels(backend)
    params = pack_params(scn, asm)
    y0 = initial_state(scn, asm)
    states, steps, status, fail_step = integrate(y0, scn.n_steps, float(scn.dt), scn.stride, *params)
    t = steps * scn.dt
    tau = controls(states, *params)
    result = RunLog(scn, t, states, tau, asm, status="ok" if status == 0 else "diverged")
    if status != 0:
        last = states[-1]
        bad = np.flatnonzero(~(np.abs(last) <= kn.DIVERGENCE_LIMIT))
        idx = int(bad[0]) if bad.size else -1
        raise DivergenceError(float(t[-1]), idx, float(last[idx]), result)
    return result


def _tail_mask(t: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    t_end = t[-1]
    return t >= t_end - fraction * t_end


def settling_time(t: np.ndarray, err: np.ndarray, threshold: float) -> float | None:
    """First time after which ``err`` stays below ``threshold``; ``None`` if never."""
    above = np.flatnonzero(err >= threshold)
    if above.size == 0:
        return 0.0
    last = above[-1]
    if last == err.size - 1:
        return None
    return float(t[last + 1])


def v_violations(V: np.ndarray, slack_rel: float = 1e-6) -> int:
    if V is None or V.size < 2:
        return 0
    return int(np.count_nonzero(np.diff(V) > slack_rel * abs(V[0])))


def metrics(log_: RunLog, obs_window=(10.0, 50.0), settle_threshold: float = 0.05) -> dict:
    """Summary numbers: tail regulation error, settling time, final frequency errors."""
    t = log_.t
    xe_norm = np.linalg.norm(log_.x_e, axis=1)
    out = {
        "controller_kind": log_.kind,
        "t_final": float(t[-1]),
        "rows": int(t.size),
        "eps_tail": float(xe_norm[_tail_mask(t)].max()),
        "xe_final": float(xe_norm[-1]),
        "settling_time": settling_time(t, xe_norm, settle_threshold),
        "qtil_final": None,
        "qhat_final": None,
        "obs_vel_err_mean": None,
        "V_initial": None,
        "V_violations": None,
    }
    if log_.q_tilde is not None:
        out["qtil_final"] = [float(v) for v in np.abs(log_.q_tilde[-1])]
        out["qhat_final"] = [float(v) for v in log_.q_hat[-1]]
    if log_.obs_vel_err is not None:
        m = (t >= obs_window[0]) & (t <= obs_window[1])
        if np.any(m):
            out["obs_vel_err_mean"] = float(log_.obs_vel_err[m].mean())
    V = log_.V
    if V is not None:
        out["V_initial"] = float(V[0])
        out["V_violations"] = v_violations(V)
    return out


def certificates(scn: Scenario) -> list[Certificate]:
    return assemble(scn).certificates


def _run_metrics(args):
    scn, backend = args
    try:
        lg = run(scn, backend=backend)
    except DivergenceError as exc:
        m = metrics(exc.log)
        m["status"] = "diverged"
        return m
    m = metrics(lg)
    m["status"] = "ok"
    return m


def run_many(scenarios, backend: str | None = None, max_workers: int | None = None) -> list[dict]:
    """Metrics for several scenarios, evaluated in parallel worker processes."""
    scenarios = list(scenarios)
    if len(scenarios) == 1 or max_workers == 1:
        return [_run_metrics((s, backend)) for s in scenarios]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_metrics, [(s, backend) for s in scenarios]))
