"""JSON scenario files: parsing with field-path diagnostics, validation, serialization.

A scenario file mirrors :class:`~vesselkeep.sim.Scenario`. Matrices are
row-major nested arrays. Physical fields are mandatory; solver fields
(``t_final``, ``dt``, ``controller_kind``, ``log_stride``, ``observer_tau_feed``,
``oracle_tau0``, ``name``) take defaults. ``controller.observer.L = null``
disables the saturation.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .adaptive import ObserverParams
from .plant import ExosystemParams, VesselParams
from .regulator import InternalModel, InternalModelError
from .sim import ControllerConfig, Scenario, ScenarioError

BUNDLED = ("paper.json",)


class ConfigError(ValueError):
    """Invalid scenario file; ``path`` names the offending field.

    ``gate`` names the certificate the rejected value would fail, if any.
    """

    def __init__(self, path: str, message: str, source: str | None = None, gate: str | None = None):
        self.path = path
        self.message = message
        self.source = source
        self.gate = gate
        where = f"{source}: " if source else ""
        field_ = f"{path}: " if path else ""
        super().__init__(f"{where}{field_}{message}")


_SCHEMA = {
    "vessel": {"M", "D", "allow_nonsymmetric_M"},
    "exo": {"q", "H_rows", "w0"},
    "controller": {"internal_model", "gamma_hat0", "Q", "observer"},
    "controller.internal_model": {"char_polys"},
    "controller.observer": {"kappa", "L", "C0", "C1", "C2", "M_bar", "K1", "K2"},
}
_TOP_REQUIRED = {"vessel", "exo", "controller", "x_r", "x0", "xdot0"}
_TOP_DEFAULTS = {
    "name": "",
    "t_final": 500.0,
    "dt": 1e-4,
    "controller_kind": "adaptive-observer",
    "log_stride": None,
    "observer_tau_feed": False,
    "oracle_tau0": True,
}
_OPTIONAL = {"vessel": {"allow_nonsymmetric_M": False}}


def _check_keys(obj, path: str, allowed: set, required: set):
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"{path}.{missing[0]}" if path else missing[0], "missing required field")


def _array(obj, path: str, shape: tuple) -> np.ndarray:
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a numeric array of shape {shape}") from None
    if a.shape != shape:
        raise ConfigError(path, f"expected shape {shape}, got {a.shape}")
    bad = np.argwhere(~np.isfinite(a))
    if bad.size:
        idx = "".join(f"[{i}]" for i in bad[0])
        raise ConfigError(path + idx, "must be finite")
    return a


def _number(obj, path: str, positive: bool = False, integer: bool = False) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ConfigError(path, "expected a number")
    if not math.isfinite(obj):
        raise ConfigError(path, "must be finite")
    if integer and obj != int(obj):
        raise ConfigError(path, "expected an integer")
    if positive and not obj > 0:
        raise ConfigError(path, f"must be positive, got {obj}")
    return int(obj) if integer else float(obj)


def _bool(obj, path: str) -> bool:
    if not isinstance(obj, bool):
        raise ConfigError(path, "expected true or false")
    return obj


def scenario_from_dict(doc: dict, source: str | None = None) -> Scenario:
    try:
        return _scenario_from_dict(doc)
    except ConfigError as exc:
        exc.source = source
        raise ConfigError(exc.path, exc.message, source, exc.gate) from None


def _scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(doc, "", _TOP_REQUIRED | set(_TOP_DEFAULTS), _TOP_REQUIRED)
    for section, keys in _SCHEMA.items():
        node = doc
        for part in section.split("."):
            node = node.get(part) if isinstance(node, dict) else None
        required = keys - set(_OPTIONAL.get(section, {}))
        _check_keys(node, section, keys, required)

    v = doc["vessel"]
    allow = _bool(v.get("allow_nonsymmetric_M", False), "vessel.allow_nonsymmetric_M")
    M = _array(v["M"], "vessel.M", (3, 3))
    D = _array(v["D"], "vessel.D", (3, 3))
    try:
        vessel = VesselParams(M, D, allow_nonsymmetric_M=allow)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigError("vessel.M", str(exc)) from None

    e = doc["exo"]
    q = _array(e["q"], "exo.q", (3,))
    for i, qi in enumerate(q):
        if qi <= 0.0:
            raise ConfigError(f"exo.q[{i}]", f"must be positive, got {qi:g}")
    exo = ExosystemParams(q, _array(e["H_rows"], "exo.H_rows", (3, 3)), _array(e["w0"], "exo.w0", (9,)))

    c = doc["controller"]
    polys = _array(c["internal_model"]["char_polys"], "controller.internal_model.char_polys", (3, 3))
    try:
        im = InternalModel.from_polys(polys)
    except InternalModelError as exc:
        gate = "internal_model" if "Hurwitz" in str(exc) else None
        raise ConfigError("controller.internal_model.char_polys", str(exc), gate=gate) from None

    o = c["observer"]
    L = o["L"]
    L = math.inf if L is None else _number(L, "controller.observer.L", positive=True)
    mats = {k: _array(o[k], f"controller.observer.{k}", (3, 3)) for k in ("C0", "C1", "C2", "M_bar", "K1", "K2")}
    for k in ("K1", "K2"):
        K = mats[k]
        if np.max(np.abs(K - K.T)) > 1e-12 or np.linalg.eigvalsh(K).min() <= 0.0:
            raise ConfigError(f"controller.observer.{k}", "must be symmetric positive definite")
    kappa = _number(o["kappa"], "controller.observer.kappa", positive=True)
    try:
        obs = ObserverParams(kappa=kappa, L=L, **mats)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigError("controller.observer.M_bar", str(exc)) from None
    try:
        ctrl = ControllerConfig(
            internal_model=im,
            gamma_hat0=_array(c["gamma_hat0"], "controller.gamma_hat0", (3, 3)),
            Q=_array(c["Q"], "controller.Q", (3, 3, 3)),
            observer=obs,
        )
    except ScenarioError as exc:
        raise ConfigError("controller", str(exc)) from None

    opts = {k: doc.get(k, d) for k, d in _TOP_DEFAULTS.items()}
    if not isinstance(opts["name"], str):
        raise ConfigError("name", "expected a string")
    opts["t_final"] = _number(opts["t_final"], "t_final", positive=True)
    opts["dt"] = _number(opts["dt"], "dt", positive=True)
    if opts["log_stride"] is not None:
        opts["log_stride"] = _number(opts["log_stride"], "log_stride", positive=True, integer=True)
    opts["observer_tau_feed"] = _bool(opts["observer_tau_feed"], "observer_tau_feed")
    opts["oracle_tau0"] = _bool(opts["oracle_tau0"], "oracle_tau0")
    try:
        return Scenario(
            vessel=vessel, exo=exo, controller=ctrl,
            x_r=_array(doc["x_r"], "x_r", (3,)),
            x0=_array(doc["x0"], "x0", (3,)),
            xdot0=_array(doc["xdot0"], "xdot0", (3,)),
            **opts,
        )
    except ScenarioError as exc:
        field_ = "controller_kind" if "controller_kind" in str(exc) else ""
        raise ConfigError(field_, str(exc)) from None


def parse(text: str, source: str | None = None) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", source) from None
    return scenario_from_dict(doc, source)


def load(path) -> Scenario:
    """Read a scenario file; a bare bundled name such as ``paper.json`` falls back to the packaged copy."""
    path = Path(path)
    if not path.exists() and str(path) in BUNDLED:
        return load_bundled(str(path))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read file: {exc.strerror}", str(path)) from None
    return parse(text, str(path))


def bundled_text(name: str = "paper.json") -> str:
    return resources.files("vesselkeep").joinpath("data").joinpath(name).read_text()


def load_bundled(name: str = "paper.json") -> Scenario:
    return parse(bundled_text(name), name)


def _rows(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def scenario_to_dict(scn: Scenario) -> dict:
    ctrl = scn.controller
    obs = ctrl.observer
    vessel = {"M": _rows(scn.vessel.M), "D": _rows(scn.vessel.D)}
    if scn.vessel.allow_nonsymmetric_M:
        vessel["allow_nonsymmetric_M"] = True
    return {
        "name": scn.name,
        "vessel": vessel,
        "exo": {"q": _rows(scn.exo.q), "H_rows": _rows(scn.exo.H_rows), "w0": _rows(scn.exo.w0)},
        "controller": {
            "internal_model": {"char_polys": _rows(ctrl.internal_model.char_polys)},
            "gamma_hat0": _rows(ctrl.gamma_hat0),
            "Q": _rows(ctrl.Q),
            "observer": {
                "kappa": float(obs.kappa),
                "L": None if math.isinf(obs.L) else float(obs.L),
                "C0": _rows(obs.C0), "C1": _rows(obs.C1), "C2": _rows(obs.C2),
                "M_bar": _rows(obs.M_bar), "K1": _rows(obs.K1), "K2": _rows(obs.K2),
            },
        },
        "x_r": _rows(scn.x_r),
        "x0": _rows(scn.x0),
        "xdot0": _rows(scn.xdot0),
        "t_final": float(scn.t_final),
        "dt": float(scn.dt),
        "controller_kind": scn.controller_kind,
        "log_stride": scn.log_stride,
        "observer_tau_feed": scn.observer_tau_feed,
        "oracle_tau0": scn.oracle_tau0,
    }


def normalize(doc: dict) -> str:
    """Canonical text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def serialize(scn: Scenario) -> str:
    return normalize(scenario_to_dict(scn))
