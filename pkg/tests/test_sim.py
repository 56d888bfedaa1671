import time
from dataclasses import replace

import numpy as np
import pytest

from vesselkeep import kernels as kn
from vesselkeep.plant import NOMINAL_DISTURBANCE, ExosystemParams, disturbance_closed_form
from vesselkeep.sim import (
    DivergenceError,
    ScenarioError,
    assemble,
    check_step_size,
    metrics,
    run,
    run_many,
    settling_time,
    v_violations,
)


@pytest.fixture(scope="module")
def ideal_run(nominal):
    return run(nominal.with_(controller_kind="ideal-known-gamma", dt=1e-3, t_final=100.0))


class TestScenario:
    @pytest.mark.parametrize("field,value", [("dt", 0.0), ("t_final", -1.0), ("controller_kind", "pid")])
    def test_invalid(self, nominal, field, value):
        with pytest.raises(ScenarioError):
            nominal.with_(**{field: value})

    @pytest.mark.parametrize("alias,kind", [
        ("ideal-known-Γ", "ideal-known-gamma"), ("oracle", "adaptive-oracle"), ("observer", "adaptive-observer"),
    ])
    def test_aliases(self, nominal, alias, kind):
        assert nominal.with_(controller_kind=alias).controller_kind == kind

    def test_default_stride_is_tenth_second(self, nominal):
        assert nominal.stride == 1000
        assert nominal.with_(dt=1e-3).stride == 100

    def test_bad_vector(self, nominal):
        with pytest.raises(ScenarioError):
            nominal.with_(x_r=[1.0, 2.0])

    def test_step_refused(self, nominal):
        scn = nominal.with_(dt=0.05)
        with pytest.raises(ScenarioError, match="too large"):
            check_step_size(scn, assemble(scn))
        with pytest.raises(ScenarioError):
            run(scn.with_(t_final=0.1))

    def test_nominal_step_accepted(self, nominal):
        assert check_step_size(nominal, assemble(nominal)) <= 0.5


class TestOpenLoop:
    def test_quadratic_drift(self, nominal):
        lg = run(nominal.with_(controller_kind="open-loop", dt=1e-4, t_final=0.01, log_stride=10))
        assert np.array_equal(lg.tau, np.zeros_like(lg.tau))
        acc = nominal.vessel.M_inv @ (nominal.exo.H @ nominal.exo.w0)
        expect = 0.5 * np.outer(lg.t ** 2, acc)
        # leading term is t^2; the disturbance slope adds an O(t^3) correction
        assert np.max(np.abs(lg.x - expect)) < 1e-2 * np.max(np.abs(expect))

    def test_no_controller_columns(self, nominal):
        lg = run(nominal.with_(controller_kind="open-loop", dt=1e-3, t_final=1.0))
        assert lg.q_hat is None and lg.obs_err is None and lg.V is None
        m = metrics(lg)
        assert m["qtil_final"] is None and m["obs_vel_err_mean"] is None


class TestLog:
    def test_time_strictly_increasing(self, ideal_run):
        assert np.all(np.diff(ideal_run.t) > 0.0)
        assert ideal_run.t[0] == 0.0
        assert ideal_run.t[-1] == pytest.approx(100.0, abs=1e-9)

    def test_exosystem_matches_closed_form(self, ideal_run):
        ref = disturbance_closed_form(NOMINAL_DISTURBANCE, ideal_run.t)
        assert np.max(np.abs(ideal_run.tau_d - ref)) < 1e-5

    def test_ideal_regulation(self, ideal_run):
        assert np.linalg.norm(ideal_run.x_e[-1]) < 1e-6
        m = metrics(ideal_run)
        assert m["settling_time"] is not None and 0.0 < m["settling_time"] < 100.0

    def test_last_step_logged(self, nominal):
        lg = run(nominal.with_(controller_kind="ideal", dt=1e-3, t_final=0.25, log_stride=100))
        assert lg.t.tolist() == pytest.approx([0.0, 0.1, 0.2, 0.25])

    def test_tiny_run(self, nominal):
        lg = run(nominal.with_(t_final=0.001))
        assert len(lg) >= 2


class TestMetrics:
    def test_identically_zero_error(self, nominal):
        exo = ExosystemParams(nominal.exo.q, nominal.exo.H_rows, np.zeros(9))
        scn = nominal.with_(controller_kind="ideal-known-gamma", exo=exo, x_r=np.zeros(3), dt=1e-3, t_final=5.0)
        m = metrics(run(scn))
        assert m["eps_tail"] == 0.0
        assert m["settling_time"] == 0.0

    def test_settling_time(self):
        t = np.arange(5.0)
        assert settling_time(t, np.array([1.0, 0.5, 0.01, 0.2, 0.01]), 0.05) == 4.0
        assert settling_time(t, np.array([1.0, 1.0, 1.0, 1.0, 1.0]), 0.05) is None
        assert settling_time(t, np.zeros(5), 0.05) == 0.0

    def test_v_violations(self):
        V = np.array([10.0, 9.0, 9.000001, 8.0, 8.1])
        assert v_violations(V) == 1
        assert v_violations(V, slack_rel=1e-2) == 0


class TestDeterminism:
    def test_bit_identical(self, nominal):
        scn = nominal.with_(t_final=2.0)
        a, b = run(scn), run(scn)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.tau, b.tau)

    def test_dt_halving(self, nominal):
        scn = nominal.with_(controller_kind="ideal-known-gamma", dt=1e-3, t_final=10.0)
        a = run(scn)
        b = run(scn.with_(dt=5e-4, log_stride=200))
        assert np.array_equal(a.t, b.t)
        diff = np.abs(np.linalg.norm(a.x_e, axis=1) - np.linalg.norm(b.x_e, axis=1))
        assert diff.max() < 1e-6


class TestDivergence:
    def test_diverged_log_attached(self, nominal):
        ctrl = replace(nominal.controller, Q=nominal.controller.Q * 0.0)
        scn = nominal.with_(controller_kind="open-loop", dt=1e-3, t_final=1.0, xdot0=[2e9, 0.0, 0.0], controller=ctrl)
        with pytest.raises(DivergenceError) as info:
            run(scn)
        err = info.value
        assert err.log.status == "diverged"
        assert err.t <= 1.0
        assert abs(err.value) > kn.DIVERGENCE_LIMIT or not np.isfinite(err.value)


class TestRunMany:
    def test_matches_sequential(self, nominal):
        scns = [nominal.with_(controller_kind="ideal", dt=1e-3, t_final=t) for t in (1.0, 2.0)]
        par = run_many(scns, max_workers=2)
        seq = [metrics(run(s)) | {"status": "ok"} for s in scns]
        assert par == seq

    def test_single_runs_inline(self, nominal):
        t0 = time.perf_counter()
        (m,) = run_many([nominal.with_(controller_kind="ideal", dt=1e-3, t_final=1.0)])
        assert m["status"] == "ok"
        assert time.perf_counter() - t0 < 30.0
