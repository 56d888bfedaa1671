import copy
import json
import math

import numpy as np
import pytest

from vesselkeep.config import (
    ConfigError,
    bundled_text,
    load,
    normalize,
    parse,
    scenario_from_dict,
    scenario_to_dict,
    serialize,
)

from conftest import PRINTED_C0, PRINTED_C2, PRINTED_D, PRINTED_M, PRINTED_Q, PRINTED_W0


@pytest.fixture
def doc():
    return json.loads(bundled_text())


def test_bundled_matches_printed_values(nominal):
    assert np.array_equal(nominal.vessel.M, PRINTED_M)
    assert np.array_equal(nominal.vessel.D, PRINTED_D)
    assert np.array_equal(nominal.exo.q, PRINTED_Q)
    assert np.allclose(nominal.exo.w0, PRINTED_W0, atol=5e-5)
    obs = nominal.controller.observer
    assert (obs.kappa, obs.L) == (100.0, 100.0)
    assert np.array_equal(obs.C0, PRINTED_C0) and np.array_equal(obs.C1, PRINTED_C0)
    assert np.array_equal(obs.C2, PRINTED_C2)
    assert np.array_equal(nominal.x_r, [2.0, 2.0, 0.0])
    assert np.array_equal(nominal.x0, np.zeros(3)) and np.array_equal(nominal.xdot0, np.zeros(3))
    assert nominal.dt == 1e-4 and nominal.t_final == 500.0


def test_round_trip_byte_identical():
    text = bundled_text()
    assert serialize(parse(text)) == text


def test_round_trip_modulo_key_order(doc):
    shuffled = json.dumps(dict(reversed(list(doc.items()))))
    assert serialize(parse(shuffled)) == bundled_text()


def test_normalize_sorted_and_terminated(doc):
    out = normalize(doc)
    assert out.endswith("}\n")
    assert list(json.loads(out)) == sorted(doc)


def test_defaults_applied(doc):
    for k in ("t_final", "dt", "controller_kind", "log_stride", "name", "observer_tau_feed", "oracle_tau0"):
        del doc[k]
    scn = scenario_from_dict(doc)
    assert scn.t_final == 500.0 and scn.dt == 1e-4
    assert scn.controller_kind == "adaptive-observer"


@pytest.mark.parametrize("where", [(), ("vessel",), ("controller", "observer")])
def test_unknown_key_rejected(doc, where):
    node = doc
    for k in where:
        node = node[k]
    node["colour"] = 1
    with pytest.raises(ConfigError, match="colour: unknown key"):
        scenario_from_dict(doc)


@pytest.mark.parametrize("field", ["x_r", "vessel", "exo"])
def test_missing_required(doc, field):
    del doc[field]
    with pytest.raises(ConfigError, match=f"{field}: missing required field"):
        scenario_from_dict(doc)


def test_missing_nested(doc):
    del doc["vessel"]["M"]
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(doc)
    assert info.value.path == "vessel.M"


def test_negative_frequency_named(doc):
    doc["exo"]["q"][1] = -1.0
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(doc)
    assert info.value.path == "exo.q[1]"
    assert "positive" in str(info.value)


@pytest.mark.parametrize("path,value", [
    (("vessel", "M"), [[1.0, 2.0], [3.0, 4.0]]),
    (("vessel", "M"), [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
    (("controller", "observer", "kappa"), 0.0),
    (("controller", "observer", "kappa"), "fast"),
    (("dt",), -1e-4),
    (("controller_kind",), "pid"),
    (("x0",), [0.0, float("nan"), 0.0]),
])
def test_invalid_values(doc, path, value):
    node = doc
    for k in path[:-1]:
        node = node[k]
    node[path[-1]] = value
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(copy.deepcopy(doc))
    assert info.value.path.startswith(".".join(path))


def test_syntax_error_position():
    text = bundled_text().replace('"dt": 0.0001', '"dt": 0.0001,,', 1)
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        parse(text, source="broken.json")


def test_source_in_message(tmp_path, doc):
    doc["exo"]["q"][2] = 0.0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="bad.json: exo.q\\[2\\]"):
        load(p)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "absent.json")


def test_null_limit_disables_saturation(doc):
    doc["controller"]["observer"]["L"] = None
    scn = scenario_from_dict(doc)
    assert math.isinf(scn.controller.observer.L)
    assert scenario_to_dict(scn)["controller"]["observer"]["L"] is None


def test_unstable_polynomial_tagged_as_gate(doc):
    doc["controller"]["internal_model"]["char_polys"][0] = [-1.0, 0.0, 0.0]
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(doc)
    assert info.value.gate == "internal_model"


def test_nonsymmetric_inertia_opt_in(doc):
    doc["vessel"]["M"][0][1] = 0.1
    with pytest.raises(ConfigError):
        scenario_from_dict(copy.deepcopy(doc))
    doc["vessel"]["allow_nonsymmetric_M"] = True
    with pytest.warns(UserWarning, match="not symmetric"):
        assert scenario_from_dict(doc).vessel.M[0, 1] == 0.1
