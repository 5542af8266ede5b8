import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracheat import serialize
from fracheat.geometry import unit_square
from fracheat.halfspace import default_q_grid, estimate_C2, f_profile
from fracheat.kernels import StableParams
from fracheat.sampler import McEstimate, PathConfig
from fracheat.trace import trace_curve

P21 = StableParams(2, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_csv_floats_round_trip(values):
    rows = [{"x": v, "i": i} for i, v in enumerate(values)]
    back = serialize.read_csv_text(serialize.csv_text(rows, ["x", "i"]))
    assert [r["x"] for r in back] == values
    assert [r["i"] for r in back] == list(range(len(values)))


def test_json_infinity_is_reversible():
    text = serialize.json_text({"a": math.inf, "b": np.float64(-math.inf), "c": np.arange(2)})
    d = json.loads(text)
    assert d == {"a": "inf", "b": "-inf", "c": [0, 1]}
    assert float(d["a"]) == math.inf


def test_estimate_round_trip():
    e = McEstimate(0.25, 1e-3, 100, 2, 1e-4)
    assert serialize.estimate_from_dict(json.loads(serialize.json_text(e))) == e


@pytest.fixture(scope="module")
def profile():
    return f_profile(P21, default_q_grid(1e-2, 5.0, 12), PathConfig(dt=1e-2, n_paths=1000, seed=1, refinement_levels=1))


def test_profile_round_trip(profile):
    back = serialize.profile_from_dict(json.loads(serialize.json_text(serialize.profile_to_dict(profile))))
    np.testing.assert_array_equal(back.q, profile.q)
    np.testing.assert_array_equal(back.mean, profile.mean)
    np.testing.assert_array_equal(back.stderr, profile.stderr)
    np.testing.assert_array_equal(back.extras["cumulative_mean"], profile.extras["cumulative_mean"])
    assert back.extras["path_integral"] == profile.extras["path_integral"]
    assert back.params == profile.params and back.dt == profile.dt


def test_c2_round_trip(profile):
    res = estimate_C2(P21, 1.0, PathConfig(dt=1e-2, n_paths=1000), profile=profile)
    back = serialize.c2_from_dict(json.loads(serialize.json_text(res)))
    assert back == res


def test_trace_round_trip():
    curve = trace_curve(P21, unit_square(), [0.01, 0.005], PathConfig(n_paths=600, seed=2), n_steps=20)
    back = serialize.trace_curve_from_dict(json.loads(serialize.json_text(serialize.trace_curve_to_dict(curve))))
    for name in ("t", "z_mean", "z_stderr", "n_paths"):
        np.testing.assert_array_equal(getattr(back, name), getattr(curve, name))
    csv_back = serialize.trace_curve_from_csv(
        serialize.csv_text(curve.rows(), serialize.TRACE_COLUMNS), P21, curve.volume, curve.boundary_measure
    )
    np.testing.assert_array_equal(csv_back.z_mean, curve.z_mean)
    np.testing.assert_array_equal(csv_back.rescaled, curve.rescaled)


def test_manifest_fields():
    man = serialize.manifest("shell", {"domain": "square"}, ["a.csv"], "ok", {"x": np.float64(1.5)})
    assert man["schema_version"] == serialize.MANIFEST_SCHEMA
    assert man["config"] == {"domain": "square"} and man["results"] == {"x": 1.5}
    assert {"library_version", "timestamp", "outputs", "status", "command"} <= set(man)
