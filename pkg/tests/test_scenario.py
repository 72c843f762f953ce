import copy
import json

import numpy as np
import pytest

from vtube.geometry import Region
from vtube.scenario import (
    SCHEMA_ID, ScenarioError, build_world, find_scenario, generate_uavs, load_scenario,
    paper_40uav_layout, read_document, resolve, shipped, validate,
)


def minimal(**extra):
    doc = {
        "schema": SCHEMA_ID,
        "tube": {"p_t1": [0, 0], "p_t2": [500, 0], "r_t": 150},
        "uavs": [{"id": 1, "p0": [-100, 0], "l": 5, "vm": 5}],
    }
    doc.update(extra)
    return doc


def test_shipped_scenarios_present():
    assert {"paper_40uav", "two_uav_headon", "crowded_entrance", "overtaking",
            "basic_8uav"} <= set(shipped())
    for name in shipped():
        validate(read_document(name))


def test_paper_scenario_parameters():
    w = load_scenario("paper_40uav")
    assert len(w.ids) == 40 and list(w.ids) == list(range(1, 41))
    assert w.limits.r_v == 3.0
    assert w.params.r_d == 80.0 > w.params.r_s + w.params.r_a + 2 * w.limits.r_v == 56.0
    assert (w.params.r_s, w.params.r_a, w.params.k1, w.params.k2, w.params.k3) == (20, 30, 1, 1, 1)
    assert w.params.eps_m == w.params.eps_t == w.params.eps_s == 1e-6
    np.testing.assert_array_equal(w.l, 5.0)
    np.testing.assert_array_equal(w.vm, 5.0 + np.arange(1, 41) / 4.0)
    np.testing.assert_array_equal(w.p[:3], [[0, 149.9], [-500, -0.1], [-500, 0.1]])
    np.testing.assert_array_equal(w.v, 0.0)
    assert (w.tube.p_t1.tolist(), w.tube.p_t2.tolist(), w.tube.r_t) == ([0, 0], [500, 0], 150)
    # only the seeded pair starts in conflict
    assert len(w.warnings) == 1
    doc = read_document("paper_40uav")
    assert doc["uavs"] == paper_40uav_layout()


def test_crowded_scenario_all_ready():
    w = load_scenario("crowded_entrance")
    assert len(w.ids) == 12 and not w.warnings
    assert set(w.region.tolist()) <= {Region.LEFT_READY, Region.RIGHT_READY}


def test_r_d_too_small_is_hard_error():
    doc = read_document("paper_40uav")
    doc["params"]["r_d"] = 50.0
    with pytest.raises(ScenarioError, match="params.r_d"):
        build_world(resolve(doc))


def test_schema_errors_carry_paths():
    doc = minimal()
    doc["uavs"][0]["vm"] = -1
    with pytest.raises(ScenarioError, match=r"uavs\[0\]"):
        resolve(doc)
    doc = minimal()
    doc["tube"]["r_t"] = "wide"
    with pytest.raises(ScenarioError, match="tube.r_t"):
        resolve(doc)
    with pytest.raises(ScenarioError):
        resolve(minimal(extra_key=1))
    with pytest.raises(ScenarioError):
        resolve(minimal(schema="vtube-scenario/0"))
    with pytest.raises(ScenarioError):
        resolve(minimal(), {"bogus": 1})


def test_resolve_fills_defaults():
    r = resolve(minimal())
    assert r["params"]["r_b"] == r["params"]["r_a"] == 30.0
    assert r["sim"] == {"dt": 0.01, "t_max": 400.0, "integrator": "exact", "record_every": 10}
    assert r["uavs"][0]["v0"] == [0.0, 0.0]
    assert resolve(r) == r
    o = resolve(minimal(), {"dt": 0.005, "t_max": None})
    assert o["sim"]["dt"] == 0.005 and o["sim"]["t_max"] == 400.0


def test_generator_explicit_roundtrip():
    gen = {"generator": {"count": 2, "placement": "explicit", "positions": [[-100, 0], [-200, 5]],
                         "l": 5, "vm": {"base": 5, "step": 0.25}}}
    r = resolve(minimal(uavs=gen))
    w1 = build_world(r)
    w2 = build_world(resolve(json.loads(json.dumps(r))))
    np.testing.assert_array_equal(w1.p, w2.p)
    np.testing.assert_array_equal(w1.vm, [5.25, 5.5])
    assert [u["id"] for u in r["uavs"]] == [1, 2]
    bad = copy.deepcopy(gen)
    bad["generator"]["count"] = 3
    with pytest.raises(ScenarioError, match="positions"):
        resolve(minimal(uavs=bad))


def test_grid_and_ring_generators():
    grid = generate_uavs({"count": 5, "placement": "grid", "origin": [0, 0], "spacing": [10, 20],
                          "columns": 2, "l": 5, "vm": 6, "first_id": 10})
    assert [u["p0"] for u in grid] == [[0, 0], [10, 0], [0, 20], [10, 20], [0, 40]]
    assert [u["id"] for u in grid] == [10, 11, 12, 13, 14]
    ring = generate_uavs({"count": 4, "placement": "ring", "center": [0, 0], "radius": 100,
                          "l": 5, "vm": 6})
    np.testing.assert_allclose([u["p0"] for u in ring], [[100, 0], [0, 100], [-100, 0], [0, -100]],
                               atol=1e-12)
    a = generate_uavs({"count": 3, "placement": "grid", "origin": [0, 0], "spacing": [50, 50],
                       "columns": 3, "l": 5, "vm": 6, "jitter": 2.0, "seed": 7})
    b = generate_uavs({"count": 3, "placement": "grid", "origin": [0, 0], "spacing": [50, 50],
                       "columns": 3, "l": 5, "vm": 6, "jitter": 2.0, "seed": 7})
    assert a == b and a[0]["p0"] != [0.0, 0.0]
    with pytest.raises(ScenarioError, match="origin"):
        generate_uavs({"count": 1, "placement": "grid", "l": 5, "vm": 6})


def test_find_scenario(tmp_path):
    assert find_scenario("overtaking").name == "overtaking.json"
    assert find_scenario("overtaking.json").name == "overtaking.json"
    p = tmp_path / "mine.json"
    p.write_text(json.dumps(minimal()))
    assert find_scenario(p) == p
    with pytest.raises(FileNotFoundError):
        find_scenario("does_not_exist")


def test_manifest_document_is_accepted(tmp_path):
    r = resolve(minimal())
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps({"schema": "vtube-manifest/1", "scenario": r}))
    assert read_document(p) == r
