"""Scenario files: schema validation, UAV generators and world construction.

A scenario is resolved into a fully explicit document (every UAV listed,
every parameter filled in) before a :class:`World` is built from it;
that resolved form is what run manifests store, so a manifest rebuilds
the identical world.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .controller import ControlParams
from .dynamics import UavParams, UavState
from .geometry import TubeSpec
from .simulation import AssumptionViolation, SimSettings, World

SCHEMA_ID = "vtube-scenario/1"
MANIFEST_ID = "vtube-manifest/1"
SCENARIO_DIR = Path(__file__).parent / "scenarios"
SIM_KEYS = ("dt", "t_max", "integrator", "record_every")


class ScenarioError(ValueError):
    pass


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("vtube").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def _path(err) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _specific(err):
    # for oneOf/anyOf failures report the deepest error of any branch; the
    # branch the document was meant for gets furthest before failing
    while err.context:
        err = max(err.context, key=lambda e: len(e.absolute_path))
    return err


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = [_specific(e) for e in validator.iter_errors(doc)]
    errors.sort(key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = [f"{_path(e)}: {e.message}" for e in errors]
        raise ScenarioError("invalid scenario:\n  " + "\n  ".join(lines))


def shipped() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))


def find_scenario(name: str | Path) -> Path:
    """A path as given, else a shipped scenario by name (with or without ``.json``)."""
    path = Path(name)
    if path.is_file():
        return path
    candidate = SCENARIO_DIR / (path.stem + ".json")
    if candidate.is_file():
        return candidate
    raise FileNotFoundError(f"no scenario file {str(name)!r} (shipped: {', '.join(shipped())})")


# ------------------------------------------------------------------ generators


def _speed(spec, uid: int) -> float:
    if isinstance(spec, dict):
        return float(spec["base"] + spec["step"] * uid)
    return float(spec)


def generate_uavs(gen: dict) -> list[dict]:
    """Expand a generator block into explicit UAV entries."""
    count = gen["count"]
    first = gen.get("first_id", 1)
    rng = np.random.default_rng(gen.get("seed", 0))
    placement = gen["placement"]
    if placement == "explicit":
        pts = [tuple(map(float, p)) for p in gen.get("positions", [])]
        if len(pts) != count:
            raise ScenarioError(f"uavs.generator.positions: expected {count} entries, got {len(pts)}")
    elif placement == "grid":
        try:
            ox, oy = gen["origin"]
            dx, dy = gen["spacing"]
            cols = gen["columns"]
        except KeyError as exc:
            raise ScenarioError(f"uavs.generator: grid placement needs {exc.args[0]!r}") from None
        pts = [(ox + (k % cols) * dx, oy + (k // cols) * dy) for k in range(count)]
    else:
        try:
            cx, cy = gen["center"]
            radius = gen["radius"]
        except KeyError as exc:
            raise ScenarioError(f"uavs.generator: ring placement needs {exc.args[0]!r}") from None
        phase = gen.get("phase", 0.0)
        angles = [phase + 2.0 * math.pi * k / max(count, 1) for k in range(count)]
        pts = [(cx + radius * math.cos(a), cy + radius * math.sin(a)) for a in angles]
    jitter = gen.get("jitter", 0.0)
    if jitter:
        offs = rng.uniform(-jitter, jitter, size=(count, 2))
        pts = [(x + float(a), y + float(b)) for (x, y), (a, b) in zip(pts, offs)]
    return [
        {"id": first + k, "p0": [float(x), float(y)], "v0": [0.0, 0.0], "l": float(gen["l"]),
         "vm": _speed(gen["vm"], first + k)}
        for k, (x, y) in enumerate(pts)
    ]


# ------------------------------------------------------------------- resolving


def resolve(doc: dict, overrides: dict | None = None) -> dict:
    """Validated, fully explicit copy of ``doc`` with ``overrides`` applied to ``sim``."""
    validate(doc)
    out = json.loads(json.dumps(doc))
    tube = out["tube"]
    tube.setdefault("lane_count", None)
    defaults = ControlParams().as_dict()
    params = {**defaults, **out.get("params", {})}
    if params.get("r_b") is None:
        params["r_b"] = params["r_a"]
    out["params"] = params
    uavs = out["uavs"]
    if isinstance(uavs, dict):
        uavs = generate_uavs(uavs["generator"])
    for u in uavs:
        u.setdefault("v0", [0.0, 0.0])
    out["uavs"] = uavs
    sim = {k: v for k, v in asdict(SimSettings()).items() if k in SIM_KEYS}
    sim.update(out.get("sim", {}))
    for k, v in (overrides or {}).items():
        if k not in SIM_KEYS:
            raise ScenarioError(f"unknown override {k!r}")
        if v is not None:
            sim[k] = v
    out["sim"] = sim
    validate(out)
    return out


def build_world(resolved: dict, threads: int = 1, despawn: bool = True,
                neighbor_search: str = "auto") -> World:
    t = resolved["tube"]
    prm = resolved["params"]
    try:
        tube = TubeSpec(np.array(t["p_t1"], float), np.array(t["p_t2"], float), float(t["r_t"]),
                        lane_count=t.get("lane_count"), r_a=prm["r_a"])
        params = ControlParams(**{f.name: prm[f.name] for f in fields(ControlParams)})
        uavs = []
        for u in resolved["uavs"]:
            up = UavParams(u["id"], u["l"], u["vm"])
            uavs.append((up, UavState.from_pv(u["p0"], u["v0"], up.l)))
        sim = SimSettings(**resolved["sim"], threads=threads, despawn=despawn,
                          neighbor_search=neighbor_search)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    try:
        return World(uavs, tube, params, sim=sim, config=resolved)
    except AssumptionViolation as exc:
        raise ScenarioError(f"params.r_d: {exc}") from exc


def read_document(path: str | Path) -> dict:
    """Scenario document from a scenario or manifest file (name lookup included)."""
    with open(find_scenario(path), encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and doc.get("schema") == MANIFEST_ID:
        return doc["scenario"]
    return doc


def load_scenario(path: str | Path, overrides: dict | None = None, **world_kw) -> World:
    return build_world(resolve(read_document(path), overrides), **world_kw)


# ------------------------------------------------------------ paper placement


def _entry_path(x: float, y: float, length: float, r_t: float, r_s: float, r_b: float) -> float:
    """Rough route length to the finishing line through the entry sequence."""
    if abs(y) <= r_t:
        return length - x
    down = abs(y) - (r_t - r_s)
    if x > 0:
        return (x + r_b) + down + (length + r_b)
    return down + (length - x)


def paper_40uav_layout() -> list[dict]:
    """UAV list of the 40-UAV scenario.

    UAVs 1-3 are the seeded violations (one grazing the tube edge, two
    0.2 m apart in the extension). The other 37 sit on a fixed grid over
    the standby, ready and extension areas; the slowest speeds go to the
    longest routes so the arrivals are spread out rather than bunched.
    """
    pos = []
    for side in (1.0, -1.0):
        pos += [(x, side * y) for x in (100.0, 200.0, 300.0, 400.0, 500.0) for y in (250.0, 350.0)]
        pos += [(x, side * y) for x in (-100.0, -200.0, -300.0) for y in (250.0, 350.0)]
    pos += [(-100.0, -60.0), (-100.0, 60.0), (-200.0, 0.0), (-300.0, -60.0), (-300.0, 60.0)]
    pos.sort(key=lambda q: -_entry_path(q[0], q[1], 500.0, 150.0, 20.0, 30.0))
    seeded = [(0.0, 149.9), (-500.0, -0.1), (-500.0, 0.1)]
    return [
        {"id": i, "p0": [x, y], "v0": [0.0, 0.0], "l": 5.0, "vm": 5.0 + i / 4.0}
        for i, (x, y) in enumerate(seeded + pos, start=1)
    ]
