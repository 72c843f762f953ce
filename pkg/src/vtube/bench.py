"""Controller timing on random swarms, plus a neighbour-search cross-check.

Each benched world uses a 100 m tube of width 200 m. UAV 1 starts at
the start point; the others are scattered at random over the tube and
its extension with velocity (1, 0) and pairwise filtered separation
above ``2 r_s``. Per step we time the command computation (neighbour
search included) and compare the brute-force and spatial-hash neighbour
sets.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .controller import ControlParams
from .dynamics import UavParams, UavState
from .geometry import TubeSpec
from .simulation import SimSettings, World, neighbor_pairs

L_GAIN = 5.0
VM = 5.0
V0 = (1.0, 0.0)


@dataclass
class BenchRow:
    m: int
    r_s: float
    steps: int
    mean_ms: float
    max_ms: float
    neighbor_sets_equal: bool
    mean_pairs: float

    def as_dict(self) -> dict:
        return asdict(self)


def bench_params(r_s: float) -> ControlParams:
    """Radii scaled with ``r_s`` (``r_a = 1.5 r_s``, ``r_d = 4 r_s``; 5 / 7.5 / 20 at r_s = 5)."""
    return ControlParams(r_s=r_s, r_a=1.5 * r_s, r_d=4.0 * r_s)


def random_world(m: int, r_s: float, seed: int = 0, max_tries: int = 200000) -> World:
    tube = TubeSpec(np.array([0.0, 0.0]), np.array([100.0, 0.0]), 100.0)
    params = bench_params(r_s)
    rng = np.random.default_rng(seed)
    lead = np.array(V0) / L_GAIN
    pts = [np.zeros(2)]
    tries = 0
    while len(pts) < m:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not place {m} UAVs {2 * r_s} m apart")
        q = rng.uniform((-100.0, -100.0), (100.0, 100.0))
        if all(math.dist(q, other) > 2.0 * r_s for other in pts):
            pts.append(q)
    uavs = []
    for k, q in enumerate(pts, start=1):
        up = UavParams(k, L_GAIN, VM)
        uavs.append((up, UavState.from_pv(q - lead, V0, L_GAIN)))
    return World(uavs, tube, params, sim=SimSettings(t_max=1e9))


def bench_world(world: World, steps: int) -> BenchRow:
    times, pairs = [], []
    equal = True
    prm = world.params
    r_m = prm.r_s + prm.r_a
    for _ in range(steps):
        if world.done:
            break
        idx = world.live_indices()
        p, xi = world.p[idx], world.xi[idx]
        a = neighbor_pairs(p, xi, prm.r_d, r_m, "brute")
        b = neighbor_pairs(p, xi, prm.r_d, r_m, "hash")
        equal &= bool(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]))
        pairs.append(len(a[0]))
        world.step()
        times.append(world.trace.controller_time[-1])
    t = np.array(times) * 1e3
    return BenchRow(len(world.ids), world.params.r_s, len(t), float(t.mean()), float(t.max()),
                    equal, float(np.mean(pairs)))


def growth_exponent(rows) -> float:
    """Least-squares slope of log(mean time) against log(M)."""
    ms = np.log([r.m for r in rows])
    ts = np.log([r.mean_ms for r in rows])
    if len(set(ms)) < 2:
        return math.nan
    return float(np.polyfit(ms, ts, 1)[0])


def run_bench(m_values=(10, 40, 160), rs_values=(2.5, 5.0, 10.0), steps: int = 200,
              seed: int = 0, m_for_rs: int = 40) -> dict:
    start = time.perf_counter()
    by_m = [bench_world(random_world(m, 5.0, seed), steps) for m in m_values]
    by_rs = [bench_world(random_world(m_for_rs, r, seed), steps) for r in rs_values]
    return {
        "by_m": [r.as_dict() for r in by_m],
        "by_rs": [r.as_dict() for r in by_rs],
        "growth_exponent": growth_exponent(by_m),
        "neighbor_sets_equal": all(r.neighbor_sets_equal for r in by_m + by_rs),
        "wall_time": time.perf_counter() - start,
    }


def format_report(report: dict) -> str:
    head = f"{'M':>5} {'r_s':>6} {'steps':>6} {'mean ms':>9} {'max ms':>9} {'pairs':>7} {'hash==brute':>12}"
    lines = [head]
    for key in ("by_m", "by_rs"):
        for r in report[key]:
            lines.append(f"{r['m']:>5} {r['r_s']:>6g} {r['steps']:>6} {r['mean_ms']:>9.4f} "
                         f"{r['max_ms']:>9.4f} {r['mean_pairs']:>7.1f} {str(r['neighbor_sets_equal']):>12}")
        lines.append("")
    lines.append(f"growth exponent in M: {report['growth_exponent']:.3f}")
    return "\n".join(lines)
