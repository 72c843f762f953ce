"""World state, lock-step simulation loop, events and run metrics.

One step runs five phases: arrival scan (arrived UAVs are despawned),
snapshot, command computation from the snapshot, integration, and
event/metric observation of the new state. Commands may be computed by
several threads over contiguous UAV blocks; the arithmetic per UAV does
not depend on the split, so runs are bit-identical for any thread count.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import controller, dynamics, potentials
from .controller import ControlParams, Neighbor, TubeBank
from .dynamics import SwarmLimits, UavParams, UavState
from .geometry import BAND_REGIONS, Region, TubeSpec, arrival_score, classify_regions

log = logging.getLogger(__name__)

HASH_THRESHOLD = 64  # use the spatial hash above this many live UAVs
PROP1_TOL = 1e-9
STALL_FRACTION = 1e-3


class AssumptionViolation(ValueError):
    pass


class SimulationAborted(RuntimeError):
    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


EVENT_KINDS = ("ConflictStart", "ConflictEnd", "TubeBreachStart", "TubeBreachEnd",
               "Arrival", "RegionChange")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    subject_ids: tuple
    data: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"t": self.t, "kind": self.kind, "subject_ids": list(self.subject_ids), **self.data}


@dataclass(frozen=True)
class SimSettings:
    dt: float = 0.01
    t_max: float = 400.0
    integrator: str = "exact"
    record_every: int = 10
    threads: int = 1
    despawn: bool = True
    neighbor_search: str = "auto"  # auto | brute | hash

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.integrator not in ("exact", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.record_every < 1 or self.threads < 1:
            raise ValueError("record_every and threads must be >= 1")
        if self.neighbor_search not in ("auto", "brute", "hash"):
            raise ValueError(f"unknown neighbor_search {self.neighbor_search!r}")


# ------------------------------------------------------------ neighbour search


def _norms(d):
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


_TRIU: dict = {}


def triu(n: int):
    """Cached ``np.triu_indices(n, 1)``."""
    if n not in _TRIU:
        iu, ju = np.triu_indices(n, k=1)
        iu.setflags(write=False)
        ju.setflags(write=False)
        _TRIU[n] = (iu, ju)
    return _TRIU[n]


# lookup tables indexed by region code
IN_BAND = np.zeros(len(Region), dtype=bool)
IN_BAND[list(BAND_REGIONS)] = True
MAIN_TUBE = np.zeros(len(Region), dtype=bool)
MAIN_TUBE[[Region.TUBE_INTERIOR, Region.TUBE_EXTENSION]] = True


def _candidates_brute(n):
    return triu(n)


def _candidates_hash(p, cell):
    """Pairs (i < j) sharing or touching a grid cell of side ``cell``."""
    keys = np.floor(p / cell).astype(np.int64)
    buckets: dict = {}
    for k, (cx, cy) in enumerate(keys.tolist()):
        buckets.setdefault((cx, cy), []).append(k)
    out_i, out_j = [], []
    half = ((0, 0), (1, -1), (1, 0), (1, 1), (0, 1))
    for (cx, cy), members in buckets.items():
        for ox, oy in half:
            other = buckets.get((cx + ox, cy + oy))
            if other is None:
                continue
            for a in members:
                for b in other:
                    if (ox, oy) == (0, 0) and b <= a:
                        continue
                    out_i.append(min(a, b))
                    out_j.append(max(a, b))
    return np.array(out_i, dtype=np.int64), np.array(out_j, dtype=np.int64)


def neighbor_pairs(p, xi, r_d: float, r_m: float, method: str = "brute"):
    """Unordered neighbour pairs (i < j), sorted, among rows of ``p``/``xi``.

    A pair qualifies when ``|p_i - p_j| <= r_d`` (detection) and
    ``|xi_i - xi_j| <= r_m`` (avoidance, ``r_m = r_s + r_a``).
    """
    p = np.asarray(p, dtype=float).reshape(-1, 2)
    xi = np.asarray(xi, dtype=float).reshape(-1, 2)
    if method == "hash":
        ci, cj = _candidates_hash(p, r_d)
    elif method == "brute":
        ci, cj = _candidates_brute(len(p))
    else:
        raise ValueError(f"unknown neighbour search {method!r}")
    keep = (_norms(p[ci] - p[cj]) <= r_d) & (_norms(xi[ci] - xi[cj]) <= r_m)
    ci, cj = ci[keep], cj[keep]
    order = np.lexsort((cj, ci))
    return ci[order], cj[order]


# ---------------------------------------------------------------------- world


@dataclass
class Trace:
    t: list = field(default_factory=list)
    min_p_distance: list = field(default_factory=list)
    min_xi_distance: list = field(default_factory=list)
    tube_margin_p: list = field(default_factory=list)
    tube_margin_xi: list = field(default_factory=list)
    total_v: list = field(default_factory=list)
    live: list = field(default_factory=list)
    controller_time: list = field(default_factory=list)

    def arrays(self) -> dict:
        return {k: np.asarray(v, dtype=float) for k, v in self.__dict__.items()}


@dataclass
class Counters:
    max_speed: float = 0.0
    max_speed_excess: float = -math.inf
    max_kinematic_residual: float = 0.0
    prop1_violations: int = 0
    prop2_violations: int = 0
    safety_violations: int = 0
    max_stall: float = 0.0


class World:
    """Swarm state plus the bookkeeping needed for events and metrics.

    State is held in arrays indexed by UAV slot (construction order);
    :attr:`uavs` exposes it as ``(UavParams, UavState)`` pairs.
    """

    def __init__(self, uavs, tube: TubeSpec, params: ControlParams,
                 sim: SimSettings | None = None, config: dict | None = None):
        uavs = list(uavs)
        self.tube = tube
        self.params = params
        self.sim = sim or SimSettings()
        self.config = config
        self.aux = controller.build_aux_tubes(tube, params.r_sr, params.r_rt, params.r_b)
        self.bank = TubeBank.build(tube, self.aux)
        self.uav_params = [u for u, _ in uavs]
        ids = [u.id for u in self.uav_params]
        if len(set(ids)) != len(ids):
            raise ValueError("UAV ids must be unique")
        self.ids = np.array(ids, dtype=np.int64)
        self.l = np.array([u.l for u in self.uav_params], dtype=float)
        self.vm = np.array([u.vm for u in self.uav_params], dtype=float)
        self.p = np.array([s.p for _, s in uavs], dtype=float).reshape(-1, 2)
        self.v = np.array([s.v for _, s in uavs], dtype=float).reshape(-1, 2)
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v))):
            raise ValueError("initial states must be finite")
        self.limits = SwarmLimits.from_params(self.uav_params)
        need = params.r_s + params.r_a + 2.0 * self.limits.r_v
        if not params.r_d > need:
            raise AssumptionViolation(
                f"detection radius r_d={params.r_d} must exceed r_s + r_a + 2 r_v = {need:g}"
            )
        m = len(self.ids)
        self.n = 0
        self.t = 0.0
        self.live = np.ones(m, dtype=bool)
        self.arrived = np.zeros(m, dtype=bool)
        self.arrival_time = np.full(m, np.nan)
        self.region = classify_regions(self.xi, tube) if m else np.zeros(0, dtype=np.int64)
        self.speed_bounded = np.linalg.norm(self.v, axis=1) <= self.vm if m else np.zeros(0, bool)
        self.warnings: list[str] = []
        self.events: list[Event] = []
        self.trace = Trace()
        self.counters = Counters()
        self._open_conflicts: set = set()
        self._open_breaches: set = set()
        self._stall_since = np.full(m, np.nan)
        self._decay = dynamics.decay(self.l, self.sim.dt) if m else np.zeros(0)
        self._decay_dt = self.sim.dt
        self.rows: list = []
        self._check_initial_separation()
        self._observe(prev_region=None)

    # -- views -------------------------------------------------------------

    @property
    def xi(self) -> np.ndarray:
        return self.p + self.v / self.l[:, None]

    @property
    def uavs(self) -> list:
        xi = self.xi
        return [
            (u, UavState(self.p[k].copy(), self.v[k].copy(), xi[k].copy(),
                         bool(self.arrived[k]), Region(int(self.region[k]))))
            for k, u in enumerate(self.uav_params)
        ]

    @property
    def done(self) -> bool:
        return bool(np.all(self.arrived))

    def live_indices(self) -> np.ndarray:
        return np.flatnonzero(self.live)

    # -- construction checks ----------------------------------------------

    def _check_initial_separation(self):
        xi = self.xi
        iu, ju = np.triu_indices(len(xi), k=1)
        close = _norms(xi[iu] - xi[ju]) <= 2.0 * self.params.r_s
        for a, b in zip(iu[close], ju[close]):
            msg = (f"initial filtered positions of UAVs {self.ids[a]} and {self.ids[b]} "
                   f"are within 2 r_s; the run starts in conflict")
            self.warnings.append(msg)
            log.warning(msg)

    # -- neighbour queries ---------------------------------------------------

    def _search_method(self, n_live: int) -> str:
        if self.sim.neighbor_search != "auto":
            return self.sim.neighbor_search
        return "hash" if n_live > HASH_THRESHOLD else "brute"

    def pairs(self, idx=None, method=None):
        """Neighbour pairs as slot indices (i < j) among live UAVs."""
        idx = self.live_indices() if idx is None else idx
        xi = self.xi[idx]
        method = method or self._search_method(len(idx))
        a, b = neighbor_pairs(self.p[idx], xi, self.params.r_d,
                              self.params.r_s + self.params.r_a, method)
        return idx[a], idx[b]

    # -- stepping ------------------------------------------------------------

    def _arrival_scan(self, events):
        band = IN_BAND[self.region]
        hit = arrival_score(self.p, self.tube) >= -self.params.eps_0
        now = self.live & ~self.arrived & band & (hit | (self.region == Region.PAST_FINISH))
        for k in np.flatnonzero(now):
            uid = int(self.ids[k])
            self.arrived[k] = True
            self.arrival_time[k] = self.t
            events.append(Event(self.t, "Arrival", (uid,)))
            if self.sim.despawn:
                self.live[k] = False
                self._close_intervals(k, events)
        return np.flatnonzero(now)

    def _close_intervals(self, k, events):
        uid = int(self.ids[k])
        for pair in sorted(p for p in self._open_conflicts if uid in p):
            self._open_conflicts.discard(pair)
            events.append(Event(self.t, "ConflictEnd", pair, {"reason": "despawn"}))
        if uid in self._open_breaches:
            self._open_breaches.discard(uid)
            events.append(Event(self.t, "TubeBreachEnd", (uid,), {"reason": "despawn"}))

    def compute_commands(self, executor=None):
        """Commands for the live UAVs from the current (frozen) state."""
        idx = self.live_indices()
        xi = self.xi[idx]
        tube_idx = controller.TUBE_OF_REGION[self.region[idx]]
        if not self.sim.despawn:
            tube_idx = np.where(self.arrived[idx] | (tube_idx < 0), 0, tube_idx)
        start = time.perf_counter()
        a, b = neighbor_pairs(self.p[idx], xi, self.params.r_d,
                              self.params.r_s + self.params.r_a,
                              self._search_method(len(idx)))
        rows, cols = controller.directed_edges(a, b)
        terms = controller.batch_commands(xi, self.vm[idx], tube_idx, self.bank, self.params,
                                          rows, cols, executor=executor,
                                          chunks=self.sim.threads)
        elapsed = time.perf_counter() - start
        return idx, terms, elapsed

    def step(self, executor=None, record: bool = False) -> list[Event]:
        """Advance one step of ``sim.dt``; returns the events it produced.

        With ``record`` the pre-integration state of every live UAV (and
        its command) is appended to :attr:`rows`; UAVs arriving in this
        step always get a final row.
        """
        events: list[Event] = []
        arrived_now = self._arrival_scan(events)
        idx, terms, elapsed = self.compute_commands(executor)
        self.rows += _record_rows(self, idx, terms.command, arrived_now, everyone=record)
        dt = self.sim.dt
        if len(idx):
            p, v, vc = self.p[idx], self.v[idx], terms.command
            xi0 = p + v / self.l[idx, None]
            if self.sim.integrator == "exact":
                p1, v1 = dynamics.exact_update(p, v, vc, self.l[idx], self._decay[idx], dt)
            else:
                p1, v1 = dynamics.euler_update(p, v, vc, self.l[idx], dt)
            if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(v1))):
                raise SimulationAborted("non-finite state after integration", self._dump(idx, vc))
            self.p[idx], self.v[idx] = p1, v1
            xi1 = p1 + v1 / self.l[idx, None]
            scale = np.maximum(1.0, _norms(xi0))
            resid = _norms(xi1 - xi0 - vc * dt) / scale
            self.counters.max_kinematic_residual = max(
                self.counters.max_kinematic_residual, float(resid.max()))
        self.n += 1
        self.t = round(self.n * dt, 9)
        prev = self.region.copy()
        self.region = classify_regions(self.xi, self.tube) if len(self.ids) else self.region
        self._observe(prev_region=prev, events=events, controller_time=elapsed)
        self.events.extend(events)
        return events

    def finish(self, executor=None):
        """Close a timed-out run: last arrival scan plus a final row set."""
        events: list[Event] = []
        arrived_now = self._arrival_scan(events)
        self.events.extend(events)
        idx, terms, _ = self.compute_commands(executor)
        self.rows += _record_rows(self, idx, terms.command, arrived_now, everyone=True)

    def _dump(self, idx, vc) -> dict:
        return {
            "t": self.t, "ids": self.ids[idx].tolist(), "p": self.p[idx].tolist(),
            "v": self.v[idx].tolist(), "vc": np.asarray(vc).tolist(),
        }

    # -- observation -----------------------------------------------------------

    def _observe(self, prev_region, events=None, controller_time=math.nan):
        initial = events is None
        events = [] if initial else events
        prm, tube, t = self.params, self.tube, self.t
        idx = self.live_indices()
        p, v, xi = self.p[idx], self.v[idx], self.xi[idx]
        reg = self.region[idx]
        ids = self.ids[idx]

        # pairwise quantities over all live pairs
        iu, ju = triu(len(idx))
        dp = _norms(p[iu] - p[ju])
        dxi = _norms(xi[iu] - xi[ju])
        min_p = float(dp.min()) if len(dp) else math.inf
        min_xi = float(dxi.min()) if len(dxi) else math.inf
        slack = dp - (dxi - 2.0 * self.limits.r_v) + PROP1_TOL
        self.counters.prop1_violations += int(np.count_nonzero(slack < 0))
        gated = dxi <= prm.r_s + prm.r_a
        self.counters.prop2_violations += int(np.count_nonzero(gated & (dp > prm.r_d)))

        # conflicts on filtered distance
        in_conflict = dxi <= 2.0 * prm.r_s
        where = {(int(ids[iu[q]]), int(ids[ju[q]])): q for q in np.flatnonzero(in_conflict)}
        current = set(where)
        for pair in sorted(current - self._open_conflicts):
            k = where[pair]
            if not initial:
                self.counters.safety_violations += 1
            events.append(Event(t, "ConflictStart", pair, {
                "xi_distance": float(dxi[k]), "p_distance": float(dp[k]), "seeded": initial}))
        for pair in sorted(self._open_conflicts - current):
            events.append(Event(t, "ConflictEnd", pair))
        self._open_conflicts = current

        # tube-edge breaches while governed by the main tube
        rel_xi = xi - tube.p_t2
        nt_xi = np.abs(rel_xi @ tube.normal)
        band = MAIN_TUBE[reg]
        breach = band & (nt_xi >= tube.r_t - prm.r_s)
        now_b = {int(u) for u in ids[breach]}
        for uid in sorted(now_b - self._open_breaches):
            before = None if prev_region is None else int(prev_region[self.ids == uid][0])
            if initial:
                cause = "seeded"
            elif before in (Region.LEFT_READY, Region.RIGHT_READY):
                cause = "entry"
            else:
                cause = "violation"
                self.counters.safety_violations += 1
            k = int(np.flatnonzero(ids == uid)[0])
            events.append(Event(t, "TubeBreachStart", (uid,), {
                "xi_offset": float(nt_xi[k]), "cause": cause}))
        for uid in sorted(self._open_breaches - now_b):
            events.append(Event(t, "TubeBreachEnd", (uid,)))
        self._open_breaches = now_b

        if prev_region is not None:
            changed = np.flatnonzero((prev_region != self.region) & self.live)
            for k in changed:
                events.append(Event(t, "RegionChange", (int(self.ids[k]),), {
                    "from": Region(int(prev_region[k])).label,
                    "to": Region(int(self.region[k])).label}))

        # tube margin over UAVs governed by the main tube and physically
        # between the start and finishing lines
        x_p = (p - tube.p_t1) @ tube.axis
        inside = IN_BAND[reg] & (x_p >= 0.0) & (x_p <= tube.length)
        nt_p = np.abs((p - tube.p_t2) @ tube.normal)
        margin_p = float((tube.r_t - nt_p[inside]).min()) if inside.any() else math.inf
        margin_xi = float((tube.r_t - nt_xi[inside]).min()) if inside.any() else math.inf

        total = potentials.total_v_parts(
            np.abs(rel_xi @ tube.axis), nt_xi, dxi, self.vm[idx], tube.r_t, prm.potential)

        speed = _norms(v)
        if len(idx):
            self.counters.max_speed = max(self.counters.max_speed, float(speed.max()))
            bounded = self.speed_bounded[idx]
            if bounded.any():
                self.counters.max_speed_excess = max(
                    self.counters.max_speed_excess, float((speed - self.vm[idx])[bounded].max()))
            slow = speed < STALL_FRACTION * self.vm[idx]
            waiting = ~self.arrived[idx]
            since = self._stall_since[idx]
            since = np.where(slow & waiting, np.where(np.isnan(since), t, since), np.nan)
            self._stall_since[idx] = since
            held = t - since[~np.isnan(since)]
            if len(held):
                self.counters.max_stall = max(self.counters.max_stall, float(held.max()))

        tr = self.trace
        tr.t.append(t)
        tr.min_p_distance.append(min_p)
        tr.min_xi_distance.append(min_xi)
        tr.tube_margin_p.append(margin_p)
        tr.tube_margin_xi.append(margin_xi)
        tr.total_v.append(total)
        tr.live.append(len(idx))
        tr.controller_time.append(controller_time)
        if initial:
            self.events.extend(events)
        return events


def detect_neighbors(world: World, i: int) -> list[Neighbor]:
    """Anonymous neighbours of slot ``i``, in ascending slot order."""
    if not world.live[i]:
        raise controller.ContractViolation(f"UAV slot {i} is not live")
    a, b = world.pairs()
    others = np.concatenate([b[a == i], a[b == i]])
    xi = world.xi
    return [Neighbor(world.p[j].copy(), world.v[j].copy(), xi[j].copy()) for j in np.sort(others)]


def step(world: World) -> list[Event]:
    return world.step()


# --------------------------------------------------------------------- record


@dataclass
class RunRecord:
    ids: np.ndarray
    rows: list
    events: list
    trace: dict
    arrival_time: dict
    complete: bool
    t_end: float
    n_steps: int
    wall_time: float
    counters: Counters
    settings: SimSettings
    warnings: list
    params: ControlParams
    tube: TubeSpec

    @property
    def safety_violation(self) -> bool:
        return self.counters.safety_violations > 0


TRAJECTORY_COLUMNS = ("t", "id", "px", "py", "vx", "vy", "xix", "xiy", "vcx", "vcy",
                      "region", "arrived")


def _record_rows(world: World, idx, vc, arrived_now, everyone: bool):
    """Trajectory rows at the current time; arrived UAVs get one final row."""
    xi = world.xi
    vc_of = {int(k): vc[q] for q, k in enumerate(idx)}
    slots = sorted(set(idx.tolist()) | set(arrived_now.tolist())) if everyone \
        else sorted(arrived_now.tolist())
    out = []
    for k in slots:
        c = vc_of.get(k, (0.0, 0.0))
        out.append((world.t, int(world.ids[k]), float(world.p[k, 0]), float(world.p[k, 1]),
                    float(world.v[k, 0]), float(world.v[k, 1]), float(xi[k, 0]), float(xi[k, 1]),
                    float(c[0]), float(c[1]), Region(int(world.region[k])).label,
                    int(world.arrived[k])))
    return out


def run(world: World, t_max: float | None = None, dt: float | None = None,
        threads: int | None = None) -> RunRecord:
    """Step until every UAV has arrived or ``t_max`` is reached."""
    changes = {k: v for k, v in (("t_max", t_max), ("dt", dt), ("threads", threads)) if v is not None}
    if changes:
        world.sim = replace(world.sim, **changes)
    if world.sim.dt != world._decay_dt:
        world._decay = dynamics.decay(world.l, world.sim.dt)
        world._decay_dt = world.sim.dt
    sim = world.sim
    executor = ThreadPoolExecutor(sim.threads) if sim.threads > 1 else None
    start = time.perf_counter()
    try:
        while not world.done:
            if world.t >= sim.t_max - 1e-9 * sim.dt:
                world.finish(executor)
                break
            world.step(executor, record=world.n % sim.record_every == 0)
    finally:
        if executor is not None:
            executor.shutdown()
    wall = time.perf_counter() - start
    arrivals = {int(u): float(t) for u, t in zip(world.ids, world.arrival_time) if not np.isnan(t)}
    return RunRecord(
        ids=world.ids.copy(), rows=world.rows, events=list(world.events),
        trace=world.trace.arrays(), arrival_time=arrivals, complete=world.done,
        t_end=world.t, n_steps=world.n, wall_time=wall, counters=world.counters,
        settings=world.sim, warnings=list(world.warnings), params=world.params, tube=world.tube,
    )


def metrics(record: RunRecord) -> dict:
    """Summary of a run; distances use ``inf`` when no pair (or UAV) qualifies."""
    tr = record.trace
    c = record.counters
    ctime = tr["controller_time"][~np.isnan(tr["controller_time"])]
    live_steps = ctime[tr["live"][1:] > 0] if len(ctime) else ctime

    def at_min(key):
        if not len(tr[key]):
            return math.inf, math.nan
        k = int(np.argmin(tr[key]))
        return float(tr[key][k]), float(tr["t"][k])

    min_p, t_min_p = at_min("min_p_distance")
    min_xi, t_min_xi = at_min("min_xi_distance")
    margin_p, t_margin_p = at_min("tube_margin_p")
    margin_xi, _ = at_min("tube_margin_xi")
    kinds: dict = {}
    for e in record.events:
        kinds[e.kind] = kinds.get(e.kind, 0) + 1
    return {
        "complete": record.complete,
        "t_end": record.t_end,
        "steps": record.n_steps,
        "uav_count": int(len(record.ids)),
        "arrival_time": {str(k): v for k, v in sorted(record.arrival_time.items())},
        "arrival_time_max": max(record.arrival_time.values()) if record.arrival_time else None,
        "min_p_distance": min_p,
        "t_min_p_distance": t_min_p,
        "min_xi_distance": min_xi,
        "t_min_xi_distance": t_min_xi,
        "min_tube_margin_p": margin_p,
        "t_min_tube_margin_p": t_margin_p,
        "min_tube_margin_xi": margin_xi,
        "max_speed": c.max_speed,
        "max_speed_excess": c.max_speed_excess,
        "max_kinematic_residual": c.max_kinematic_residual,
        "prop1_violations": c.prop1_violations,
        "prop2_violations": c.prop2_violations,
        "safety_violations": c.safety_violations,
        "max_stall_seconds": c.max_stall,
        "event_counts": kinds,
        "controller_time_mean": float(live_steps.mean()) if len(live_steps) else None,
        "controller_time_max": float(live_steps.max()) if len(live_steps) else None,
        "wall_time": record.wall_time,
        "warnings": record.warnings,
    }
