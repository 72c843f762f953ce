"""Invariant suite behind ``vtube check``.

Every check returns a :class:`CheckResult`. The numerical oracles
(finite differences, adaptive quadrature, a fine Runge-Kutta reference)
are independent of the closed forms they test. Scenario checks run the
shipped scenarios end to end and inspect the run counters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import potentials, shaping
from .dynamics import UavParams, UavState, step_exact
from .scenario import build_world, find_scenario, load_scenario, read_document, resolve, shipped
from .simulation import metrics, run

N_POINTS = 1000
GRAD_TOL = 1e-5
VLI_TOL = 1e-8
ZOH_TOL = 1e-9
RESIDUAL_TOL = 1e-12
SPEED_TOL = 1e-9
STALL_LIMIT = 10.0
V_WINDOW = 30.0
V_DTS = (0.01, 0.005)
V_SCENARIO = "basic_8uav"
TRAP_SCENARIO = "crowded_entrance"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------- FD oracles


def central_diff(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def rel_err(value, ref) -> np.ndarray:
    value, ref = np.asarray(value, float), np.asarray(ref, float)
    diff = np.abs(value - ref)
    scale = np.abs(ref)
    return np.divide(diff, scale, out=np.where(diff == 0, 0.0, np.inf), where=scale > 0)


def _sample(rng, lo, hi, step_of, knots, n=N_POINTS):
    """``n`` uniform points in ``[lo, hi]`` farther than ``10 h`` from every knot."""
    knots = np.asarray(knots, float)
    xs, hs = [], []
    while len(xs) < n:
        x = rng.uniform(lo, hi, 4 * n)
        h = step_of(x)
        ok = (np.min(np.abs(x[:, None] - knots[None, :]), axis=1) > 10.0 * h) & (x - h > 0)
        xs.extend(x[ok].tolist())
        hs.extend(h[ok].tolist())
    return np.array(xs[:n]), np.array(hs[:n])


def bump_fd_error(spec: shaping.BumpSpec, rng) -> float:
    step = 1e-6 * (spec.d2 - spec.d1)
    x, h = _sample(rng, 0.0, 2.0 * spec.d2, lambda x: np.full_like(x, step), [spec.d1, spec.d2])
    ref = central_diff(lambda z: shaping.bump(z, spec), x, h)
    return float(rel_err(shaping.bump_deriv(x, spec), ref).max())


def smooth_sat_fd_error(spec: shaping.SmoothSatSpec, rng) -> float:
    x, h = _sample(rng, 0.0, 3.0, lambda x: 1e-5 * x, [0.0, spec.x1, spec.x2])
    ref = central_diff(lambda z: shaping.smooth_sat(z, spec), x, h)
    return float(rel_err(shaping.smooth_sat_deriv(x, spec), ref).max())


def _feature_step(width, pole):
    # step scaled to the argument, to the bump width and to the distance
    # from the near-pole where the barrier turns steep
    return lambda x: np.minimum(1e-6 * np.minimum(x, width), 1e-3 * np.abs(x - pole))


def gain_b_fd_error(prm: potentials.PotentialParams, rng) -> float:
    sat = prm.sat
    pole = 2.0 * prm.r_s * sat.x2
    knots = [2.0 * prm.r_s, prm.r_s + prm.r_a, 2.0 * prm.r_s * sat.x1, pole]
    x, h = _sample(rng, 0.1 * prm.r_s, 3.0 * (prm.r_s + prm.r_a),
                   _feature_step(prm.r_a - prm.r_s, pole), knots)
    ref = -central_diff(lambda z: potentials.v_m(z, prm), x, h) / x
    return float(rel_err(potentials.gain_b(x, prm), ref).max())


def gain_c_fd_error(prm: potentials.PotentialParams, r_t: float, rng) -> float:
    sat = prm.sat
    span = r_t - prm.r_s
    pole = span / sat.x2 - prm.eps_t
    knots = [0.0, r_t - prm.r_a, span / sat.x1 - prm.eps_t, pole]
    x, h = _sample(rng, 0.0, r_t + prm.r_a, _feature_step(prm.r_a - prm.r_s, pole), knots)
    ref = central_diff(lambda z: potentials.v_t(z, r_t, prm), x, h) / x
    return float(rel_err(potentials.gain_c(x, r_t, prm), ref).max())


# ------------------------------------------------------- closed-form oracles


def vli_quad(y, k, a) -> float:
    """Line integral of ``sat(k x, a)`` along the segment from 0 to ``y``."""
    y = np.asarray(y, float)
    ny = math.hypot(*y)
    if ny == 0:
        return 0.0
    f = lambda s: float(shaping.vec_sat(k * s * y, a) @ y)  # noqa: E731
    knee = a / (k * ny)
    pts = [knee] if 0 < knee < 1 else None
    val, _ = integrate.quad(f, 0.0, 1.0, points=pts, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def rk4_step(p, v, vc, l, dt, substeps=1000):
    """Reference solution of ``p' = v, v' = l (vc - v)`` by classical RK4.

    Accepts single states or batches (rows of ``p``, ``v``, ``vc``; per-row
    ``l`` and ``dt``).
    """
    p, v, vc = (np.asarray(a, float) for a in (p, v, vc))
    l = np.asarray(l, float)[..., None]
    h = np.asarray(dt, float)[..., None] / substeps

    def f(_, w):
        return w, l * (vc - w)

    for _ in range(substeps):
        k1p, k1v = f(p, v)
        k2p, k2v = f(p + 0.5 * h * k1p, v + 0.5 * h * k1v)
        k3p, k3v = f(p + 0.5 * h * k2p, v + 0.5 * h * k2v)
        k4p, k4v = f(p + h * k3p, v + h * k3v)
        p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return p, v


# --------------------------------------------------------------------- checks


def check_shaping_gradients(seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    errs = {}
    for d1, d2 in ((40.0, 50.0), (20.0, 30.0), (5.0, 7.5)):
        errs[f"bump[{d1:g},{d2:g}]"] = bump_fd_error(shaping.BumpSpec(d1, d2), rng)
    for eps in (1e-6, 0.1, 1.0):
        errs[f"sat[{eps:g}]"] = smooth_sat_fd_error(shaping.SmoothSatSpec(eps), rng)
    worst = max(errs.values())
    return CheckResult("shaping_gradients", worst <= GRAD_TOL,
                       f"max rel err {worst:.2e} over {len(errs)} x {N_POINTS} points")


def check_potential_gradients(seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for prm in (potentials.PotentialParams(), potentials.PotentialParams(r_s=5.0, r_a=7.5)):
        worst = max(worst, gain_b_fd_error(prm, rng))
        for r_t in (150.0, 50.0, 10000.0):
            worst = max(worst, gain_c_fd_error(prm, r_t, rng))
    return CheckResult("potential_gradients", worst <= GRAD_TOL,
                       f"max rel err {worst:.2e} (gain_b, gain_c)")


def check_vli_quadrature(seed: int = 3, n: int = N_POINTS) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        y = rng.uniform(-1.0, 1.0, 2) * 10 ** rng.uniform(-1, 3)
        k = 10 ** rng.uniform(-1, 1)
        a = rng.uniform(0.5, 20.0)
        ref = vli_quad(y, k, a)
        got = shaping.vli_value(math.hypot(*y), k, a)
        worst = max(worst, abs(got - ref) / abs(ref) if ref else abs(got))
    return CheckResult("vli_quadrature", worst <= VLI_TOL, f"max rel err {worst:.2e} over {n} triples")


def check_zoh_exactness(seed: int = 4, n: int = N_POINTS) -> CheckResult:
    rng = np.random.default_rng(seed)
    l = rng.uniform(0.5, 10.0, n)
    dt = rng.uniform(1e-3, 0.1, n)
    p = rng.uniform(-500.0, 500.0, (n, 2))
    v = rng.uniform(-10.0, 10.0, (n, 2))
    vc = rng.uniform(-10.0, 10.0, (n, 2))
    rp, rv = rk4_step(p, v, vc, l, dt)
    worst = 0.0
    for k in range(n):
        got = step_exact(UavState.from_pv(p[k], v[k], l[k]), UavParams(1, l[k], 15.0), vc[k], dt[k])
        # position and velocity are judged separately so neither hides the other
        err_p = np.linalg.norm(got.p - rp[k]) / np.linalg.norm(rp[k])
        err_v = np.linalg.norm(got.v - rv[k]) / np.linalg.norm(rv[k])
        worst = max(worst, float(err_p), float(err_v))
    return CheckResult("zoh_exactness", worst <= ZOH_TOL, f"max rel err {worst:.2e} over {n} states")


def v_growth_constant(dt: float, scenario: str = V_SCENARIO, window: float = V_WINDOW):
    """``max(0, max ΔV) / dt²`` over the window, with a roundoff allowance on ΔV.

    Returns the constant and the number of arrivals inside the window.
    """
    world = build_world(resolve(read_document(scenario), {"dt": dt, "t_max": window}))
    rec = run(world)
    v = rec.trace["total_v"]
    dv = np.diff(v)
    allowance = 1e-12 * np.maximum(1.0, np.abs(v[:-1]))
    excess = float(np.max(dv - allowance)) if len(dv) else 0.0
    return max(0.0, excess) / dt**2, len(rec.arrival_time)


def check_v_monotonicity() -> CheckResult:
    (c1, n1), (c2, n2) = (v_growth_constant(dt) for dt in V_DTS)
    if n1 or n2:
        return CheckResult("v_monotonicity", False, f"arrivals inside the window ({n1}, {n2})")
    # the constant fitted at the coarse step must still bound the fine step;
    # a first-order violation would double it when dt halves
    ok = c2 <= 1.5 * c1 if c1 > 0 else c2 == 0.0
    return CheckResult("v_monotonicity", ok,
                       f"c(dt={V_DTS[0]})={c1:.3g}, c(dt={V_DTS[1]})={c2:.3g}")


@lru_cache(maxsize=None)
def shipped_run(name: str, despawn: bool = True):
    rec = run(load_scenario(find_scenario(name), despawn=despawn))
    return rec, metrics(rec)


def scenario_problems(rec, m) -> list[str]:
    c = rec.counters
    out = []
    if not rec.complete:
        out.append("incomplete")
    if c.safety_violations:
        out.append(f"{c.safety_violations} safety violations")
    if c.max_kinematic_residual > RESIDUAL_TOL:
        out.append(f"kinematic residual {c.max_kinematic_residual:.2e}")
    if c.max_speed_excess > SPEED_TOL:
        out.append(f"speed excess {c.max_speed_excess:.2e}")
    if c.prop1_violations:
        out.append(f"{c.prop1_violations} separation-implication failures")
    if c.prop2_violations:
        out.append(f"{c.prop2_violations} filtered neighbours outside detection range")
    return out


def check_scenario(name: str) -> CheckResult:
    rec, m = shipped_run(name)
    bad = scenario_problems(rec, m)
    detail = "; ".join(bad) if bad else (
        f"arrivals by {m['arrival_time_max']:.2f} s, residual "
        f"{rec.counters.max_kinematic_residual:.1e}, speed excess {rec.counters.max_speed_excess:.1e}")
    return CheckResult(f"scenario:{name}", not bad, detail)


def check_trap_freedom(despawn: bool = True, scenario: str = TRAP_SCENARIO) -> CheckResult:
    rec, m = shipped_run(scenario, despawn)
    stall = rec.counters.max_stall
    ok = rec.complete and stall < STALL_LIMIT
    arrived = len(rec.arrival_time)
    return CheckResult("trap_freedom", ok,
                       f"{arrived}/{len(rec.ids)} arrived by {rec.t_end:g} s, longest stall {stall:.2f} s")


def registry() -> dict:
    checks = {
        "shaping_gradients": check_shaping_gradients,
        "potential_gradients": check_potential_gradients,
        "vli_quadrature": check_vli_quadrature,
        "zoh_exactness": check_zoh_exactness,
        "v_monotonicity": check_v_monotonicity,
        "trap_freedom": check_trap_freedom,
    }
    for name in shipped():
        checks[f"scenario:{name}"] = lambda name=name: check_scenario(name)
    return checks


def run_checks(name_filter: str | None = None) -> list[CheckResult]:
    return [fn() for name, fn in registry().items() if not name_filter or name_filter in name]


def format_table(results) -> str:
    width = max((len(r.name) for r in results), default=4)
    lines = [f"{'check':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)
