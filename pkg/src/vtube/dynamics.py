"""Velocity-tracking point-mass model and its zero-order-hold discretisation.

Each UAV obeys ``p' = v``, ``v' = l (v_c - v)``. Under a command held
constant over a step the model is linear, so :func:`step_exact` uses the
closed-form solution; :func:`step_euler` is kept for sensitivity studies.
Either way the filtered position ``xi = p + v/l`` moves by exactly
``v_c dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Region, as_vec


@dataclass(frozen=True)
class UavParams:
    id: int
    l: float
    vm: float

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError(f"UAV {self.id}: tracking gain l must be positive, got {self.l}")
        if not self.vm > 0:
            raise ValueError(f"UAV {self.id}: speed limit vm must be positive, got {self.vm}")


@dataclass(frozen=True)
class UavState:
    p: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    arrived: bool = False
    region: Region | None = None

    @classmethod
    def from_pv(cls, p, v, l: float, **kw) -> "UavState":
        p, v = as_vec(p), as_vec(v)
        return cls(p, v, filtered_position(p, v, l), **kw)


@dataclass(frozen=True)
class SwarmLimits:
    r_v: float

    @classmethod
    def from_params(cls, uavs) -> "SwarmLimits":
        """``r_v = max_i vm_i / l_i`` over ``UavParams`` records."""
        uavs = list(uavs)
        return cls(max((u.vm / u.l for u in uavs), default=0.0))


def filtered_position(p, v, l):
    return np.asarray(p, dtype=float) + np.asarray(v, dtype=float) / l


def decay(l, dt):
    """Per-UAV factor ``exp(-l dt)``; computed once per run, outside any batching."""
    return np.array([math.exp(-li * dt) for li in np.atleast_1d(l)])


def exact_update(p, v, vc, l, e, dt):
    """Batched closed-form step; ``l`` and ``e`` are per-row arrays."""
    l = np.asarray(l, dtype=float)[..., None]
    e = np.asarray(e, dtype=float)[..., None]
    dv = v - vc
    return p + vc * dt + dv * ((1.0 - e) / l), vc + dv * e


def euler_update(p, v, vc, l, dt):
    l = np.asarray(l, dtype=float)[..., None]
    return p + v * dt, v + l * (vc - v) * dt


def _check_dt(dt):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")


def step_exact(state: UavState, params: UavParams, vc, dt: float) -> UavState:
    _check_dt(dt)
    vc = as_vec(vc)
    p, v = exact_update(state.p[None], state.v[None], vc[None], [params.l],
                        decay([params.l], dt), dt)
    return replace(state, p=p[0], v=v[0], xi=filtered_position(p[0], v[0], params.l))


def step_euler(state: UavState, params: UavParams, vc, dt: float) -> UavState:
    _check_dt(dt)
    vc = as_vec(vc)
    p, v = euler_update(state.p[None], state.v[None], vc[None], [params.l], dt)
    return replace(state, p=p[0], v=v[0], xi=filtered_position(p[0], v[0], params.l))


def check_separation_implication(xi_i, xi_j, p_i, p_j, r: float, r_v: float,
                                 tol: float = 1e-9) -> bool:
    """False only when filtered separation ``>= r + 2 r_v`` coexists with
    physical separation ``< r`` (beyond ``tol``, which absorbs the rounding
    allowed on the speed bound)."""
    dxi = float(np.linalg.norm(as_vec(xi_i) - as_vec(xi_j)))
    if dxi < r + 2.0 * r_v:
        return True
    return float(np.linalg.norm(as_vec(p_i) - as_vec(p_j))) >= r - tol
