"""Line-approach, mutual-avoidance and tube-keeping potentials.

The gains ``gain_b``/``gain_c`` are the analytic radial derivatives of
``v_m``/``v_t`` divided by the radius; finite differences appear only in
the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from functools import cached_property

import numpy as np

from . import shaping
from .geometry import TubeSpec


class Singularity(ArithmeticError):
    """Two filtered positions coincide, so the avoidance barrier is undefined."""


@dataclass(frozen=True)
class PotentialParams:
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    eps_m: float = 1e-6
    eps_t: float = 1e-6
    eps_s: float = 1e-6
    r_s: float = 20.0
    r_a: float = 30.0

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "eps_m", "eps_t", "eps_s", "r_s", "r_a"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.r_a > self.r_s:
            raise ValueError(f"need r_a > r_s, got r_a={self.r_a}, r_s={self.r_s}")

    @cached_property
    def bump_m(self) -> shaping.BumpSpec:
        return shaping.BumpSpec(2.0 * self.r_s, self.r_s + self.r_a)

    @cached_property
    def bump_t(self) -> shaping.BumpSpec:
        return shaping.BumpSpec(self.r_s, self.r_a)

    @cached_property
    def sat(self) -> shaping.SmoothSatSpec:
        return shaping.SmoothSatSpec(self.eps_s)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _out(x):
    return x if np.ndim(x) else float(x)


def v_l(norm_xi_l, vm, params: PotentialParams):
    return shaping.vli_value(norm_xi_l, params.k1, vm)


def _check_dist(dist):
    dist = np.asarray(dist, dtype=float)
    if np.any(dist <= 0):
        raise Singularity("avoidance barrier evaluated at zero separation")
    return dist


# On the identity branch of the smooth saturation the denominators reduce to
# eps_m*dist and span*eps_t/(norm+eps_t); evaluating them in that form avoids
# the cancellation of two nearly equal terms inside the violation zones.


def _vm_parts(dist, params):
    two_rs = 2.0 * params.r_s
    arg = dist / two_rs
    num = params.k2 * shaping.bump(dist, params.bump_m)
    linear = arg <= params.sat.x1
    den = np.where(
        linear,
        params.eps_m * dist,
        (1.0 + params.eps_m) * dist - two_rs * shaping.smooth_sat(arg, params.sat),
    )
    return num, den, arg, linear


def v_m(dist, params: PotentialParams):
    dist = _check_dist(dist)
    num, den, _, _ = _vm_parts(dist, params)
    return _out(num / den)


def gain_b(dist, params: PotentialParams):
    """``-dV_m/d|xi_ij| / |xi_ij|`` (non-negative)."""
    dist = _check_dist(dist)
    num, den, arg, linear = _vm_parts(dist, params)
    dnum = params.k2 * shaping.bump_deriv(dist, params.bump_m)
    dden = np.where(
        linear, params.eps_m, (1.0 + params.eps_m) - shaping.smooth_sat_deriv(arg, params.sat)
    )
    dv = (dnum * den - num * dden) / (den * den)
    return _out(-dv / dist)


def _vt_parts(norm, r_t, params):
    span = r_t - params.r_s
    shifted = norm + params.eps_t
    u = span / shifted
    num = params.k3 * shaping.bump(r_t - norm, params.bump_t)
    linear = u <= params.sat.x1
    den = np.where(
        linear, span * params.eps_t / shifted, span - norm * shaping.smooth_sat(u, params.sat)
    )
    return num, den, u, span, shifted, linear


def v_t(norm_xi_t, r_t, params: PotentialParams):
    norm = np.asarray(norm_xi_t, dtype=float)
    if np.any(norm < 0):
        raise ValueError("norm_xi_t must be >= 0")
    num, den = _vt_parts(norm, r_t, params)[:2]
    return _out(num / den)


def gain_c(norm_xi_t, r_t, params: PotentialParams):
    """``dV_t/d|xi_t| / |xi_t|``; zero on the centreline where the keep term vanishes anyway."""
    norm = np.asarray(norm_xi_t, dtype=float)
    if np.any(norm < 0):
        raise ValueError("norm_xi_t must be >= 0")
    num, den, u, span, shifted, linear = _vt_parts(norm, r_t, params)
    dnum = -params.k3 * shaping.bump_deriv(r_t - norm, params.bump_t)
    dden = np.where(
        linear,
        -span * params.eps_t / (shifted * shifted),
        -shaping.smooth_sat(u, params.sat)
        + norm * shaping.smooth_sat_deriv(u, params.sat) * span / (shifted * shifted),
    )
    dv = (dnum * den - num * dden) / (den * den)
    safe = norm > 0
    return _out(np.where(safe, dv / np.where(safe, norm, 1.0), 0.0))


def total_v_parts(norm_xi_l, norm_xi_t, pair_dist, vm, r_t, params: PotentialParams) -> float:
    """``V`` from precomputed norms: one ``V_m`` per unordered pair distance."""
    total = float(np.sum(v_l(norm_xi_l, vm, params)))
    total += float(np.sum(v_t(norm_xi_t, r_t, params)))
    # V_m vanishes identically beyond the bump support
    active = pair_dist[pair_dist < params.r_s + params.r_a]
    if len(active):
        total += float(np.sum(v_m(active, params)))
    return total


def total_v(xi, vm, tube: TubeSpec, params: PotentialParams) -> float:
    """Sum of all three potentials over the given (live) UAVs.

    ``xi`` has shape (M, 2) and ``vm`` shape (M,). Each unordered pair
    contributes ``V_m`` once, which equals half the ordered double sum.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1, 2)
    if len(xi) == 0:
        return 0.0
    vm = np.broadcast_to(np.asarray(vm, dtype=float), (len(xi),))
    rel = xi - tube.p_t2
    norm_l = np.abs(rel @ tube.axis)
    norm_t = np.abs(rel @ tube.normal)
    iu, ju = np.triu_indices(len(xi), k=1)
    d = xi[iu] - xi[ju]
    dist = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    return total_v_parts(norm_l, norm_t, dist, vm, tube.r_t, params)
