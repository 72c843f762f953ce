"""Scalar and vector shaping functions used by the potentials.

Everything here accepts numpy scalars or arrays and broadcasts, so the
same code serves the per-UAV reference API and the batched simulation
kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Arc geometry of the smooth saturation.
THETA_S = math.radians(67.5)
_SIN45 = math.sin(math.radians(45.0))
EPS_S_MAX = math.tan(THETA_S) / (math.tan(THETA_S) * _SIN45 - 1.0)
_IDEMPOTENCE_ULPS = 4


def vec_sat(v, vm):
    """Scale ``v`` (shape (..., 2)) down to norm ``vm``, keeping its direction."""
    v = np.asarray(v, dtype=float)
    vm = np.asarray(vm, dtype=float)
    if np.any(vm <= 0):
        raise ValueError("saturation bound must be positive")
    norm = np.sqrt(np.sum(v * v, axis=-1))
    # a vector already scaled to vm may have a computed norm a few ulps above
    # it; leaving such vectors alone makes the saturation idempotent
    over = norm > vm * (1.0 + _IDEMPOTENCE_ULPS * np.finfo(float).eps)
    kappa = np.where(over, vm / np.where(norm > 0, norm, 1.0), 1.0)
    return v * kappa[..., None]


@dataclass(frozen=True)
class BumpSpec:
    """Cubic step falling from 1 at ``d1`` to 0 at ``d2`` with flat ends."""

    d1: float
    d2: float
    A: float = field(init=False)
    B: float = field(init=False)
    C: float = field(init=False)
    D: float = field(init=False)

    def __post_init__(self):
        if not (self.d2 > self.d1 >= 0):
            raise ValueError(f"bump needs d2 > d1 >= 0, got d1={self.d1}, d2={self.d2}")
        den = (self.d1 - self.d2) ** 3
        object.__setattr__(self, "A", -2.0 / den)
        object.__setattr__(self, "B", 3.0 * (self.d1 + self.d2) / den)
        object.__setattr__(self, "C", -6.0 * self.d1 * self.d2 / den)
        object.__setattr__(self, "D", self.d2**2 * (3.0 * self.d1 - self.d2) / den)


# The cubic has a double root at d2, so it is evaluated as
# (x - d2)^2 (2x + d2 - 3 d1) / (d2 - d1)^3; the expanded A..D form loses
# most of its digits near the flat end.


def bump(x, spec: BumpSpec):
    x = np.asarray(x, dtype=float)
    w = spec.d2 - spec.d1
    cubic = (x - spec.d2) ** 2 * (2.0 * x + spec.d2 - 3.0 * spec.d1) / w**3
    out = np.where(x <= spec.d1, 1.0, np.where(x >= spec.d2, 0.0, cubic))
    return out if out.ndim else float(out)


def bump_deriv(x, spec: BumpSpec):
    # knots map to the flat branch (both one-sided limits are 0)
    x = np.asarray(x, dtype=float)
    quad = 6.0 * (x - spec.d1) * (x - spec.d2) / (spec.d2 - spec.d1) ** 3
    out = np.where((x <= spec.d1) | (x >= spec.d2), 0.0, quad)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SmoothSatSpec:
    """Circular-arc rounding of ``min(x, 1)`` with corner radius ``eps_s``."""

    eps_s: float
    x1: float = field(init=False)
    x2: float = field(init=False)

    def __post_init__(self):
        if not (0 < self.eps_s <= EPS_S_MAX):
            raise ValueError(f"eps_s must lie in (0, {EPS_S_MAX:.6f}], got {self.eps_s}")
        x2 = 1.0 + self.eps_s / math.tan(THETA_S)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "x1", x2 - _SIN45 * self.eps_s)


def _check_nonneg(x):
    if np.any(x < 0):
        raise ValueError("smooth saturation is defined for x >= 0 only")


def smooth_sat(x, spec: SmoothSatSpec):
    x = np.asarray(x, dtype=float)
    _check_nonneg(x)
    e = spec.eps_s
    rad = np.maximum(e * e - (x - spec.x2) ** 2, 0.0)
    arc = (1.0 - e) + np.sqrt(rad)
    out = np.where(x <= spec.x1, x, np.where(x >= spec.x2, 1.0, arc))
    return out if out.ndim else float(out)


def smooth_sat_deriv(x, spec: SmoothSatSpec):
    x = np.asarray(x, dtype=float)
    _check_nonneg(x)
    e = spec.eps_s
    rad = e * e - (x - spec.x2) ** 2
    safe = rad > 0
    arc = np.where(safe, (spec.x2 - x) / np.sqrt(np.where(safe, rad, 1.0)), 0.0)
    out = np.where(x <= spec.x1, 1.0, np.where(x >= spec.x2, 0.0, arc))
    return out if out.ndim else float(out)


def vli_value(norm_y, k, a):
    """Line integral of ``sat(k x, a)`` from the origin out to radius ``norm_y``.

    The field is radial, so the integral reduces to the closed form of
    ``min(k z, a)`` integrated over ``[0, norm_y]``.
    """
    y = np.asarray(norm_y, dtype=float)
    if np.any(y < 0):
        raise ValueError("norm_y must be >= 0")
    knee = a / k
    out = np.where(y <= knee, 0.5 * k * y * y, a * a / (2.0 * k) + a * (y - knee))
    return out if out.ndim else float(out)
