"""Straight virtual-tube geometry and airspace classification.

Points are plain numpy arrays of shape ``(2,)`` (or ``(n, 2)`` for the
batched helpers).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class DegenerateGeometry(ValueError):
    pass


class Region(enum.IntEnum):
    TUBE_INTERIOR = 0
    TUBE_EXTENSION = 1
    LEFT_STANDBY = 2
    RIGHT_STANDBY = 3
    LEFT_READY = 4
    RIGHT_READY = 5
    PAST_FINISH = 6

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Region.TUBE_INTERIOR: "TubeInterior",
    Region.TUBE_EXTENSION: "TubeExtension",
    Region.LEFT_STANDBY: "LeftStandby",
    Region.RIGHT_STANDBY: "RightStandby",
    Region.LEFT_READY: "LeftReady",
    Region.RIGHT_READY: "RightReady",
    Region.PAST_FINISH: "PastFinish",
}

# regions governed by the main tube (in-band)
BAND_REGIONS = (Region.TUBE_INTERIOR, Region.TUBE_EXTENSION, Region.PAST_FINISH)


def as_vec(v) -> np.ndarray:
    out = np.asarray(v, dtype=float).reshape(2)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"non-finite vector {out!r}")
    return out


def projection_matrix(a, b) -> np.ndarray:
    """``I - d d^T / |d|^2`` with ``d = a - b``: annihilates the line direction."""
    d = as_vec(a) - as_vec(b)
    n2 = float(d @ d)
    if n2 == 0.0:
        raise DegenerateGeometry(f"coincident endpoints {a!r}, {b!r}")
    return np.eye(2) - np.outer(d, d) / n2


def line_distance(p, a, b) -> float:
    """Perpendicular distance from ``p`` to the infinite line through ``a`` and ``b``."""
    return float(np.linalg.norm(projection_matrix(a, b) @ (as_vec(p) - as_vec(a))))


@dataclass(frozen=True)
class TubeSpec:
    """A straight tube of half-width ``r_t`` along ``p_t1 -> p_t2``.

    ``finish_side`` picks which side of the exit the finishing-line
    endpoint ``p_t3`` sits on (+1 left, -1 right); it has no effect on the
    projections, only on the reported point.
    """

    p_t1: np.ndarray
    p_t2: np.ndarray
    r_t: float
    lane_count: int | None = None
    r_a: float | None = None
    finish_side: int = 1
    length: float = field(init=False)
    axis: np.ndarray = field(init=False)
    normal: np.ndarray = field(init=False)
    p_t3: np.ndarray = field(init=False)
    p_t4: np.ndarray = field(init=False)
    A_t12: np.ndarray = field(init=False)
    A_t23: np.ndarray = field(init=False)

    def __post_init__(self):
        p1, p2 = as_vec(self.p_t1), as_vec(self.p_t2)
        if not self.r_t > 0:
            raise DegenerateGeometry(f"tube half-width must be positive, got {self.r_t}")
        d = p2 - p1
        length = float(np.hypot(*d))
        if length == 0.0:
            raise DegenerateGeometry("tube endpoints coincide")
        if self.finish_side not in (1, -1):
            raise ValueError("finish_side must be +1 or -1")
        if self.lane_count is not None:
            if self.lane_count < 1:
                raise ValueError("lane_count must be a positive integer")
            if self.r_a is not None and not self.r_t > self.lane_count * self.r_a:
                raise ValueError(
                    f"r_t={self.r_t} must exceed lane_count*r_a={self.lane_count * self.r_a}"
                )
        axis = d / length
        normal = np.array([-axis[1], axis[0]])
        p3 = p2 + self.finish_side * self.r_t * normal
        p4 = p1 + self.r_t * normal
        for name, val in (
            ("p_t1", p1), ("p_t2", p2), ("length", length), ("axis", axis),
            ("normal", normal), ("p_t3", p3), ("p_t4", p4),
            ("A_t12", projection_matrix(p1, p2)), ("A_t23", projection_matrix(p2, p3)),
        ):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    def to_frame(self, xi) -> np.ndarray:
        """Coordinates in the tube frame: origin ``p_t1``, x toward ``p_t2``, y to the left."""
        rel = np.asarray(xi, dtype=float) - self.p_t1
        return np.stack([rel @ self.axis, rel @ self.normal], axis=-1)

    def from_frame(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return self.p_t1 + q[..., :1] * self.axis + q[..., 1:2] * self.normal


def tube_errors(xi, p, tube: TubeSpec) -> dict[str, np.ndarray]:
    xi, p = as_vec(xi), as_vec(p)
    return {
        "xi_l": tube.A_t23 @ (xi - tube.p_t2),
        "xi_t": tube.A_t12 @ (xi - tube.p_t2),
        "p_l": tube.A_t23 @ (p - tube.p_t2),
        "p_t": tube.A_t12 @ (p - tube.p_t2),
    }


def arrival_score(p, tube: TubeSpec):
    """``(p_t2 - p_t1)^T A_t23 (p - p_t2)``; broadcasts over leading axes."""
    w = (tube.p_t2 - tube.p_t1) @ tube.A_t23
    return (np.asarray(p, dtype=float) - tube.p_t2) @ w


def arrival_test(p, tube: TubeSpec, eps0: float) -> bool:
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    return bool(arrival_score(as_vec(p), tube) >= -eps0)


def classify_frame(x, y, length: float, r_t: float) -> np.ndarray:
    """Vectorised region codes for tube-frame coordinates."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full(np.broadcast(x, y).shape, int(Region.TUBE_EXTENSION), dtype=np.int64)
    ahead = x > 0
    out[ahead & (y > r_t)] = Region.LEFT_STANDBY
    out[ahead & (y < -r_t)] = Region.RIGHT_STANDBY
    out[~ahead & (y > r_t)] = Region.LEFT_READY
    out[~ahead & (y < -r_t)] = Region.RIGHT_READY
    band = np.abs(y) <= r_t
    out[ahead & band & (x <= length)] = Region.TUBE_INTERIOR
    out[band & (x > length)] = Region.PAST_FINISH
    return out


def classify_regions(xi, tube: TubeSpec) -> np.ndarray:
    q = tube.to_frame(np.asarray(xi, dtype=float).reshape(-1, 2))
    return classify_frame(q[:, 0], q[:, 1], tube.length, tube.r_t)


def classify_region(xi, tube: TubeSpec) -> Region:
    return Region(int(classify_regions(as_vec(xi), tube)[0]))
