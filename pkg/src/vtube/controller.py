"""Distributed velocity command: line, avoidance and keep terms, auxiliary
entry tubes and the region-switched dispatcher.

The batched kernel :func:`batch_commands` is the single implementation;
the per-UAV functions (:func:`term_line`, :func:`tube_command`,
:func:`dispatch`, ...) wrap it with one-row batches, so both paths give
bit-identical results. All matrix-vector products are written out in
components to keep the arithmetic independent of batch size.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field, fields
from functools import cached_property

import numpy as np

from . import potentials, shaping
from .geometry import Region, TubeSpec, as_vec, classify_regions


class ContractViolation(RuntimeError):
    """A caller broke a precondition (e.g. asked to steer an arrived UAV)."""


# Anonymous neighbour record; identities are deliberately absent.
Neighbor = namedtuple("Neighbor", "p v xi")


@dataclass(frozen=True)
class ControlParams:
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    eps_m: float = 1e-6
    eps_t: float = 1e-6
    eps_s: float = 1e-6
    eps_0: float = 1.0
    r_s: float = 20.0
    r_a: float = 30.0
    r_d: float = 80.0
    r_b: float | None = None
    r_sr: float = 10000.0
    r_rt: float = 10000.0

    def __post_init__(self):
        if self.r_b is None:
            object.__setattr__(self, "r_b", self.r_a)
        for name in ("eps_0", "r_d", "r_b", "r_sr", "r_rt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        self.potential  # validates the shared fields

    @cached_property
    def potential(self) -> potentials.PotentialParams:
        return potentials.PotentialParams(
            k1=self.k1, k2=self.k2, k3=self.k3, eps_m=self.eps_m, eps_t=self.eps_t,
            eps_s=self.eps_s, r_s=self.r_s, r_a=self.r_a,
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ControlTermSet:
    line_term: np.ndarray
    avoid_term: np.ndarray
    keep_term: np.ndarray
    command: np.ndarray


@dataclass(frozen=True)
class AuxTubes:
    """Entry tubes steering standby UAVs to the ready areas and ready UAVs
    into the tube extension. ``rs2r``/``rr2t`` are the right-hand mirrors."""

    ls2r: TubeSpec
    rs2r: TubeSpec
    lr2t: TubeSpec
    rr2t: TubeSpec
    r_sr: float
    r_rt: float
    r_b: float


def build_aux_tubes(tube: TubeSpec, r_sr: float, r_rt: float, r_b: float) -> AuxTubes:
    for name, val in (("r_sr", r_sr), ("r_rt", r_rt), ("r_b", r_b)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    L, rt = tube.length, tube.r_t

    def make(p1, p2, half_width, side):
        q = tube.from_frame(np.array([p1, p2], dtype=float))
        return TubeSpec(q[0], q[1], half_width, finish_side=side)

    # With these endpoint orders the finishing-line end lands on the left
    # normal for the left-hand tubes and on the right normal for the mirrors.
    return AuxTubes(
        ls2r=make((L, rt + r_sr), (-r_b, rt + r_sr), r_sr, 1),
        rs2r=make((L, -rt - r_sr), (-r_b, -rt - r_sr), r_sr, -1),
        lr2t=make((-r_rt, rt + r_rt), (-r_rt, rt - r_b), r_rt, 1),
        rr2t=make((-r_rt, -rt - r_rt), (-r_rt, -rt + r_b), r_rt, -1),
        r_sr=float(r_sr), r_rt=float(r_rt), r_b=float(r_b),
    )


# Region code -> index into TubeBank (main, ls2r, rs2r, lr2t, rr2t); -1 = none.
TUBE_OF_REGION = np.array([0, 0, 1, 2, 3, 4, -1])


@dataclass(frozen=True)
class TubeBank:
    """The tubes a dispatcher may steer along, stacked into arrays."""

    tubes: tuple
    p2: np.ndarray = field(init=False)
    a23: np.ndarray = field(init=False)
    a12: np.ndarray = field(init=False)
    r_t: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "p2", np.array([t.p_t2 for t in self.tubes]))
        object.__setattr__(self, "a23", np.array([t.A_t23 for t in self.tubes]))
        object.__setattr__(self, "a12", np.array([t.A_t12 for t in self.tubes]))
        object.__setattr__(self, "r_t", np.array([t.r_t for t in self.tubes], dtype=float))

    @classmethod
    def build(cls, tube: TubeSpec, aux: AuxTubes | None = None) -> "TubeBank":
        if aux is None:
            return cls((tube,))
        return cls((tube, aux.ls2r, aux.rs2r, aux.lr2t, aux.rr2t))


def _apply(a, x, y):
    """Rows of ``a`` (n, 2, 2) applied to column vectors (x, y)."""
    return a[:, 0, 0] * x + a[:, 0, 1] * y, a[:, 1, 0] * x + a[:, 1, 1] * y


def _line_rows(lx, ly, a23, k1, vm):
    s = shaping.vec_sat(np.stack([k1 * lx, k1 * ly], axis=-1), vm)
    ox, oy = _apply(a23, s[:, 0], s[:, 1])
    return -ox, -oy


def _keep_rows(tx, ty, r_t, a12, params: potentials.PotentialParams):
    norm = np.sqrt(tx * tx + ty * ty)
    c = potentials.gain_c(norm, r_t, params)
    ox, oy = _apply(a12, tx, ty)
    return -c * ox, -c * oy


def _avoid_rows(xi, rows, cols, n_out, row0, params: potentials.PotentialParams):
    """Sum of ``b_ij (xi_i - xi_j)`` per row, over directed edges sorted by (row, col)."""
    out = np.zeros((n_out, 2))
    if len(rows) == 0:
        return out
    dx = xi[rows, 0] - xi[cols, 0]
    dy = xi[rows, 1] - xi[cols, 1]
    b = potentials.gain_b(np.sqrt(dx * dx + dy * dy), params)
    local = rows - row0
    # bincount accumulates in array order, i.e. ascending neighbour index
    out[:, 0] = np.bincount(local, weights=b * dx, minlength=n_out)
    out[:, 1] = np.bincount(local, weights=b * dy, minlength=n_out)
    return out


@dataclass
class BatchTerms:
    line: np.ndarray
    avoid: np.ndarray
    keep: np.ndarray
    command: np.ndarray


def directed_edges(pair_i, pair_j):
    """Both orientations of each unordered pair, sorted by (row, col)."""
    pair_i = np.asarray(pair_i, dtype=np.int64)
    pair_j = np.asarray(pair_j, dtype=np.int64)
    rows = np.concatenate([pair_i, pair_j])
    cols = np.concatenate([pair_j, pair_i])
    order = np.lexsort((cols, rows))
    return rows[order], cols[order]


def _commands_chunk(lo, hi, xi, vm, tube_idx, bank, params, rows, cols):
    pp = params.potential
    ti = tube_idx[lo:hi]
    x = xi[lo:hi]
    p2 = bank.p2[ti]
    rx, ry = x[:, 0] - p2[:, 0], x[:, 1] - p2[:, 1]
    a23, a12 = bank.a23[ti], bank.a12[ti]
    lx, ly = _apply(a23, rx, ry)
    tx, ty = _apply(a12, rx, ry)
    line = np.stack(_line_rows(lx, ly, a23, params.k1, vm[lo:hi]), axis=-1)
    keep = np.stack(_keep_rows(tx, ty, bank.r_t[ti], a12, pp), axis=-1)
    a, b = np.searchsorted(rows, [lo, hi])
    avoid = _avoid_rows(xi, rows[a:b], cols[a:b], hi - lo, lo, pp)
    command = shaping.vec_sat(line + avoid + keep, vm[lo:hi])
    return line, avoid, keep, command


def batch_commands(xi, vm, tube_idx, bank: TubeBank, params: ControlParams,
                   rows=None, cols=None, executor=None, chunks: int = 1) -> BatchTerms:
    """Commands for every row of ``xi`` (M, 2).

    ``tube_idx`` selects, per row, which tube of ``bank`` steers it;
    ``rows``/``cols`` are directed neighbour edges from :func:`directed_edges`.
    With an ``executor`` the rows are split into ``chunks`` contiguous
    blocks; every row is computed by the same elementwise arithmetic, so
    the result does not depend on the split.
    """
    xi = np.asarray(xi, dtype=float)
    m = len(xi)
    vm = np.broadcast_to(np.asarray(vm, dtype=float), (m,))
    tube_idx = np.asarray(tube_idx, dtype=np.int64)
    if np.any(tube_idx < 0):
        raise ContractViolation("no controller for UAVs past the finishing line; mark arrival first")
    if rows is None:
        rows = cols = np.zeros(0, dtype=np.int64)
    if m == 0:
        z = np.zeros((0, 2))
        return BatchTerms(z, z, z, z)
    chunks = max(1, min(chunks, m))
    bounds = np.linspace(0, m, chunks + 1).astype(int)
    spans = list(zip(bounds[:-1], bounds[1:]))
    args = (xi, vm, tube_idx, bank, params, rows, cols)
    if executor is None or chunks == 1:
        parts = [_commands_chunk(lo, hi, *args) for lo, hi in spans]
    else:
        parts = list(executor.map(lambda s: _commands_chunk(s[0], s[1], *args), spans))
    return BatchTerms(*(np.concatenate([p[k] for p in parts]) for k in range(4)))


# ---------------------------------------------------------------- per-UAV API


def _mat(a):
    a = np.asarray(a, dtype=float).reshape(1, 2, 2)
    return a


def term_line(xi_l, k1: float, vm: float, A_23) -> np.ndarray:
    """``-A_23 sat(k1 xi_l, vm)``: steers the filtered position onto the finishing line."""
    xi_l = as_vec(xi_l)
    ox, oy = _line_rows(xi_l[:1], xi_l[1:], _mat(A_23), k1, np.array([vm], dtype=float))
    return np.array([ox[0], oy[0]])


def _neighbor_xi(neighbors) -> np.ndarray:
    out = [as_vec(n.xi if hasattr(n, "xi") else n) for n in neighbors]
    return np.array(out).reshape(-1, 2)


def term_avoid(self_xi, neighbors, params) -> np.ndarray:
    """Repulsion ``sum_j b_ij (xi_i - xi_j)``, accumulated in the given order."""
    pp = params.potential if isinstance(params, ControlParams) else params
    nxi = _neighbor_xi(neighbors)
    xi = np.vstack([as_vec(self_xi)[None, :], nxi])
    n = len(nxi)
    rows = np.zeros(n, dtype=np.int64)
    cols = np.arange(1, n + 1, dtype=np.int64)
    return _avoid_rows(xi, rows, cols, 1, 0, pp)[0]


def term_keep(xi_t, r_t: float, params, A_12) -> np.ndarray:
    """``-c(|xi_t|) A_12 xi_t``: pushes back toward the centreline near the edge."""
    pp = params.potential if isinstance(params, ControlParams) else params
    xi_t = as_vec(xi_t)
    ox, oy = _keep_rows(xi_t[:1], xi_t[1:], np.array([r_t], dtype=float), _mat(A_12), pp)
    return np.array([ox[0], oy[0]])


def _single(xi, vm, neighbors, bank, tube_index, params) -> ControlTermSet:
    nxi = _neighbor_xi(neighbors)
    allxi = np.vstack([as_vec(xi)[None, :], nxi])
    n = len(nxi)
    rows = np.zeros(n, dtype=np.int64)
    cols = np.arange(1, n + 1, dtype=np.int64)
    idx = np.full(n + 1, tube_index, dtype=np.int64)
    vms = np.full(n + 1, float(vm))
    # only row 0 is wanted; neighbour rows carry no edges of their own
    out = _commands_chunk(0, 1, allxi, vms, idx, bank, params, rows, cols)
    return ControlTermSet(*(np.array(t[0]) for t in out))


def tube_command(xi, vm: float, neighbors, tube: TubeSpec, params: ControlParams) -> ControlTermSet:
    """Saturated command for a UAV governed by ``tube`` (interior or extension)."""
    return _single(xi, vm, neighbors, TubeBank.build(tube), 0, params)


def dispatch(xi, vm: float, neighbors, tube: TubeSpec, aux: AuxTubes,
             params: ControlParams) -> ControlTermSet:
    """Region-switched command; the region is read from ``xi`` alone."""
    code = int(classify_regions(as_vec(xi), tube)[0])
    if code == Region.PAST_FINISH:
        raise ContractViolation("UAV is past the finishing line; it must be marked arrived")
    return _single(xi, vm, neighbors, TubeBank.build(tube, aux), TUBE_OF_REGION[code], params)
