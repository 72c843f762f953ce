from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vtube import potentials
from vtube.controller import (
    TUBE_OF_REGION, ContractViolation, ControlParams, Neighbor, TubeBank, batch_commands,
    build_aux_tubes, directed_edges, dispatch, term_avoid, term_keep, term_line, tube_command,
)
from vtube.geometry import Region, TubeSpec, classify_regions, tube_errors
from vtube.shaping import vec_sat

PRM = ControlParams()
FIG = ControlParams(r_s=10.0, r_a=20.0, r_d=80.0)


def nb(xi):
    xi = np.asarray(xi, float)
    return Neighbor(xi.copy(), np.zeros(2), xi.copy())


@pytest.fixture
def aux(main_tube):
    return build_aux_tubes(main_tube, 10000.0, 10000.0, 30.0)


def test_params_defaults():
    assert PRM.r_b == PRM.r_a == 30.0
    assert ControlParams(r_b=12.0).r_b == 12.0
    with pytest.raises(ValueError):
        ControlParams(r_s=30.0, r_a=20.0)
    with pytest.raises(ValueError):
        ControlParams(eps_0=0.0)


def test_line_term_examples():
    A = np.diag([1.0, 0.0])
    np.testing.assert_array_equal(term_line((-400, 0), 1.0, 5.0, A), [5.0, 0.0])
    np.testing.assert_array_equal(term_line((0, 0), 1.0, 5.0, A), [0.0, 0.0])
    np.testing.assert_array_equal(term_line((-3, 0), 1.0, 5.0, A), -(A @ np.array([-3.0, 0.0])))


@given(st.floats(-4.9, 4.9), st.floats(-3, 3), st.floats(0.1, 1.0))
def test_line_term_unsaturated(x, y, k1):
    if np.hypot(x, y) * k1 > 5.0:
        return
    A = np.array([[0.7, 0.2], [0.2, 0.3]])
    xi_l = np.array([x, y])
    np.testing.assert_allclose(term_line(xi_l, k1, 5.0, A), -A @ (k1 * xi_l), atol=1e-14)


def test_avoid_term_examples():
    np.testing.assert_array_equal(term_avoid((0, 0), [], PRM), [0.0, 0.0])
    np.testing.assert_array_equal(term_avoid((0, 0), [nb((50, 0))], PRM), [0.0, 0.0])
    sym = term_avoid((0, 0), [nb((45, 0)), nb((-45, 0))], PRM)
    np.testing.assert_array_equal(sym, [0.0, 0.0])
    push = term_avoid((0, 0), [nb((45, 0))], PRM)
    assert push[0] < 0 and push[1] == 0.0


@given(st.floats(1.0, 60.0), st.floats(0, 2 * np.pi))
def test_avoid_antisymmetric(d, ang):
    a = np.zeros(2)
    b = d * np.array([np.cos(ang), np.sin(ang)])
    np.testing.assert_array_equal(term_avoid(a, [nb(b)], PRM), -term_avoid(b, [nb(a)], PRM))


def test_keep_term_examples(small_tube):
    prm = FIG
    np.testing.assert_array_equal(term_keep((0, 25), 50.0, prm, small_tube.A_t12), [0.0, 0.0])
    k = term_keep((0, 45), 50.0, prm, small_tube.A_t12)
    assert k[0] == 0.0 and k[1] < 0
    c = potentials.gain_c(45.0, 50.0, prm.potential)
    assert np.linalg.norm(k) == pytest.approx(c * 45.0, rel=1e-14)


def test_tube_command_examples(main_tube):
    out = tube_command((100, 0), 5.0, [], main_tube, PRM)
    np.testing.assert_array_equal(out.command, [5.0, 0.0])
    out = tube_command((500, 0), 5.0, [], main_tube, PRM)
    np.testing.assert_array_equal(out.command, [0.0, 0.0])
    out = tube_command((250, 149.0), 5.0, [], main_tube, PRM)
    assert out.command[1] < 0
    assert np.linalg.norm(out.command) <= 5.0


def test_aux_tube_points(main_tube, aux):
    np.testing.assert_array_equal(aux.ls2r.p_t1, [500.0, 10150.0])
    np.testing.assert_array_equal(aux.ls2r.p_t2, [-30.0, 10150.0])
    np.testing.assert_allclose(aux.ls2r.p_t3, [-30.0, 150.0], atol=1e-9)
    np.testing.assert_allclose(aux.rs2r.p_t3, [-30.0, -150.0], atol=1e-9)
    np.testing.assert_allclose(aux.lr2t.p_t1, [-10000.0, 10150.0])
    np.testing.assert_allclose(aux.lr2t.p_t2, [-10000.0, 120.0])
    np.testing.assert_allclose(aux.lr2t.p_t3, [0.0, 120.0], atol=1e-9)
    np.testing.assert_allclose(aux.rr2t.p_t3, [0.0, -120.0], atol=1e-9)
    assert aux.ls2r.r_t == 10000.0 and aux.lr2t.r_t == 10000.0
    with pytest.raises(ValueError):
        build_aux_tubes(main_tube, 0.0, 1.0, 1.0)


def test_dispatch_examples(main_tube, aux):
    inside = dispatch((250, 20), 5.0, [], main_tube, aux, PRM)
    same = tube_command((250, 20), 5.0, [], main_tube, PRM)
    np.testing.assert_array_equal(inside.command, same.command)
    standby = dispatch((250, 200), 5.0, [], main_tube, aux, PRM)
    assert standby.command[0] < 0 and abs(standby.command[1]) < 1e-9
    ready = dispatch((-100, 300), 5.0, [], main_tube, aux, PRM)
    assert ready.command[1] < 0
    mirror = dispatch((-100, -300), 5.0, [], main_tube, aux, PRM)
    np.testing.assert_allclose(mirror.command, ready.command * [1, -1], atol=1e-12)
    with pytest.raises(ContractViolation):
        dispatch((600, 0), 5.0, [], main_tube, aux, PRM)


def test_dispatch_is_stateless(main_tube, aux):
    a = dispatch((-1e-9, 151.0), 5.0, [], main_tube, aux, PRM)
    b = dispatch((-1e-9, 151.0), 5.0, [], main_tube, aux, PRM)
    np.testing.assert_array_equal(a.command, b.command)


def test_flat_barrier_reduces_to_line_term(main_tube, aux):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        xi = rng.uniform((0.0, -100.0), (500.0, 100.0))
        vm = rng.uniform(1.0, 15.0)
        out = dispatch(xi, vm, [], main_tube, aux, PRM)
        line = term_line(tube_errors(xi, xi, main_tube)["xi_l"], PRM.k1, vm, main_tube.A_t23)
        np.testing.assert_array_equal(out.command, line)
        np.testing.assert_array_equal(out.keep_term, [0.0, 0.0])


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(-300, 600), st.floats(-400, 400)), min_size=1, max_size=6),
       st.floats(1.0, 15.0))
def test_command_norm_bounded(points, vm):
    tube = TubeSpec(np.array([0.0, 0.0]), np.array([500.0, 0.0]), 150.0)
    aux = build_aux_tubes(tube, 10000.0, 10000.0, 30.0)
    xi = np.array(points[0], float)
    if classify_regions(xi, tube)[0] == Region.PAST_FINISH:
        return
    others = [nb(q) for q in points[1:] if np.linalg.norm(np.subtract(q, xi)) > 1e-3]
    out = dispatch(xi, vm, others, tube, aux, PRM)
    assert np.linalg.norm(out.command) <= vm * (1 + 1e-12)


def test_helper_form_equals_compact_form(main_tube):
    rng = np.random.default_rng(1)
    for _ in range(200):
        xi = rng.uniform((300.0, 90.0), (400.0, 149.0))
        others = [xi + rng.uniform(-40, 40, 2) for _ in range(3)]
        vm = rng.uniform(3, 12)
        helper = tube_command(xi, vm, [nb(q) for q in others], main_tube, PRM).command
        e = tube_errors(xi, xi, main_tube)
        pp = PRM.potential
        inner = main_tube.A_t23 @ vec_sat(PRM.k1 * e["xi_l"], vm)
        for q in others:
            inner = inner - potentials.gain_b(np.linalg.norm(xi - q), pp) * (xi - q)
        c = potentials.gain_c(np.linalg.norm(e["xi_t"]), main_tube.r_t, pp)
        inner = inner + c * (main_tube.A_t12 @ e["xi_t"])
        compact = -vec_sat(inner, vm)
        np.testing.assert_allclose(helper, compact, rtol=1e-12, atol=1e-12)


def _random_swarm(rng, m):
    xi = rng.uniform((-300.0, -300.0), (480.0, 300.0), (m, 2))
    vm = rng.uniform(5.0, 15.0, m)
    return xi, vm


def test_batch_matches_per_uav(main_tube, aux):
    rng = np.random.default_rng(2)
    bank = TubeBank.build(main_tube, aux)
    xi, vm = _random_swarm(rng, 60)
    iu, ju = np.triu_indices(60, 1)
    close = np.linalg.norm(xi[iu] - xi[ju], axis=1) <= PRM.r_s + PRM.r_a
    rows, cols = directed_edges(iu[close], ju[close])
    tube_idx = TUBE_OF_REGION[classify_regions(xi, main_tube)]
    keep = tube_idx >= 0
    xi, vm, tube_idx = xi[keep], vm[keep], tube_idx[keep]
    m = len(xi)
    iu, ju = np.triu_indices(m, 1)
    close = np.linalg.norm(xi[iu] - xi[ju], axis=1) <= PRM.r_s + PRM.r_a
    rows, cols = directed_edges(iu[close], ju[close])
    batch = batch_commands(xi, vm, tube_idx, bank, PRM, rows, cols)
    for i in range(m):
        neigh = [nb(xi[j]) for j in sorted(cols[rows == i])]
        one = dispatch(xi[i], vm[i], neigh, main_tube, aux, PRM)
        np.testing.assert_array_equal(batch.command[i], one.command)
        np.testing.assert_array_equal(batch.avoid[i], one.avoid_term)


@pytest.mark.parametrize("chunks", [2, 3, 8, 64])
def test_chunking_bit_identical(main_tube, aux, chunks):
    rng = np.random.default_rng(4)
    bank = TubeBank.build(main_tube, aux)
    xi = rng.uniform((-100.0, -140.0), (450.0, 140.0), (50, 2))
    vm = rng.uniform(5.0, 15.0, 50)
    iu, ju = np.triu_indices(50, 1)
    close = np.linalg.norm(xi[iu] - xi[ju], axis=1) <= 50.0
    rows, cols = directed_edges(iu[close], ju[close])
    idx = TUBE_OF_REGION[classify_regions(xi, main_tube)]
    one = batch_commands(xi, vm, idx, bank, PRM, rows, cols)
    with ThreadPoolExecutor(4) as ex:
        many = batch_commands(xi, vm, idx, bank, PRM, rows, cols, executor=ex, chunks=chunks)
    np.testing.assert_array_equal(one.command, many.command)


def test_batch_rejects_past_finish(main_tube):
    bank = TubeBank.build(main_tube)
    with pytest.raises(ContractViolation):
        batch_commands(np.zeros((1, 2)), [5.0], [-1], bank, PRM)
    empty = batch_commands(np.zeros((0, 2)), [], np.zeros(0, int), bank, PRM)
    assert empty.command.shape == (0, 2)


def test_directed_edges_sorted():
    rows, cols = directed_edges([0, 1, 0], [2, 2, 1])
    assert list(zip(rows, cols)) == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
