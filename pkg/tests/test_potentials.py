import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vtube import checks
from vtube.geometry import TubeSpec
from vtube.potentials import (
    PotentialParams, Singularity, gain_b, gain_c, total_v, total_v_parts, v_l, v_m, v_t,
)

FIG = PotentialParams(r_s=10.0, r_a=20.0)


# independent scalar re-implementation, written straight from the formulas


def _bump(x, d1, d2):
    if x <= d1:
        return 1.0
    if x >= d2:
        return 0.0
    den = (d1 - d2) ** 3
    return (-2 * x**3 + 3 * (d1 + d2) * x**2 - 6 * d1 * d2 * x + d2**2 * (3 * d1 - d2)) / den


def _sat(x, e):
    x2 = 1 + e / math.tan(math.radians(67.5))
    x1 = x2 - math.sin(math.radians(45)) * e
    if x <= x1:
        return x
    if x >= x2:
        return 1.0
    return 1 - e + math.sqrt(e * e - (x - x2) ** 2)


def ref_vm(d, p):
    return p.k2 * _bump(d, 2 * p.r_s, p.r_s + p.r_a) / (
        (1 + p.eps_m) * d - 2 * p.r_s * _sat(d / (2 * p.r_s), p.eps_s))


def ref_vt(n, r_t, p):
    return p.k3 * _bump(r_t - n, p.r_s, p.r_a) / (
        (r_t - p.r_s) - n * _sat((r_t - p.r_s) / (n + p.eps_t), p.eps_s))


def ref_vl(n, k, a):
    return 0.5 * k * n * n if n <= a / k else a * a / (2 * k) + a * (n - a / k)


def test_params_validation():
    with pytest.raises(ValueError):
        PotentialParams(r_s=20.0, r_a=20.0)
    with pytest.raises(ValueError):
        PotentialParams(eps_m=0.0)
    assert PotentialParams().eps_t == 1e-6


def test_v_l_examples():
    p = PotentialParams()
    assert v_l(0.0, 5.0, p) == 0.0
    assert v_l(400.0, 5.0, p) == 1987.5
    assert v_l(1.0, 5.0, p) == 0.5


def test_v_m_examples():
    assert v_m(30.0, FIG) == 0.0
    assert v_m(50.0, FIG) == 0.0
    val = v_m(10.0, FIG)
    approx = FIG.k2 / (FIG.eps_m * 10.0)
    assert approx / 2 <= val <= approx * 2
    assert val == pytest.approx(ref_vm(10.0, FIG), rel=1e-6)
    with pytest.raises(Singularity):
        v_m(0.0, FIG)


def test_v_t_examples():
    assert v_t(20.0, 50.0, FIG) == 0.0
    assert v_t(0.0, 50.0, FIG) == 0.0
    val = v_t(45.0, 50.0, FIG)
    approx = (45.0 + 1e-6) / (1e-6 * 40.0)
    assert approx / 2 <= val <= approx * 2
    assert val == pytest.approx(ref_vt(45.0, 50.0, FIG), rel=1e-6)
    with pytest.raises(ValueError):
        v_t(-1.0, 50.0, FIG)


def test_gain_examples():
    assert gain_b(35.0, FIG) == 0.0
    assert gain_b(15.0, FIG) > 0.0
    h = 1e-6
    fd = (v_m(25.0 + h, FIG) - v_m(25.0 - h, FIG)) / (2 * h)
    assert gain_b(25.0, FIG) == pytest.approx(-fd / 25.0, rel=1e-5)
    assert gain_c(10.0, 50.0, FIG) == 0.0
    assert gain_c(0.0, 50.0, FIG) == 0.0
    fd = (v_t(35.0 + h, 50.0, FIG) - v_t(35.0 - h, 50.0, FIG)) / (2 * h)
    assert gain_c(35.0, 50.0, FIG) == pytest.approx(fd / 35.0, rel=1e-5)


@pytest.mark.parametrize("params", [
    PotentialParams(), FIG, PotentialParams(r_s=5.0, r_a=7.5),
    PotentialParams(eps_s=0.1, eps_m=0.01, eps_t=0.01),
    PotentialParams(eps_s=1e-3, eps_m=1e-3, eps_t=1e-3, k2=3.0, k3=0.5),
])
def test_gains_match_fd(params):
    rng = np.random.default_rng(7)
    assert checks.gain_b_fd_error(params, rng) <= 1e-5
    for r_t in (params.r_a + 5.0, 150.0, 10000.0):
        assert checks.gain_c_fd_error(params, r_t, rng) <= 1e-5


@given(st.floats(0.5, 200.0))
def test_v_m_zero_iff_outside_support(d):
    assert (v_m(d, FIG) == 0.0) == (d >= FIG.r_s + FIG.r_a)


@given(st.floats(0.0, 49.0))
def test_v_t_finite_and_nonnegative(n):
    val = v_t(n, 50.0, FIG)
    assert math.isfinite(val) and val >= 0.0


@given(st.floats(1e-6, 200.0))
def test_v_m_finite(d):
    assert math.isfinite(v_m(d, FIG)) and v_m(d, FIG) >= 0.0
    assert math.isfinite(gain_b(d, FIG)) and gain_b(d, FIG) >= 0.0


def test_monotone_on_grids():
    d = np.linspace(0.01, 60.0, 200001)
    assert np.all(np.diff(v_m(d, FIG)) <= 0.0)
    n = np.linspace(0.0, 60.0, 200001)
    assert np.all(np.diff(v_t(n, 50.0, FIG)) >= 0.0)


def test_matches_reference_formulas():
    rng = np.random.default_rng(3)
    p = PotentialParams()
    for d in rng.uniform(40.5, 60.0, 200):
        assert v_m(d, p) == pytest.approx(ref_vm(d, p), rel=1e-9, abs=1e-300)
    for n in rng.uniform(0.0, 129.0, 200):
        assert v_t(n, 150.0, p) == pytest.approx(ref_vt(n, 150.0, p), rel=1e-9, abs=1e-300)


def test_total_v_trivial_cases(main_tube):
    p = PotentialParams()
    assert total_v(np.array([[500.0, 0.0]]), 5.0, main_tube, p) == 0.0
    xi = np.array([[100.0, 10.0], [300.0, -20.0]])
    vm = np.array([5.0, 6.0])
    expect = ref_vl(400.0, 1.0, 5.0) + ref_vl(200.0, 1.0, 6.0)
    assert total_v(xi, vm, main_tube, p) == pytest.approx(expect, rel=1e-15)
    assert total_v(np.zeros((0, 2)), 5.0, main_tube, p) == 0.0


def test_total_v_independent_sum():
    tube = TubeSpec(np.array([0.0, 0.0]), np.array([500.0, 0.0]), 150.0)
    p = PotentialParams()
    rng = np.random.default_rng(5)
    for _ in range(20):
        xi = np.array([[200.0, 100.0], [230.0, 120.0], [215.0, 85.0]]) + rng.uniform(-3, 3, (3, 2))
        vm = rng.uniform(5, 10, 3)
        expect = 0.0
        for i in range(3):
            rel = xi[i] - tube.p_t2
            expect += ref_vl(abs(rel[0]), p.k1, vm[i]) + ref_vt(abs(rel[1]), 150.0, p)
            for j in range(3):
                if j != i:
                    expect += 0.5 * ref_vm(float(np.linalg.norm(xi[i] - xi[j])), p)
        assert total_v(xi, vm, tube, p) == pytest.approx(expect, rel=1e-9)


def test_total_v_permutation_invariant(main_tube):
    rng = np.random.default_rng(9)
    p = PotentialParams()
    xi = rng.uniform((100, -100), (200, 100), (5, 2))
    vm = rng.uniform(5, 10, 5)
    base = total_v(xi, vm, main_tube, p)
    for perm in itertools.islice(itertools.permutations(range(5)), 30):
        perm = list(perm)
        assert total_v(xi[perm], vm[perm], main_tube, p) == pytest.approx(base, rel=1e-13)


def test_total_v_parts_agrees(main_tube):
    p = PotentialParams()
    xi = np.array([[250.0, 10.0], [270.0, 25.0], [260.0, -120.0]])
    vm = np.array([5.0, 6.0, 7.0])
    rel = xi - main_tube.p_t2
    iu, ju = np.triu_indices(3, 1)
    d = np.linalg.norm(xi[iu] - xi[ju], axis=1)
    parts = total_v_parts(np.abs(rel[:, 0]), np.abs(rel[:, 1]), d, vm, 150.0, p)
    assert parts == total_v(xi, vm, main_tube, p)
