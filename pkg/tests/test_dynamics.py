import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mp

from equishoot.dynamics import (
    CORNER_RADIUS,
    DomainError,
    State,
    SymmetryKind,
    XyzState,
    apply_symmetry,
    boundary_gauge,
    chart_inverse,
    chart_transform,
    double_product,
    eval_field,
    eval_field_xyz,
    make_rhs,
    sphere_volume,
    symmetry_state_map,
    triple_product,
    weight,
)
from equishoot.integrator import EventDef, IntegratorOptions, integrate

PI = math.pi
HALF_PI = math.pi / 2
QPI = math.pi / 4


def mp_field(r, th, al, n):
    """Extended-precision term-by-term oracle for the reduced field."""
    with mp.workdps(50):
        r, th, al = mp.mpf(r), mp.mpf(th), mp.mpf(al)
        dr = mp.cos(al)
        dth = mp.sin(al) / mp.sin(r)
        dal = (2 * n - 2) * mp.cos(2 * th) / mp.sin(2 * th) / mp.sin(r) * mp.cos(al) - (
            2 * n - 1
        ) * mp.cos(r) / mp.sin(r) * mp.sin(al)
        return float(dr), float(dth), float(dal)


interior_states = st.tuples(
    st.floats(0.2, PI - 0.2),
    st.floats(0.1, HALF_PI - 0.1),
    st.floats(-4.0, 4.0),
)


class TestEvalField:
    def test_axis_point(self):
        d = eval_field(State(HALF_PI, QPI, -HALF_PI), double_product(2))
        assert d.astuple() == pytest.approx((0.0, -1.0, 0.0), abs=1e-15)

    @pytest.mark.parametrize("n,r0", [(2, QPI), (2, 0.3), (3, 1.1), (5, 0.8)])
    def test_initial_slope_on_bisector(self, n, r0):
        # starting data (r0, pi/4, -pi/2) turns at rate (2n-1) cot(r0)
        d = eval_field(State(r0, QPI, -HALF_PI), double_product(n))
        assert d.dalpha == pytest.approx((2 * n - 1) / math.tan(r0), rel=1e-14)

    def test_against_extended_precision_oracle(self):
        d = eval_field(State(1.0, 0.5, -0.3), double_product(2))
        oracle = mp_field(1.0, 0.5, -0.3, 2)
        assert d.astuple() == pytest.approx(oracle, abs=1e-14)
        # frozen reference digits (rounded at source)
        assert d.astuple() == pytest.approx((0.95534, -0.35120, 2.02721), abs=2e-5)

    def test_triple_product_field(self):
        # same first two components; alpha-rate uses the triple-product weight
        st_ = State(0.7, 0.4, -0.9)
        d = eval_field(st_, triple_product())
        with mp.workdps(50):
            r, th, al = mp.mpf(0.7), mp.mpf(0.4), mp.mpf(-0.9)
            expected = float(
                2 * mp.cos(2 * th) / mp.sin(2 * th) / mp.sin(r) * mp.cos(al)
                - (2 + 4 * mp.cos(2 * r)) / mp.sin(2 * r) * mp.sin(al)
            )
        assert d.dalpha == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize(
        "state,params",
        [
            (State(0.0, QPI, 0.0), double_product(2)),
            (State(PI, QPI, 0.0), double_product(2)),
            (State(1.0, 0.0, 0.0), double_product(2)),
            (State(1.0, HALF_PI, 0.0), double_product(2)),
            (State(HALF_PI + 0.1, 0.3, 0.0), triple_product()),
        ],
    )
    def test_domain_errors(self, state, params):
        with pytest.raises(DomainError):
            eval_field(state, params)

    @settings(max_examples=200, deadline=None)
    @given(interior_states)
    def test_arc_length_constraint(self, p):
        d = eval_field(State(*p), double_product(2))
        assert abs(d.dr**2 + math.sin(p[0]) ** 2 * d.dtheta**2 - 1.0) < 1e-14

    @settings(max_examples=200, deadline=None)
    @given(interior_states, st.integers(2, 5))
    def test_equivariance_under_vartheta_reflection(self, p, n):
        r, th, al = p
        d = eval_field(State(r, th, al), double_product(n))
        dm = eval_field(State(r, HALF_PI - th, -al), double_product(n))
        assert dm.dr == pytest.approx(d.dr, abs=1e-13)
        assert dm.dtheta == pytest.approx(-d.dtheta, abs=1e-13)
        assert dm.dalpha == pytest.approx(-d.dalpha, abs=5e-13)


class TestSideChart:
    def test_unit_point(self):
        xyz = chart_transform(State(QPI, PI / 8, -QPI))
        assert xyz.astuple() == pytest.approx((1.0, 1.0, 1.0), abs=1e-14)

    def test_shot_start_maps_to_floor(self):
        xyz = chart_transform(State(0.8, QPI, -HALF_PI))
        assert xyz.astuple() == pytest.approx((math.tan(0.8), 0.0, 0.0), abs=1e-14)

    @settings(max_examples=150, deadline=None)
    @given(
        st.floats(0.05, HALF_PI - 0.05),
        st.floats(0.05, QPI),
        st.floats(-HALF_PI, -0.05),
    )
    def test_round_trip(self, r, th, al):
        p = State(r, th, al)
        q = chart_inverse(chart_transform(p))
        assert q.r == pytest.approx(p.r, abs=1e-12)
        assert q.theta == pytest.approx(p.theta, abs=1e-12)
        assert q.alpha == pytest.approx(p.alpha, abs=1e-12)

    def test_floor_field(self):
        dx, dy, dz = eval_field_xyz(XyzState(1.0, 0.0, 0.0), 2)
        assert dx == 0.0
        assert dz == pytest.approx(3.0, abs=1e-15)

    def test_field_against_direct_formula(self):
        d = eval_field_xyz(XyzState(1.0, 1.0, 1.0), 2)
        rt2 = math.sqrt(2.0)
        assert d == pytest.approx((rt2, 4.0, 4.0 + 3.0 * rt2), rel=1e-14)

    def test_monotone_octant(self):
        for x, y, z in [(0.5, 0.1, 0.2), (3.0, 1.0, 0.5), (10.0, 4.0, 2.0)]:
            d = eval_field_xyz(XyzState(x, y, z), 3)
            assert all(c >= 0.0 for c in d)

    def test_rejects_nonpositive_x(self):
        with pytest.raises(DomainError):
            eval_field_xyz(XyzState(0.0, 1.0, 1.0), 2)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(0.2, HALF_PI - 0.1),
        st.floats(0.1, QPI - 0.01),
        st.floats(-HALF_PI + 0.05, -0.1),
    )
    def test_chart_pushforward_matches_field(self, r, th, al):
        # finite-difference check of the chart differential along the flow
        p = (r, th, al)
        rhs = make_rhs(double_product(2))
        f = rhs(*p)
        h = 1e-6
        plus = chart_transform(State(*(p[i] + h * f[i] for i in range(3))))
        minus = chart_transform(State(*(p[i] - h * f[i] for i in range(3))))
        fd = [(a - b) / (2 * h) for a, b in zip(plus.astuple(), minus.astuple())]
        direct = eval_field_xyz(chart_transform(State(*p)), 2)
        scale = max(1.0, max(abs(v) for v in direct))
        assert fd == pytest.approx(direct, rel=1e-5, abs=1e-5 * scale)


class TestWeight:
    def test_double_product_equator(self):
        assert weight(HALF_PI, QPI, double_product(2)) == pytest.approx(
            2 * PI**2, rel=1e-14
        )

    def test_unit_sphere_volumes(self):
        assert sphere_volume(2) == pytest.approx(2 * PI, rel=1e-14)
        assert sphere_volume(3) == pytest.approx(4 * PI, rel=1e-14)

    @pytest.mark.parametrize("params", [double_product(2), double_product(3), triple_product()])
    def test_zero_on_boundary(self, params):
        assert weight(1.0, 0.0, params) == 0.0
        assert weight(0.0, 0.3, params) == 0.0

    def test_triple_product_value(self):
        assert weight(QPI, PI / 8, triple_product()) == pytest.approx(PI**3, rel=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.05, PI - 0.05), st.floats(0.05, HALF_PI - 0.05), st.integers(2, 4))
    def test_positive_interior_and_mirror_symmetric(self, r, th, n):
        params = double_product(n)
        w = weight(r, th, params)
        assert w > 0.0
        assert weight(PI - r, th, params) == pytest.approx(w, rel=1e-12)


class TestBoundaryGauge:
    def test_axis_normal_vanishes(self):
        _u, v = boundary_gauge(0.9, 0.0)
        assert v == 0.0

    def test_corner_radius_meets_arc(self):
        u, _v = boundary_gauge(CORNER_RADIUS, QPI)
        assert u == pytest.approx(1.0, abs=1e-15)

    def test_interior_point(self):
        u, v = boundary_gauge(QPI, QPI)
        assert u == pytest.approx(math.sqrt(2.0) / 2.0, rel=1e-14)
        assert v == pytest.approx(-math.atan(math.sqrt(2.0) / 2.0), rel=1e-14)

    def test_rejects_bad_radius(self):
        with pytest.raises(DomainError):
            boundary_gauge(HALF_PI, 0.1)


@pytest.fixture(scope="module")
def sample_trajectory():
    events = [EventDef(lambda s, y: y[1] - QPI, "vartheta-zero", -1, True)]
    return integrate(State(2 * PI / 3, QPI, PI / 36), double_product(2), events)


class TestSymmetries:

    def test_reflect_twice_is_identity_bitwise(self, sample_trajectory):
        twice = apply_symmetry(
            apply_symmetry(sample_trajectory, SymmetryKind.REFLECT_VARTHETA),
            SymmetryKind.REFLECT_VARTHETA,
        )
        _s0, y0 = sample_trajectory.sample_arrays
        _s1, y1 = twice.sample_arrays
        assert np.array_equal(y0, y1)

    @pytest.mark.parametrize("kind", list(SymmetryKind))
    def test_involution(self, sample_trajectory, kind):
        twice = apply_symmetry(apply_symmetry(sample_trajectory, kind), kind)
        s0, y0 = sample_trajectory.sample_arrays
        s1, y1 = twice.sample_arrays
        assert np.allclose(y0, y1, atol=1e-12)
        assert np.allclose(s0, s1, atol=1e-12)

    def test_central_time_reversal_swaps_endpoints(self, sample_trajectory):
        mapped = apply_symmetry(sample_trajectory, SymmetryKind.CENTRAL_TIME_REVERSED)
        start = sample_trajectory.initial_state
        end = mapped.exit.state_exit
        assert end.r == pytest.approx(PI - start.r, abs=1e-14)
        assert end.vartheta == pytest.approx(-start.vartheta, abs=1e-14)
        assert end.alpha == pytest.approx(start.alpha, abs=1e-14)

    @pytest.mark.parametrize("kind", list(SymmetryKind))
    def test_mapped_trajectory_still_solves_the_system(self, sample_trajectory, kind):
        mapped = apply_symmetry(sample_trajectory, kind)
        grid = np.linspace(0.01, sample_trajectory.s_exit - 0.01, 41)
        base = max(sample_trajectory.field_residual_at(s) for s in grid)
        grid_m = np.linspace(0.01, mapped.s_exit - 0.01, 41)
        mapped_res = max(mapped.field_residual_at(s) for s in grid_m)
        assert mapped_res <= base + 1e-12

    def test_central_symmetry_by_independent_integration(self):
        # map a solution through the central symmetry and re-integrate
        opts = IntegratorOptions(s_max=1.0, guard_alpha=False)
        fwd = integrate(State(2.0, 0.7, 0.3), double_product(2), [], opts)
        S = fwd.s_exit
        smap = symmetry_state_map(SymmetryKind.CENTRAL_TIME_REVERSED)
        start = smap(*fwd.raw_at(S))
        back = integrate(State(*start), double_product(2), [], opts)
        for s in np.linspace(0.0, S, 33):
            expected = smap(*fwd.raw_at(S - s))
            got = back.raw_at(s)
            assert got == pytest.approx(expected, abs=1e-8)
