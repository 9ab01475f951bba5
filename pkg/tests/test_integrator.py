import math

import numpy as np
import pytest

from equishoot.dynamics import State, double_product, make_rhs
from equishoot.integrator import (
    EventDef,
    ExitKind,
    IntegratorOptions,
    NoCrossing,
    Trajectory,
    integrate,
    locate_event,
    resample,
    roof_event,
    side_event,
)

PI = math.pi
HALF_PI = math.pi / 2
QPI = math.pi / 4

# reference polyline of the published n=2 corner quarter (r, theta)
CORNER_QUARTER_POLYLINE = np.array([
    (1.2321, 0.7854), (1.2323, 0.7699), (1.2326, 0.7545), (1.2332, 0.7390),
    (1.2340, 0.7236), (1.2350, 0.7082), (1.2363, 0.6928), (1.2378, 0.6774),
    (1.2395, 0.6621), (1.2414, 0.6468), (1.2436, 0.6316), (1.2460, 0.6164),
    (1.2486, 0.6013), (1.2515, 0.5862), (1.2546, 0.5712), (1.2580, 0.5563),
    (1.2616, 0.5414), (1.2655, 0.5267), (1.2696, 0.5120), (1.2740, 0.4974),
    (1.2786, 0.4830), (1.2835, 0.4686), (1.2887, 0.4544), (1.2941, 0.4403),
    (1.2998, 0.4264), (1.3059, 0.4126), (1.3122, 0.3990), (1.3188, 0.3856),
    (1.3257, 0.3723), (1.3329, 0.3593), (1.3405, 0.3465), (1.3484, 0.3339),
    (1.3567, 0.3216), (1.3654, 0.3096), (1.3744, 0.2979), (1.3839, 0.2865),
    (1.3938, 0.2756), (1.4041, 0.2651), (1.4148, 0.2550), (1.4259, 0.2454),
    (1.4375, 0.2364), (1.4494, 0.2280), (1.4618, 0.2203), (1.4746, 0.2133),
    (1.4877, 0.2070), (1.5012, 0.2016), (1.5151, 0.1971), (1.5292, 0.1936),
    (1.5436, 0.1910), (1.5581, 0.1895), (HALF_PI, 0.1891),
])


def torus_events():
    return [roof_event(), side_event()]


def torus_shot(r0, n=2, options=None):
    return integrate(
        State(r0, QPI, -HALF_PI), double_product(n), torus_events(), options or IntegratorOptions()
    )


class TestExits:
    def test_roof_exit(self):
        traj = torus_shot(0.3927)
        assert traj.exit.kind is ExitKind.ROOF
        assert abs(traj.exit.state_exit.alpha) < 1e-11

    def test_side_exit(self):
        traj = torus_shot(1.4923)
        assert traj.exit.kind is ExitKind.SIDE
        assert abs(traj.exit.state_exit.r - HALF_PI) < 1e-11

    def test_near_corner_exit(self):
        traj = torus_shot(1.2321)
        st = traj.exit.state_exit
        assert abs(st.r - HALF_PI) < 0.01
        assert abs(st.theta - 0.1891) < 0.01

    def test_step_limit(self):
        traj = integrate(
            State(1.0, QPI, -HALF_PI),
            double_product(2),
            [],
            IntegratorOptions(s_max=0.25),
        )
        assert traj.exit.kind is ExitKind.STEP_LIMIT
        assert traj.s_exit == pytest.approx(0.25, abs=1e-12)

    def test_blow_up_guard_keeps_interior_state(self):
        # non-returning centre shot runs into the |alpha| = pi/2 stratum
        traj = integrate(
            State(2 * PI / 3, QPI, 1.2), double_product(2), []
        )
        assert traj.exit.kind is ExitKind.BLOW_UP
        st = traj.exit.state_exit
        dist = HALF_PI - abs(st.alpha)
        assert 0.0 < dist <= 1.001e-9

    def test_rejects_exterior_initial_state(self):
        from equishoot.dynamics import DomainError

        with pytest.raises(DomainError):
            integrate(State(-0.1, QPI, 0.0), double_product(2), [])


class TestEventLocation:
    def test_alpha_crossing_within_tolerance(self):
        traj = torus_shot(0.3927)
        assert abs(traj.exit.state_exit.alpha) < 1e-11

    def test_first_return_against_fixed_step_oracle(self):
        # independent oracle: classical RK4 at a small fixed step
        rhs = make_rhs(double_product(2))
        h = 1e-4
        y = np.array([2 * PI / 3, QPI, PI / 36])
        s = 0.0
        prev_vt = 0.0
        sigma_oracle = None
        for i in range(200000):
            k1 = np.array(rhs(*y))
            k2 = np.array(rhs(*(y + 0.5 * h * k1)))
            k3 = np.array(rhs(*(y + 0.5 * h * k2)))
            k4 = np.array(rhs(*(y + h * k3)))
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            s += h
            vt = y[1] - QPI
            if s > 0.1 and prev_vt > 0.0 >= vt:
                sigma_oracle = s - h * vt / (vt - prev_vt)  # linear inverse step
                break
            prev_vt = vt
        assert sigma_oracle is not None

        events = [EventDef(lambda s, y: y[1] - QPI, "vartheta-zero", -1, True)]
        traj = integrate(State(2 * PI / 3, QPI, PI / 36), double_product(2), events)
        assert abs(traj.exit.state_exit.vartheta) < 1e-11
        assert traj.exit.s_exit == pytest.approx(sigma_oracle, abs=1e-6)

    def test_agrees_with_bisection_fallback(self):
        traj = torus_shot(0.3927)
        seg = next(
            seg
            for seg in traj.dense
            if seg.eval(seg.s0)[2] < 0.0 <= seg.eval(seg.s1)[2]
        )
        fn = lambda s, y: y[2]
        s_brent = locate_event(seg, fn, +1)
        lo, hi = seg.s0, seg.s1
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if fn(mid, seg.eval(mid)) < 0.0:
                lo = mid
            else:
                hi = mid
        assert abs(s_brent - 0.5 * (lo + hi)) < 1e-12

    def test_no_crossing_raises(self):
        traj = torus_shot(0.3927)
        seg = traj.dense[0]
        with pytest.raises(NoCrossing):
            locate_event(seg, lambda s, y: y[0] + 10.0, 0)


class TestResample:
    def test_two_points_are_endpoints(self):
        traj = torus_shot(1.2321)
        pts = resample(traj, 2)
        assert pts[0][0] == 0.0
        assert pts[0][1] == traj.initial_state
        assert pts[1][1] == traj.exit.state_exit

    def test_matches_published_polyline(self, corner_n2):
        from equishoot.geometry import polyline_min_distances

        pts = resample(corner_n2.quarter, 1001)
        ours = np.array([[st.r, st.theta] for _s, st in pts])
        dists = polyline_min_distances(CORNER_QUARTER_POLYLINE, ours)
        assert float(dists.max()) < 0.01

    def test_consistent_under_tolerance_refinement(self):
        traj = torus_shot(0.9)
        tight = torus_shot(0.9, options=IntegratorOptions().with_tolerances(0.5))
        s_common = 0.95 * min(traj.s_exit, tight.s_exit)
        for s, st in resample(traj, 101):
            if s > s_common:
                break
            ref = tight.state_at(s)
            assert st.r == pytest.approx(ref.r, abs=1e-7)
            assert st.theta == pytest.approx(ref.theta, abs=1e-7)
            assert st.alpha == pytest.approx(ref.alpha, abs=1e-7)

    def test_rejects_single_point(self):
        traj = torus_shot(0.9)
        with pytest.raises(ValueError):
            resample(traj, 1)


class TestInvariants:
    @pytest.mark.parametrize("r0", [0.2, 0.7, 1.2, 1.5])
    def test_monotone_coordinates_in_shooting_box(self, r0):
        traj = torus_shot(r0)
        rhs = make_rhs(double_product(2))
        _s, y = traj.sample_arrays
        for row in y:
            dr, dth, dal = rhs(*row)
            assert dr >= -1e-14
            assert dth <= 1e-14
            assert dal >= -1e-12

    def test_constraint_transport(self):
        traj = torus_shot(0.9)
        rhs = make_rhs(double_product(2))
        _s, y = traj.sample_arrays
        for row in y:
            dr, dth, _ = rhs(*row)
            assert abs(dr - math.cos(row[2])) < 1e-10
            assert abs(math.sin(row[0]) * dth - math.sin(row[2])) < 1e-10
        assert traj.stats.max_constraint_residual < 1e-8

    def test_exit_stable_under_tolerance_halving(self):
        a = torus_shot(0.9).exit.state_exit
        b = torus_shot(0.9, options=IntegratorOptions().with_tolerances(0.5)).exit.state_exit
        assert abs(a.r - b.r) < 1e-10
        assert abs(a.theta - b.theta) < 1e-10
        assert abs(a.alpha - b.alpha) < 1e-10

    def test_continuous_dependence_on_initial_radius(self):
        a = torus_shot(0.9).exit.state_exit
        b = torus_shot(0.9 + 1e-9).exit.state_exit
        assert abs(a.r - b.r) < 1e-6
        assert abs(a.theta - b.theta) < 1e-6
        assert abs(a.alpha - b.alpha) < 1e-6

    def test_dense_output_accuracy(self):
        # local error of state queries stays below 10x the step tolerance
        traj = torus_shot(1.1)
        ref = torus_shot(1.1, options=IntegratorOptions().with_tolerances(1e-3))
        tol = 10.0 * (1e-12 + 1e-10 * PI)
        for s in np.linspace(0.05, 0.95 * traj.s_exit, 37):
            a = np.array(traj.raw_at(s))
            b = np.array(ref.raw_at(s))
            assert np.max(np.abs(a - b)) < tol

    def test_samples_strictly_increasing_from_zero(self):
        traj = torus_shot(1.1)
        s, _y = traj.sample_arrays
        assert s[0] == 0.0
        assert np.all(np.diff(s) > 0)
