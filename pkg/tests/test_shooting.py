import math

import numpy as np
import pytest

from equishoot.dynamics import (
    CORNER_RADIUS,
    State,
    SymmetryKind,
    boundary_gauge,
    double_product,
    symmetry_state_map,
)
from equishoot.integrator import ExitKind, IntegratorOptions, integrate
from equishoot.lemma_lab import roof_constant
from equishoot.shooting import (
    BracketNotFound,
    ShotKind,
    classify_torus_shot,
    find_infty_figure,
    find_t4_corner,
    find_torus_corner,
    first_return,
    iteration_ladder,
    ladder_shot_to_axis,
    probe_turning,
    t4_shot,
    torus_shot,
)

PI = math.pi
HALF_PI = math.pi / 2
QPI = math.pi / 4


class TestClassification:
    def test_published_roof_shot(self):
        assert classify_torus_shot(0.3927, 2).kind == ShotKind.ROOF

    def test_published_side_shot(self):
        assert classify_torus_shot(1.4923, 2).kind == ShotKind.SIDE

    def test_small_radius_roof_bound(self):
        cn = roof_constant(2)
        assert cn == pytest.approx(213.1, abs=0.1)
        traj = torus_shot(0.01, 2)
        assert traj.exit.kind is ExitKind.ROOF
        assert traj.exit.state_exit.r <= cn * 0.01

    @pytest.mark.parametrize("n", [2, 3])
    def test_dichotomy_over_radius_sweep(self, n):
        # every valid shot leaves through the roof or the side, above theta = 0
        for r0 in np.linspace(0.05, HALF_PI - 0.05, 24):
            traj = torus_shot(float(r0), n)
            assert traj.exit.kind in (ExitKind.ROOF, ExitKind.SIDE)
            assert traj.exit.state_exit.theta > 0.0


class TestTorusCorner:
    def test_published_corner_data(self, corner_n2):
        assert corner_n2.r0_star == pytest.approx(1.2321, abs=0.01)
        assert corner_n2.theta_exit == pytest.approx(0.1891, abs=0.01)

    def test_corner_hits_both_faces(self, corner_n2):
        st = corner_n2.quarter.exit.state_exit
        assert abs(st.alpha) < 1e-8
        assert abs(st.r - HALF_PI) < 1e-8

    def test_three_dimensional_corner_exists(self, corner_n3):
        assert 0.0 < corner_n3.r0_star < HALF_PI
        st = corner_n3.quarter.exit.state_exit
        assert abs(st.alpha) < 1e-8 and abs(st.r - HALF_PI) < 1e-8

    def test_bracket_property(self, corner_n2):
        tol = 1e-8
        assert classify_torus_shot(corner_n2.r0_star - 10 * tol, 2).kind == ShotKind.ROOF
        assert classify_torus_shot(corner_n2.r0_star + 10 * tol, 2).kind == ShotKind.SIDE

    def test_corner_classification(self, corner_n2):
        assert classify_torus_shot(corner_n2.r0_star, 2).kind == ShotKind.CORNER


class TestFirstReturn:
    def test_published_peak_marker(self):
        rep = first_return(2 * PI / 3, PI / 36, 2)
        assert rep.returned
        peak = rep.trajectory.records[0].state
        assert peak.r == pytest.approx(2.854, abs=0.01)
        assert peak.theta == pytest.approx(0.9725, abs=0.01)
        assert rep.vartheta_max == pytest.approx(0.187, abs=0.01)

    def test_large_angle_does_not_return(self):
        rep = first_return(2 * PI / 3, HALF_PI - 1e-3, 2)
        assert not rep.returned
        end = rep.trajectory.exit.state_exit
        assert rep.trajectory.exit.kind is ExitKind.BLOW_UP
        assert abs(end.alpha - HALF_PI) < 1e-6
        assert end.vartheta > 0.0

    @pytest.mark.parametrize("r0,alpha0", [(2 * PI / 3, PI / 36), (2.2, 0.05), (2.9, 0.01)])
    def test_return_angle_growth(self, r0, alpha0):
        rep = first_return(r0, alpha0, 2)
        assert rep.returned
        bound = max(1.0, 1.5 * abs(math.cos(r0)))
        assert abs(rep.alpha_at_return / alpha0) >= bound - 1e-9

    def test_reflected_continuation_is_smooth(self):
        # reflecting the return closes up with the actual continuation
        rep = first_return(2 * PI / 3, PI / 36, 2)
        end = rep.trajectory.exit.state_exit
        opts = IntegratorOptions(s_max=0.5, guard_alpha=False)
        cont = integrate(State(end.r, end.theta, end.alpha), double_product(2), [], opts)
        smap = symmetry_state_map(SymmetryKind.REFLECT_VARTHETA)
        mirrored = integrate(State(*smap(end.r, end.theta, end.alpha)), double_product(2), [], opts)
        for s in np.linspace(0.0, 0.5, 21):
            a = np.array(cont.raw_at(s))
            b = np.array(smap(*mirrored.raw_at(s)))
            assert np.max(np.abs(a - b)) < 1e-9


class TestInftyFigure:
    @pytest.mark.parametrize("fixture_name", ["infty_n2", "infty_n3"])
    def test_contract(self, fixture_name, request):
        fig = request.getfixturevalue(fixture_name)
        assert 0.0 < fig.alpha_infty < HALF_PI
        assert HALF_PI < fig.r_infty < PI
        upper, lower = fig.halves
        assert upper.initial_state.r == pytest.approx(HALF_PI, abs=1e-12)
        assert upper.initial_state.vartheta == pytest.approx(0.0, abs=1e-9)
        assert upper.initial_state.alpha == pytest.approx(fig.alpha_infty, abs=1e-9)
        end = upper.exit.state_exit
        assert end.r == pytest.approx(fig.r_infty, abs=1e-6)
        assert end.alpha == pytest.approx(-HALF_PI, abs=1e-6)

    def test_separatrix_matches_first_check_angle(self, infty_n2, ladder_n2):
        # measured, not asserted tightly: the two routes should agree closely
        gap = abs(ladder_n2.rungs[0].alpha_check - infty_n2.alpha_infty)
        print(f"|alpha_check(1) - alpha_infty| = {gap:.3e}")
        assert gap < 1e-6


class TestIterationLadder:
    def test_interleaving_and_counts(self, ladder_n2):
        r = ladder_n2.rungs
        assert r[1].alpha_check < r[0].alpha_hat < r[0].alpha_check
        assert (r[0].crossings_hat, r[0].crossings_check) == (2, 2)
        assert (r[1].crossings_hat, r[1].crossings_check) == (3, 3)

    def test_first_check_rung_limits_to_vertical_axis_exit(self, ladder_n2):
        half = ladder_shot_to_axis(2, ladder_n2.rungs[0].alpha_check, 1)
        end = half.exit.state_exit
        assert abs(end.vartheta) < 1e-11
        assert end.alpha == pytest.approx(-HALF_PI, abs=1e-9)

    def test_hat_rung_limits_to_domain_corner(self, ladder_n2):
        from equishoot.geometry import corner_limit_certificate

        vt_lim, al_lim = corner_limit_certificate(ladder_n2.rungs[0].hat_trajectory)
        assert vt_lim == pytest.approx(QPI, abs=1e-3)
        assert al_lim == pytest.approx(HALF_PI, abs=1e-3)

    def test_sequences_decay(self, ladder_n2):
        hats = ladder_n2.alpha_hats
        checks = ladder_n2.alpha_checks
        assert all(b < a for a, b in zip(hats, hats[1:]))
        assert all(b < a for a, b in zip(checks, checks[1:]))
        assert hats[3] < hats[0] / 2.0

    def test_three_dimensional_ladder(self, ladder_n3):
        r = ladder_n3.rungs
        assert r[1].alpha_check < r[0].alpha_hat < r[0].alpha_check
        assert all(rung.crossings_check == rung.k + 1 for rung in r)

    def test_no_recovery_rung_for_n4(self):
        with pytest.raises(BracketNotFound):
            iteration_ladder(4, 1, scan_points=24)


class TestT4Corner:
    def test_published_shot_classification(self):
        roof = t4_shot(0.1571)
        assert roof.exit.kind is ExitKind.ROOF
        boundary = t4_shot(0.9053)
        assert boundary.exit.kind is ExitKind.APPENDIX_BOUNDARY
        st = boundary.exit.state_exit
        _u, v = boundary_gauge(st.r, st.theta)
        assert st.alpha < v

    def test_corner_location(self, t4_corner):
        assert t4_corner.r0_star == pytest.approx(0.61, abs=0.02)
        st = t4_corner.quarter.exit.state_exit
        u, v = boundary_gauge(st.r, st.theta)
        assert abs(u - 1.0) < 1e-8
        assert abs(st.alpha - v) < 1e-8

    def test_rejects_radius_outside_domain(self):
        with pytest.raises(ValueError):
            t4_shot(CORNER_RADIUS + 0.01)


class TestTurningProbe:
    def test_all_clockwise_for_n4(self):
        for a0 in np.geomspace(1e-6, HALF_PI - 1e-3, 30):
            probe = probe_turning(4, float(a0))
            assert probe.outcome == "clockwise"

    def test_both_outcomes_for_n2(self):
        outcomes = {
            probe_turning(2, float(a0)).outcome
            for a0 in np.geomspace(1e-6, HALF_PI - 1e-3, 30)
        }
        assert {"clockwise", "anticlockwise"} <= outcomes

    def test_small_angle_recovers_anticlockwise(self, ladder_n2):
        # the recovery regime is bounded by the first hat angle
        probe = probe_turning(2, ladder_n2.rungs[0].alpha_hat / 2.0)
        assert probe.outcome == "anticlockwise"

    def test_above_first_hat_angle_turns_clockwise(self, ladder_n2):
        probe = probe_turning(2, 2.0 * ladder_n2.rungs[0].alpha_hat)
        assert probe.outcome == "clockwise"
