"""Continuity and shooting constructions on the reduced systems.

Every construction reduces to locating a sign change of a continuous
functional of the initial datum along a one-parameter family of shots
(coarse scan, then safeguarded root refinement).  The functionals are
chosen so that their roots are exactly the boundary-value data of interest:
corner shots meeting two exit faces at once, separatrices between returning
and non-returning centre shots, and the interleaved ladder of initial
angles whose trajectories cross the bisector a prescribed number of times.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .dynamics import (
    CORNER_RADIUS,
    HALF_PI,
    PI,
    QUARTER_PI,
    State,
    SymmetryKind,
    SystemParams,
    apply_symmetry,
    boundary_gauge,
    double_product,
    make_rhs,
    triple_product,
)
from .integrator import (
    EventDef,
    ExitKind,
    IntegratorOptions,
    Trajectory,
    appendix_boundary_event,
    integrate,
    roof_event,
    side_event,
    theta_min_event,
)


class BracketNotFound(RuntimeError):
    """The coarse scan found no sign change; the sought transition is absent."""


class RungToleranceExceeded(RuntimeError):
    """Crossing counts of a ladder rung are ambiguous at the given tolerance."""


# leg overshoot used by the unguarded ladder functionals; must exceed any
# event tolerance but stay below the next angle branch
_ALPHA_CAP = HALF_PI + 0.35


def _first_bracket(
    grid: Sequence[float],
    values: Sequence[float],
    label: str,
    from_above: bool = False,
) -> Tuple[float, float]:
    pairs = [
        (grid[i], grid[i + 1])
        for i in range(len(grid) - 1)
        if values[i] * values[i + 1] < 0.0
    ]
    if not pairs:
        raise BracketNotFound(f"{label}: no sign change over scan of {len(grid)} shots")
    if len(pairs) > 1:
        warnings.warn(
            f"{label}: {len(pairs)} sign changes in scan; taking the "
            f"{'highest' if from_above else 'lowest'} bracket",
            stacklevel=2,
        )
    return pairs[-1] if from_above else pairs[0]


def _refine(fn: Callable[[float], float], a: float, b: float) -> float:
    return brentq(fn, a, b, xtol=1e-15, rtol=8.9e-16)


# ---------------------------------------------------------------------------
# Closed-orbit corner shots (double product)


class ShotKind:
    ROOF = "roof"
    SIDE = "side"
    CORNER = "corner"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class ShotClass:
    kind: str
    tol: float = 0.0
    detail: str = ""


def torus_shot(r0: float, n: int, options: Optional[IntegratorOptions] = None) -> Trajectory:
    """Shot from (r0, pi/4, -pi/2) stopped at the roof (alpha = 0) or side (r = pi/2)."""
    if not 0.0 < r0 < HALF_PI:
        raise ValueError(f"r0 must lie in (0, pi/2), got {r0!r}")
    params = double_product(n)
    return integrate(
        State(r0, QUARTER_PI, -HALF_PI),
        params,
        [roof_event(), side_event()],
        options or IntegratorOptions(),
    )


def classify_torus_shot(
    r0: float,
    n: int,
    tol: float = 1e-8,
    options: Optional[IntegratorOptions] = None,
) -> ShotClass:
    traj = torus_shot(r0, n, options)
    exit_ = traj.exit
    st = exit_.state_exit
    near_roof = abs(st.alpha) <= tol
    near_side = abs(st.r - HALF_PI) <= tol
    if near_roof and near_side:
        return ShotClass(ShotKind.CORNER, tol)
    if exit_.kind is ExitKind.ROOF:
        return ShotClass(ShotKind.ROOF)
    if exit_.kind is ExitKind.SIDE:
        return ShotClass(ShotKind.SIDE)
    return ShotClass(ShotKind.UNDETERMINED, detail=f"{exit_.kind.value}: {exit_.detail}")


@dataclass(frozen=True)
class CornerResult:
    r0_star: float
    quarter: Trajectory
    bracket: Tuple[float, float]
    theta_exit: float


def _corner_gap(traj: Trajectory) -> float:
    """Signed distance functional vanishing exactly on corner shots."""
    st = traj.exit.state_exit
    if traj.exit.kind is ExitKind.ROOF:
        return HALF_PI - st.r      # roof exits stop short of the side
    if traj.exit.kind is ExitKind.SIDE:
        return st.alpha            # side exits carry alpha < 0
    raise BracketNotFound(
        f"shot ended in {traj.exit.kind.value} ({traj.exit.detail}); "
        "roof/side dichotomy violated"
    )


def find_torus_corner(
    n: int,
    tol: float = 1e-8,
    options: Optional[IntegratorOptions] = None,
    scan_points: int = 64,
) -> CornerResult:
    """Initial radius whose shot exits through the roof-side corner.

    The closed orbit of the lifted hypertorus is this quarter arc reflected
    across both axes of the planar domain.
    """
    opts = options or IntegratorOptions()

    def gap(r0: float) -> float:
        return _corner_gap(torus_shot(r0, n, opts))

    margin = 0.05
    grid = np.linspace(margin, HALF_PI - margin, scan_points)
    values = [gap(r) for r in grid]
    a, b = _first_bracket(grid, values, f"torus corner (n={n})")
    r0_star = _refine(gap, a, b)
    quarter = torus_shot(r0_star, n, opts)
    st = quarter.exit.state_exit
    if abs(st.alpha) > tol or abs(st.r - HALF_PI) > tol:
        raise BracketNotFound(
            f"refined corner shot misses the corner: |alpha|={abs(st.alpha):.3e}, "
            f"|r - pi/2|={abs(st.r - HALF_PI):.3e} > tol={tol:.1e}"
        )
    return CornerResult(r0_star, quarter, (a, b), st.theta)


# ---------------------------------------------------------------------------
# First-return analysis of centre shots (shifted variable vartheta)


@dataclass(frozen=True)
class ReturnReport:
    returned: bool
    sigma: float
    alpha_at_return: float
    s2: float
    vartheta_max: float
    trajectory: Trajectory


def first_return(
    r0: float,
    alpha0: float,
    n: int,
    options: Optional[IntegratorOptions] = None,
) -> ReturnReport:
    """Integrate from (r0, vartheta=0, alpha0) to the first vartheta = 0 return.

    The interior alpha = 0 event (where vartheta peaks) is recorded as s2.
    Non-returning shots end in a blow-up exit and report returned = False.
    """
    if not HALF_PI <= r0 < PI:
        raise ValueError(f"r0 must lie in [pi/2, pi), got {r0!r}")
    if not 0.0 < alpha0 < HALF_PI:
        raise ValueError(f"alpha0 must lie in (0, pi/2), got {alpha0!r}")
    params = double_product(n)
    events = [
        EventDef(lambda s, y: y[1] - QUARTER_PI, "vartheta-zero", -1, True),
        EventDef(lambda s, y: y[2], "alpha-zero", -1, False),
    ]
    traj = integrate(State(r0, QUARTER_PI, alpha0), params, events, options or IntegratorOptions())
    s2 = math.nan
    vartheta_max = math.nan
    for rec in traj.records:
        if rec.kind == "alpha-zero":
            s2 = rec.s
            vartheta_max = rec.state.vartheta
            break
    if traj.exit.kind is ExitKind.VARTHETA_ZERO:
        return ReturnReport(
            True, traj.exit.s_exit, traj.exit.state_exit.alpha, s2, vartheta_max, traj
        )
    return ReturnReport(False, math.nan, math.nan, s2, vartheta_max, traj)


# ---------------------------------------------------------------------------
# Ladder shots: unguarded-in-alpha centre shots with crossing bookkeeping


def _ladder_options(base: Optional[IntegratorOptions]) -> IntegratorOptions:
    opts = base or IntegratorOptions()
    if not opts.guard_alpha:
        return opts
    return IntegratorOptions(
        tol_abs=opts.tol_abs,
        tol_rel=opts.tol_rel,
        tol_event=opts.tol_event,
        s_max=opts.s_max,
        eps_bdry=opts.eps_bdry,
        min_step=opts.min_step,
        max_steps=opts.max_steps,
        first_step=opts.first_step,
        guard_alpha=False,
    )


def _run_to_crossing(
    params: SystemParams,
    start: State,
    k: int,
    opts: IntegratorOptions,
) -> Trajectory:
    """Centre-shot leg dynamics up to the k-th vartheta = 0 crossing.

    alpha is unwrapped and deliberately unguarded at +-pi/2 so that the
    crossing angle is a continuous function of the initial angle across the
    separatrices; hard caps slightly beyond +-pi/2 terminate dead legs.
    """
    events = [
        EventDef(lambda s, y: y[1] - QUARTER_PI, "vartheta-zero", 0, True, None, k),
        EventDef(lambda s, y: y[2] - _ALPHA_CAP, "cap-plus", +1, True),
        EventDef(lambda s, y: -_ALPHA_CAP - y[2], "cap-minus", +1, True),
    ]
    return integrate(start, params, events, opts)


def _crossing_angle_gap(params: SystemParams, alpha0: float, k: int, opts: IntegratorOptions) -> float:
    """(-1)^k alpha(sigma_k) - pi/2; its root is the k-th check angle."""
    traj = _run_to_crossing(params, State(HALF_PI, QUARTER_PI, alpha0), k, opts)
    if traj.exit.detail != "vartheta-zero":
        return 1.0  # leg died before completing k crossings: above-side sign
    sgn = -1.0 if k % 2 else 1.0
    return sgn * traj.exit.state_exit.alpha - HALF_PI


def _leg_peak_gap(params: SystemParams, alpha0: float, k: int, opts: IntegratorOptions) -> float:
    """pi/2 - max of (-1)^k alpha over the k-th leg; its root is the k-th hat angle.

    Positive when the leg recovers (alpha turns around before the cap),
    negative when it runs past +-pi/2.
    """
    traj = _run_to_crossing(params, State(HALF_PI, QUARTER_PI, alpha0), k, opts)
    if traj.exit.detail != "vartheta-zero":
        return -1.0
    sgn = -1.0 if k % 2 else 1.0
    start = traj.exit.state_exit
    rhs = make_rhs(params)
    events = [
        EventDef(lambda s, y: y[2], "recovery", -int(sgn), True),
        EventDef(lambda s, y: rhs(y[0], y[1], y[2])[2], "alpha-extremum", 0, False),
        EventDef(lambda s, y: sgn * y[2] - _ALPHA_CAP, "cap", +1, True),
    ]
    leg = integrate(start, params, events, opts)
    if leg.exit.detail == "cap":
        return HALF_PI - _ALPHA_CAP
    peak = sgn * start.alpha
    for rec in leg.records:
        if rec.kind == "alpha-extremum":
            peak = max(peak, sgn * rec.state.alpha)
    return HALF_PI - peak


def _scan_root(
    fn: Callable[[float], float],
    upper: float,
    label: str,
    scan_points: int,
    from_above: bool,
    lower: Optional[float] = None,
) -> float:
    lo = lower if lower is not None else max(1e-12, upper * 1e-6)
    grid = np.geomspace(lo, upper * (1.0 - 1e-12), scan_points)
    values = [fn(a) for a in grid]
    a, b = _first_bracket(grid, values, label, from_above)
    return _refine(fn, a, b)


# ---------------------------------------------------------------------------
# The infinity figure


@dataclass(frozen=True)
class InftyFigure:
    alpha_infty: float
    r_infty: float
    halves: Tuple[Trajectory, Trajectory]
    corner_r0: float
    corner_shot: Trajectory
    alpha_separatrix: float
    r1: float


def find_infty_figure(
    n: int,
    tol: float = 1e-10,
    options: Optional[IntegratorOptions] = None,
    scan_points: int = 64,
) -> InftyFigure:
    """Two continuity arguments producing the self-crossing closed orbit.

    Stage 1 locates, from r0 = 2 pi/3, the largest initial angle below which
    centre shots return to vartheta = 0; its limiting trajectory leaves at
    (r1, 0, -pi/2).  Stage 2 reflects centrally and finds the initial radius
    in (0, pi/2) whose shot with alpha = -pi/2 exits exactly at the corner
    {r = pi/2} & {vartheta = 0}.  The crossing angle there is alpha_infty and
    r_infty = pi - r0.
    """
    params = double_product(n)
    opts = _ladder_options(options)

    def stage1_shot(alpha0: float) -> Trajectory:
        return _run_to_crossing(params, State(2.0 * PI / 3.0, QUARTER_PI, alpha0), 1, opts)

    def separatrix_gap(alpha0: float) -> float:
        traj = stage1_shot(alpha0)
        if traj.exit.detail != "vartheta-zero":
            return 1.0
        return -traj.exit.state_exit.alpha - HALF_PI

    grid = np.geomspace(1e-4, HALF_PI - 1e-4, scan_points)
    values = [separatrix_gap(a) for a in grid]
    a, b = _first_bracket(grid, values, f"infty stage 1 (n={n})")
    alpha_sep = _refine(separatrix_gap, a, b)
    low = stage1_shot(alpha_sep * (1.0 - 1e-12))
    if low.exit.detail != "vartheta-zero" or abs(low.exit.state_exit.alpha + HALF_PI) > 1e-6:
        raise BracketNotFound(
            f"infty stage 1 (n={n}): separatrix does not exit at the axis with "
            f"alpha -> -pi/2"
        )
    r1 = low.exit.state_exit.r

    # stage 2: extended-domain corner between vartheta-return and side exit
    def corner_shot(r0: float) -> Trajectory:
        events = [
            EventDef(lambda s, y: y[1] - QUARTER_PI, "vartheta-zero", +1, True),
            EventDef(lambda s, y: y[0] - HALF_PI, "side", +1, True),
        ]
        return integrate(State(r0, QUARTER_PI, -HALF_PI), params, events, opts)

    def corner_gap(r0: float) -> float:
        traj = corner_shot(r0)
        if traj.exit.kind is ExitKind.VARTHETA_ZERO:
            return HALF_PI - traj.exit.state_exit.r
        if traj.exit.kind is ExitKind.SIDE:
            return traj.exit.state_exit.theta - QUARTER_PI
        raise BracketNotFound(
            f"infty stage 2 (n={n}): shot ended in {traj.exit.detail}"
        )

    margin = 0.03
    grid2 = np.linspace(margin, HALF_PI - margin, scan_points)
    values2 = [corner_gap(r) for r in grid2]
    a2, b2 = _first_bracket(grid2, values2, f"infty stage 2 (n={n})")
    corner_r0 = _refine(corner_gap, a2, b2)
    shot = corner_shot(corner_r0)
    st = shot.exit.state_exit
    if abs(st.r - HALF_PI) > tol and abs(st.vartheta) > tol:
        raise BracketNotFound(
            f"infty stage 2 (n={n}): refined shot misses the corner "
            f"(dr={st.r - HALF_PI:.2e}, dvt={st.vartheta:.2e})"
        )
    if not 0.0 < st.alpha < HALF_PI:
        raise BracketNotFound(
            f"infty stage 2 (n={n}): crossing angle {st.alpha:.6f} outside (0, pi/2)"
        )
    upper = apply_symmetry(shot, SymmetryKind.CENTRAL_TIME_REVERSED)
    lower = apply_symmetry(upper, SymmetryKind.REFLECT_VARTHETA)
    return InftyFigure(st.alpha, PI - corner_r0, (upper, lower), corner_r0, shot, alpha_sep, r1)


# ---------------------------------------------------------------------------
# The iteration ladder


@dataclass(frozen=True)
class Rung:
    k: int
    alpha_hat: float
    alpha_check: float
    crossings_hat: int
    crossings_check: int
    hat_trajectory: Trajectory
    check_trajectory: Trajectory


@dataclass(frozen=True)
class IterationLadder:
    n: int
    rungs: List[Rung]

    @property
    def alpha_hats(self) -> List[float]:
        return [r.alpha_hat for r in self.rungs]

    @property
    def alpha_checks(self) -> List[float]:
        return [r.alpha_check for r in self.rungs]


def _closed_crossings(traj: Trajectory, closure_tol: float = 1e-3) -> int:
    """Crossings of the trajectory closure with vartheta = 0.

    Counts the start point, interior crossings, and the terminal point when
    it sits on the axis within closure_tol.
    """
    interior = sum(1 for rec in traj.records if rec.kind == "vartheta-zero")
    count = 1 + interior
    end = traj.exit.state_exit
    if traj.exit.kind not in (ExitKind.VARTHETA_ZERO,) and abs(end.vartheta) <= closure_tol:
        count += 1
    if traj.exit.kind is ExitKind.VARTHETA_ZERO:
        count += 1
    return count


def _guarded_rung_shot(
    params: SystemParams, alpha0: float, base: Optional[IntegratorOptions]
) -> Trajectory:
    opts = base or IntegratorOptions()
    events = [EventDef(lambda s, y: y[1] - QUARTER_PI, "vartheta-zero", 0, False)]
    return integrate(State(HALF_PI, QUARTER_PI, alpha0), params, events, opts)


def iteration_ladder(
    n: int,
    K: int,
    tol: float = 1e-10,
    options: Optional[IntegratorOptions] = None,
    scan_points: int = 48,
) -> IterationLadder:
    """Interleaved ladder of centre-shot angles for ranks k = 1..K.

    alpha_check(k) is the largest angle below which shots cross the bisector
    at least k times after the start; its trajectory leaves at
    (-1)^k (0, pi/2) in (vartheta, alpha).  alpha_hat(k) is the smallest
    angle above which the k-th leg runs to (-1)^k pi/2 without recovering;
    its trajectory leaves at (-1)^k (pi/4, pi/2).  Each rung reuses the
    previous hat angle as the upper scan endpoint.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    params = double_product(n)
    opts = _ladder_options(options)
    rungs: List[Rung] = []
    upper = HALF_PI - 1e-6
    for k in range(1, K + 1):
        alpha_check = _scan_root(
            lambda a: _crossing_angle_gap(params, a, k, opts),
            upper,
            f"ladder check rung {k} (n={n})",
            scan_points,
            from_above=False,
        )
        alpha_hat = _scan_root(
            lambda a: _leg_peak_gap(params, a, k, opts),
            alpha_check * (1.0 - 1e-9),
            f"ladder hat rung {k} (n={n})",
            scan_points,
            from_above=True,
        )
        check_traj = _guarded_rung_shot(params, alpha_check, options)
        hat_traj = _guarded_rung_shot(params, alpha_hat, options)
        crossings_check = _closed_crossings(check_traj)
        crossings_hat = _closed_crossings(hat_traj)
        if crossings_check != k + 1 or crossings_hat != k + 1:
            raise RungToleranceExceeded(
                f"rung {k} (n={n}): closed crossing counts "
                f"(check={crossings_check}, hat={crossings_hat}) != {k + 1}"
            )
        rungs.append(
            Rung(k, alpha_hat, alpha_check, crossings_hat, crossings_check, hat_traj, check_traj)
        )
        upper = alpha_hat * (1.0 - 1e-9)

    checks = [r.alpha_check for r in rungs]
    hats = [r.alpha_hat for r in rungs]
    for i, rung in enumerate(rungs):
        if not 0.0 < rung.alpha_hat < rung.alpha_check:
            raise RungToleranceExceeded(f"rung {rung.k}: hat/check order violated")
        if i + 1 < len(rungs) and not rungs[i + 1].alpha_check < rung.alpha_hat:
            raise RungToleranceExceeded(f"rung {rung.k}: interleaving violated")
    if any(b >= a for a, b in zip(checks, checks[1:])) or any(
        b >= a for a, b in zip(hats, hats[1:])
    ):
        raise RungToleranceExceeded("ladder sequences are not strictly decreasing")
    return IterationLadder(n, rungs)


def ladder_shot_to_axis(
    n: int,
    alpha0: float,
    k: int,
    options: Optional[IntegratorOptions] = None,
) -> Trajectory:
    """Centre shot stopped exactly at its k-th bisector crossing (unguarded alpha).

    At a check-rung angle this yields the closed-orbit half used for the
    immersed-hypertorus assembly, ending on the axis with alpha within
    root-refinement error of (-1)^k pi/2.
    """
    params = double_product(n)
    opts = _ladder_options(options)
    traj = _run_to_crossing(params, State(HALF_PI, QUARTER_PI, alpha0), k, opts)
    if traj.exit.detail != "vartheta-zero":
        raise BracketNotFound(
            f"shot at alpha0={alpha0!r} died ({traj.exit.detail}) before crossing {k}"
        )
    return traj


# ---------------------------------------------------------------------------
# Free-boundary corner of the triple-product fundamental domain


@dataclass(frozen=True)
class T4Corner:
    r0_star: float
    quarter: Trajectory
    bracket: Tuple[float, float]
    boundary_point: Tuple[float, float]


def t4_shot(r0: float, options: Optional[IntegratorOptions] = None) -> Trajectory:
    """Triple-product shot from (r0, pi/4, -pi/2) to the roof or the arc u = 1."""
    if not 0.0 < r0 < CORNER_RADIUS:
        raise ValueError(f"r0 must lie in (0, arctan sqrt 2), got {r0!r}")
    return integrate(
        State(r0, QUARTER_PI, -HALF_PI),
        triple_product(),
        [roof_event(), appendix_boundary_event()],
        options or IntegratorOptions(),
    )


def find_t4_corner(
    tol: float = 1e-8,
    options: Optional[IntegratorOptions] = None,
    scan_points: int = 64,
) -> T4Corner:
    """Shot meeting the free-boundary arc u = 1 orthogonally (alpha = v).

    Small r0 exits through the roof; r0 near arctan(sqrt 2) exits through
    the arc steeper than its normal.  The root of the continuous gap
    functional between those regimes is the free-boundary corner datum.
    """
    opts = options or IntegratorOptions()

    def gap(r0: float) -> float:
        traj = t4_shot(r0, opts)
        st = traj.exit.state_exit
        u, v = boundary_gauge(st.r, st.theta)
        if traj.exit.kind is ExitKind.ROOF:
            return 1.0 - u
        if traj.exit.kind is ExitKind.APPENDIX_BOUNDARY:
            return st.alpha - v
        raise BracketNotFound(f"t4 shot ended in {traj.exit.detail}")

    margin = 0.02
    grid = np.linspace(margin, CORNER_RADIUS - margin / 2.0, scan_points)
    values = [gap(r) for r in grid]
    a, b = _first_bracket(grid, values, "t4 corner")
    r0_star = _refine(gap, a, b)
    quarter = t4_shot(r0_star, opts)
    st = quarter.exit.state_exit
    u, v = boundary_gauge(st.r, st.theta)
    if abs(u - 1.0) > tol or abs(st.alpha - v) > tol:
        raise BracketNotFound(
            f"refined t4 shot misses the free-boundary corner: |u-1|={abs(u - 1):.2e}, "
            f"|alpha-v|={abs(st.alpha - v):.2e} > tol={tol:.1e}"
        )
    return T4Corner(r0_star, quarter, (a, b), (st.r, st.theta))


# ---------------------------------------------------------------------------
# Turning probe (conjectural absence of centre exits for n >= 4)


@dataclass(frozen=True)
class TurnProbe:
    n: int
    alpha0: float
    outcome: str              # "clockwise" | "anticlockwise" | "inconclusive"
    theta_min: float
    alpha_at_min: float


def probe_turning(
    n: int,
    alpha0: float,
    options: Optional[IntegratorOptions] = None,
    angle_tol: float = 1e-3,
) -> TurnProbe:
    """Classify the first interior theta-minimum of an unwrapped centre shot.

    alpha continues past -pi/2; at the first event sin(alpha) = 0 with theta
    turning upward the angle sits near -pi (clockwise) or 0 (anticlockwise).
    """
    if not 0.0 < alpha0 < HALF_PI:
        raise ValueError(f"alpha0 must lie in (0, pi/2), got {alpha0!r}")
    params = double_product(n)
    opts = _ladder_options(options)
    traj = integrate(State(HALF_PI, QUARTER_PI, alpha0), params, [theta_min_event()], opts)
    if traj.exit.kind is not ExitKind.THETA_MIN:
        return TurnProbe(n, alpha0, "inconclusive", math.nan, math.nan)
    st = traj.exit.state_exit
    if abs(st.alpha) <= angle_tol:
        return TurnProbe(n, alpha0, "anticlockwise", st.theta, st.alpha)
    if abs(st.alpha + PI) <= angle_tol:
        return TurnProbe(n, alpha0, "clockwise", st.theta, st.alpha)
    return TurnProbe(n, alpha0, "inconclusive", st.theta, st.alpha)
