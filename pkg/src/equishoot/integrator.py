"""Adaptive Dormand-Prince 5(4) integration of the reduced systems.

Provides dense output per accepted step, event location on the dense
interpolant (safeguarded Brent refinement with an arming threshold so shots
may start exactly on an event surface), and guarded stopping near the
singular boundary of the quotient.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

from scipy.optimize import brentq

from .dynamics import (
    HALF_PI,
    QUARTER_PI,
    DomainError,
    State,
    SystemParams,
    is_interior,
    make_rhs,
)

Vec3 = Tuple[float, float, float]
EventFn = Callable[[float, Vec3], float]


class NoCrossing(RuntimeError):
    """Reported sign change turned out to be a numerical artifact."""


class NonFinite(RuntimeError):
    """Vector field evaluated non-finite outside the rejection cascade."""


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# difference between the 5th- and embedded 4th-order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# quartic dense-output polynomial in the normalised step variable
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)


class ExitKind(enum.Enum):
    ROOF = "roof"                 # alpha = 0
    SIDE = "side"                 # r = pi/2
    VARTHETA_ZERO = "vartheta-zero"
    APPENDIX_BOUNDARY = "appendix-boundary"  # tan(r) cos(theta) = 1
    THETA_MIN = "theta-min"       # sin(alpha) = 0 rising, probe mode
    BLOW_UP = "blow-up"
    STEP_LIMIT = "step-limit"


@dataclass(frozen=True)
class ExitEvent:
    kind: ExitKind
    s_exit: float
    state_exit: State
    detail: str = ""


@dataclass(frozen=True)
class EventRecord:
    kind: str
    s: float
    state: State


@dataclass(frozen=True)
class EventDef:
    """Scalar event g(s, y); a directed zero crossing triggers it.

    Events start unarmed and arm once |g| >= arm_threshold at an accepted
    step end, so initial data may sit exactly on the event surface.  A
    terminal event with count_to = k stops the integration on its k-th
    crossing; the earlier ones are recorded.
    """

    fn: EventFn
    kind: str
    direction: int = 0            # +1 rising, -1 falling, 0 any
    terminal: bool = True
    arm_threshold: Optional[float] = None
    count_to: int = 1


EventSpec = Sequence[EventDef]


@dataclass(frozen=True)
class IntegratorOptions:
    tol_abs: float = 1e-12
    tol_rel: float = 1e-10
    tol_event: float = 1e-11
    s_max: float = 100.0
    eps_bdry: float = 1e-9
    min_step: float = 1e-14
    max_steps: int = 1_000_000
    first_step: float = 1e-4
    guard_alpha: bool = True      # treat |alpha| = pi/2 as a blow-up stratum

    def with_tolerances(self, factor: float) -> "IntegratorOptions":
        return IntegratorOptions(
            tol_abs=self.tol_abs * factor,
            tol_rel=self.tol_rel * factor,
            tol_event=self.tol_event,
            s_max=self.s_max,
            eps_bdry=self.eps_bdry,
            min_step=self.min_step,
            max_steps=self.max_steps,
            first_step=self.first_step,
            guard_alpha=self.guard_alpha,
        )


@dataclass(frozen=True)
class IntegrationStats:
    steps: int
    rejected: int
    max_constraint_residual: float


class DenseSegment:
    """Quartic interpolant of one accepted step, optionally transformed."""

    __slots__ = ("s0", "h", "y0", "q")

    def __init__(self, s0: float, h: float, y0: Vec3, q: Sequence[Sequence[float]]):
        self.s0 = s0
        self.h = h
        self.y0 = y0
        self.q = q

    @property
    def s1(self) -> float:
        return self.s0 + self.h

    def eval(self, s: float) -> Vec3:
        x = (s - self.s0) / self.h
        out = []
        for i in range(3):
            qi = self.q[i]
            out.append(self.y0[i] + self.h * x * (qi[0] + x * (qi[1] + x * (qi[2] + x * qi[3]))))
        return (out[0], out[1], out[2])

    def deriv(self, s: float) -> Vec3:
        x = (s - self.s0) / self.h
        out = []
        for i in range(3):
            qi = self.q[i]
            out.append(qi[0] + x * (2.0 * qi[1] + x * (3.0 * qi[2] + x * 4.0 * qi[3])))
        return (out[0], out[1], out[2])

    def transformed(self, state_map, total_length: float, reverse: bool) -> "DenseSegment":
        # All symmetry maps are affine with diagonal linear part, so the
        # polynomial coefficients transform exactly.
        signs = _affine_signs(state_map)
        y0 = self.y0
        if not reverse:
            new_y0 = state_map(*y0)
            new_q = tuple(
                tuple(signs[i] * c for c in self.q[i]) for i in range(3)
            )
            return DenseSegment(self.s0, self.h, new_y0, new_q)
        # s -> total_length - s reverses orientation; substitute x -> 1 - x.
        y1 = self.eval(self.s1)
        new_y0 = state_map(*y1)
        new_q = []
        for i in range(3):
            a1, a2, a3, a4 = self.q[i]
            # p(x) = sum a_j x^j (j=1..4); reversed poly is p(1-x) - p(1)
            b0 = -(a1 + 2 * a2 + 3 * a3 + 4 * a4)
            b1 = a2 + 3 * a3 + 6 * a4
            b2 = -(a3 + 4 * a4)
            b3 = a4
            new_q.append((signs[i] * b0, signs[i] * b1, signs[i] * b2, signs[i] * b3))
        return DenseSegment(total_length - self.s1, self.h, new_y0, tuple(new_q))


def _affine_signs(state_map) -> Vec3:
    # Diagonal linear part of an affine map, recovered from two evaluations.
    a = state_map(0.0, 0.0, 0.0)
    b = state_map(1.0, 1.0, 1.0)
    return (b[0] - a[0], b[1] - a[1], b[2] - a[2])


class Trajectory:
    """Arc-length parametrised solution samples with dense output."""

    def __init__(
        self,
        params: SystemParams,
        samples: List[Tuple[float, Vec3]],
        dense: List[DenseSegment],
        exit_event: ExitEvent,
        records: List[EventRecord],
        stats: IntegrationStats,
    ):
        self.params = params
        self._s = [s for s, _ in samples]
        self._y = [y for _, y in samples]
        self.dense = dense
        self.exit = exit_event
        self.records = records
        self.stats = stats

    @property
    def samples(self) -> List[Tuple[float, State]]:
        return [(s, State(*y)) for s, y in zip(self._s, self._y)]

    @property
    def sample_arrays(self):
        import numpy as np

        return np.asarray(self._s), np.asarray(self._y)

    @property
    def s_exit(self) -> float:
        return self.exit.s_exit

    @property
    def initial_state(self) -> State:
        return State(*self._y[0])

    def state_at(self, s: float) -> State:
        return State(*self.raw_at(s))

    def raw_at(self, s: float) -> Vec3:
        if not self.dense:
            return self._y[0]
        lo = self.dense[0].s0
        hi = self.dense[-1].s1
        if s <= lo:
            return self.dense[0].eval(lo)
        if s >= min(hi, self.s_exit):
            return (
                self._y[-1]
                if s >= self.s_exit
                else self.dense[-1].eval(s)
            )
        idx = bisect_right(self._starts(), s) - 1
        idx = max(0, min(idx, len(self.dense) - 1))
        return self.dense[idx].eval(s)

    def deriv_at(self, s: float) -> Vec3:
        idx = bisect_right(self._starts(), s) - 1
        idx = max(0, min(idx, len(self.dense) - 1))
        return self.dense[idx].deriv(s)

    def _starts(self) -> List[float]:
        starts = getattr(self, "_start_cache", None)
        if starts is None or len(starts) != len(self.dense):
            starts = [seg.s0 for seg in self.dense]
            self._start_cache = starts
        return starts

    def field_residual_at(self, s: float) -> float:
        """Sup-norm defect between the dense derivative and the field."""
        y = self.raw_at(s)
        dy = self.deriv_at(s)
        f = make_rhs(self.params)(*y)
        return max(abs(dy[i] - f[i]) for i in range(3))


def transform_trajectory(traj: Trajectory, state_map, reverse: bool) -> Trajectory:
    """Image of a trajectory under an affine symmetry of the system."""
    total = traj.s_exit
    samples = [(total - s if reverse else s, state_map(*y)) for s, y in zip(traj._s, traj._y)]
    if reverse:
        samples.reverse()
    dense = [seg.transformed(state_map, total, reverse) for seg in traj.dense]
    if reverse:
        dense.reverse()
    old_exit = traj.exit
    if reverse:
        exit_state = samples[-1][1]
        new_exit = ExitEvent(old_exit.kind, total, State(*exit_state), old_exit.detail)
    else:
        new_exit = ExitEvent(
            old_exit.kind,
            old_exit.s_exit,
            State(*state_map(*old_exit.state_exit.astuple())),
            old_exit.detail,
        )
    records = [
        EventRecord(rec.kind, total - rec.s if reverse else rec.s, State(*state_map(*rec.state.astuple())))
        for rec in traj.records
    ]
    if reverse:
        records.reverse()
    return Trajectory(traj.params, samples, dense, new_exit, records, traj.stats)


# ---------------------------------------------------------------------------
# Event location


def locate_event(
    segment: DenseSegment,
    fn: EventFn,
    direction: int = 0,
    s_lo: Optional[float] = None,
    s_hi: Optional[float] = None,
    tol_event: float = 1e-11,
) -> float:
    """Locate a directed zero of fn along one dense step.

    Uses Brent refinement on the interpolant; raises NoCrossing when the
    bracketing sign change does not survive refinement.
    """
    a = segment.s0 if s_lo is None else s_lo
    b = segment.s1 if s_hi is None else s_hi
    fa = fn(a, segment.eval(a))
    fb = fn(b, segment.eval(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if direction > 0 and not (fa < 0.0 < fb):
        raise NoCrossing(f"no rising crossing in [{a}, {b}]")
    if direction < 0 and not (fa > 0.0 > fb):
        raise NoCrossing(f"no falling crossing in [{a}, {b}]")
    if fa * fb > 0.0:
        raise NoCrossing(f"no sign change in [{a}, {b}]")
    s_cross = brentq(lambda s: fn(s, segment.eval(s)), a, b, xtol=1e-15, rtol=8.9e-16)
    if abs(fn(s_cross, segment.eval(s_cross))) > 10.0 * max(tol_event, 1e-11):
        raise NoCrossing("crossing did not refine below event tolerance")
    return s_cross


# ---------------------------------------------------------------------------
# Blow-up guards


def boundary_guards(params: SystemParams, options: IntegratorOptions) -> List[EventDef]:
    """Blow-up guard events at distance eps_bdry from the singular strata."""
    eps = options.eps_bdry
    arm = 10.0 * eps
    guards = [
        EventDef(lambda s, y: y[0] - eps, "blow-up:r=0", -1, True, arm),
        EventDef(lambda s, y: (params.r_sup - eps) - y[0], "blow-up:r-sup", -1, True, arm),
        EventDef(lambda s, y: y[1] - eps, "blow-up:theta=0", -1, True, arm),
        EventDef(lambda s, y: (HALF_PI - eps) - y[1], "blow-up:theta=pi/2", -1, True, arm),
    ]
    if options.guard_alpha:
        guards.append(
            EventDef(lambda s, y: (HALF_PI - eps) - abs(y[2]), "blow-up:alpha", -1, True, arm)
        )
    return guards


_EXIT_BY_KIND = {
    "roof": ExitKind.ROOF,
    "side": ExitKind.SIDE,
    "vartheta-zero": ExitKind.VARTHETA_ZERO,
    "appendix-boundary": ExitKind.APPENDIX_BOUNDARY,
    "theta-min": ExitKind.THETA_MIN,
}


def _exit_kind_for(kind: str) -> ExitKind:
    if kind.startswith("blow-up"):
        return ExitKind.BLOW_UP
    return _EXIT_BY_KIND.get(kind, ExitKind.BLOW_UP)


# ---------------------------------------------------------------------------
# Main integration loop


class _EventState:
    __slots__ = ("definition", "armed", "f_prev", "hits")

    def __init__(self, definition: EventDef, f0: float, arm_default: float):
        self.definition = definition
        thr = definition.arm_threshold if definition.arm_threshold is not None else arm_default
        self.armed = abs(f0) >= thr
        self.f_prev = f0
        self.hits = 0


def integrate(
    initial: State,
    params: SystemParams,
    events: EventSpec = (),
    options: IntegratorOptions = IntegratorOptions(),
    guards: Optional[EventSpec] = None,
) -> Trajectory:
    """Integrate from an interior initial state until the first exit.

    The trajectory ends at the first triggered terminal event, at a blow-up
    guard (boundary proximity below eps_bdry or step-size underflow), or at
    s_max with a STEP_LIMIT exit.
    """
    y0 = initial.astuple() if isinstance(initial, State) else tuple(initial)
    if not is_interior(y0[0], y0[1], params):
        raise DomainError(f"initial state {y0!r} is not interior to the quotient")

    rhs = make_rhs(params)
    all_events: List[EventDef] = list(events) + list(
        boundary_guards(params, options) if guards is None else guards
    )
    arm_default = 10.0 * options.tol_event
    estates = [
        _EventState(ev, ev.fn(0.0, y0), arm_default) for ev in all_events
    ]

    s = 0.0
    y = y0
    try:
        k1 = rhs(*y)
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise NonFinite(f"field non-finite at initial state {y!r}") from exc

    h = min(options.first_step, options.s_max)
    samples: List[Tuple[float, Vec3]] = [(0.0, y)]
    dense: List[DenseSegment] = []
    records: List[EventRecord] = []
    steps = 0
    rejected = 0
    max_resid = 0.0
    err_prev = 1.0
    exit_event: Optional[ExitEvent] = None

    atol, rtol = options.tol_abs, options.tol_rel

    while exit_event is None:
        if steps >= options.max_steps:
            exit_event = ExitEvent(ExitKind.STEP_LIMIT, s, State(*y), "max step count")
            break
        if s >= options.s_max:
            exit_event = ExitEvent(ExitKind.STEP_LIMIT, s, State(*y), "reached s_max")
            break
        h = min(h, options.s_max - s)
        if h < options.min_step:
            exit_event = ExitEvent(
                ExitKind.BLOW_UP, s, State(*y), "step size underflow"
            )
            break

        # one embedded RK attempt
        failed = False
        ks = [k1]
        try:
            for i in range(1, 7):
                ai = _A[i]
                yi = list(y)
                for j, aij in enumerate(ai):
                    if aij != 0.0:
                        kj = ks[j]
                        yi[0] += h * aij * kj[0]
                        yi[1] += h * aij * kj[1]
                        yi[2] += h * aij * kj[2]
                ks.append(rhs(yi[0], yi[1], yi[2]))
        except (ZeroDivisionError, ValueError, OverflowError):
            failed = True

        if not failed:
            y1 = list(y)
            for j in range(7):
                bj = _B[j]
                if bj != 0.0:
                    kj = ks[j]
                    y1[0] += h * bj * kj[0]
                    y1[1] += h * bj * kj[1]
                    y1[2] += h * bj * kj[2]
            err_sq = 0.0
            for i in range(3):
                e = 0.0
                for j in range(7):
                    ej = _E[j]
                    if ej != 0.0:
                        e += ej * ks[j][i]
                e *= h
                scale = atol + rtol * max(abs(y[i]), abs(y1[i]))
                err_sq += (e / scale) ** 2
            err = math.sqrt(err_sq / 3.0)
            if not math.isfinite(err):
                failed = True

        if failed or err > 1.0:
            rejected += 1
            h *= 0.25 if failed else max(0.2, 0.9 * err ** -0.2)
            continue

        # accepted: dense coefficients q = K^T P
        q = tuple(
            tuple(sum(ks[j][i] * _P[j][c] for j in range(7)) for c in range(4))
            for i in range(3)
        )
        seg = DenseSegment(s, h, y, q)
        s_new = s + h
        y_new = (y1[0], y1[1], y1[2])

        # event sweep over this step, earliest terminal wins
        crossings: List[Tuple[float, _EventState]] = []
        for est in estates:
            ev = est.definition
            f_new = ev.fn(s_new, y_new)
            if not est.armed:
                thr = ev.arm_threshold if ev.arm_threshold is not None else arm_default
                if abs(f_new) >= thr:
                    est.armed = True
                est.f_prev = f_new
                continue
            f_old = est.f_prev
            hit = False
            if ev.direction > 0:
                hit = f_old < 0.0 <= f_new
            elif ev.direction < 0:
                hit = f_old > 0.0 >= f_new
            else:
                hit = (f_old < 0.0 <= f_new) or (f_old > 0.0 >= f_new)
            if hit:
                try:
                    s_c = locate_event(
                        seg, ev.fn, ev.direction, s, s_new, options.tol_event
                    )
                    crossings.append((s_c, est))
                except NoCrossing:
                    pass
            est.f_prev = f_new

        crossings.sort(key=lambda t: t[0])
        terminal_cut: Optional[Tuple[float, _EventState]] = None
        for s_c, est in crossings:
            est.hits += 1
            if est.definition.terminal and est.hits >= est.definition.count_to:
                terminal_cut = (s_c, est)
                break
            records.append(EventRecord(est.definition.kind, s_c, State(*seg.eval(s_c))))
            est.armed = False  # re-arm once the state leaves the surface again

        dense.append(seg)
        if terminal_cut is not None:
            s_c, est = terminal_cut
            y_c = seg.eval(s_c)
            samples.append((s_c, y_c))
            exit_event = ExitEvent(
                _exit_kind_for(est.definition.kind),
                s_c,
                State(*y_c),
                est.definition.kind,
            )
            break

        samples.append((s_new, y_new))
        steps += 1
        try:
            k_next = rhs(*y_new)
        except (ZeroDivisionError, ValueError, OverflowError):
            exit_event = ExitEvent(
                ExitKind.BLOW_UP, s_new, State(*y_new), "field non-finite past sample"
            )
            break
        resid = abs(
            k_next[0] * k_next[0]
            + math.sin(y_new[0]) ** 2 * k_next[1] * k_next[1]
            - 1.0
        )
        if resid > max_resid:
            max_resid = resid
        k1 = k_next
        y = y_new
        s = s_new
        fac = 0.9 * err ** -0.14 * err_prev ** 0.08 if err > 0.0 else 5.0
        h *= min(5.0, max(0.2, fac))
        err_prev = max(err, 1e-10)

    stats = IntegrationStats(steps, rejected, max_resid)
    return Trajectory(params, samples, dense, exit_event, records, stats)


def resample(traj: Trajectory, m: int) -> List[Tuple[float, State]]:
    """m states equally spaced in arc length; endpoints exact."""
    if m < 2:
        raise ValueError("resample needs m >= 2")
    s_end = traj.s_exit
    out: List[Tuple[float, State]] = []
    for i in range(m):
        si = s_end * i / (m - 1)
        if i == 0:
            out.append((0.0, traj.initial_state))
        elif i == m - 1:
            out.append((s_end, traj.exit.state_exit))
        else:
            out.append((si, traj.state_at(si)))
    return out


# ---------------------------------------------------------------------------
# Standard event definitions used by the shooting constructions


def roof_event() -> EventDef:
    return EventDef(lambda s, y: y[2], "roof", +1, True)


def side_event() -> EventDef:
    return EventDef(lambda s, y: y[0] - HALF_PI, "side", +1, True)


def appendix_boundary_event() -> EventDef:
    return EventDef(
        lambda s, y: math.tan(y[0]) * math.cos(y[1]) - 1.0, "appendix-boundary", +1, True
    )


def theta_min_event() -> EventDef:
    # sin(alpha) = 0 rising marks an interior minimum of theta
    return EventDef(lambda s, y: math.sin(y[2]), "theta-min", +1, True)
