"""Batch verification of the quantitative shooting bounds over parameter sweeps.

Each check integrates real trajectories and tests the stated inequality on
samples plus event-located landmark points, with a fixed floating slack.
Violations are returned as records (never raised), so a sweep surfaces
falsifications loudly without aborting the remaining grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .dynamics import HALF_PI, PI, QUARTER_PI, State, double_product
from .integrator import (
    EventDef,
    ExitKind,
    IntegratorOptions,
    integrate,
)
from .shooting import TurnProbe, first_return, probe_turning, torus_shot

SLACK = 1e-9


@dataclass(frozen=True)
class BoundCheck:
    lemma_id: str
    inputs: str
    bound_value: float
    observed_value: float
    satisfied: bool
    margin: float

    def to_row(self) -> Tuple[str, str, float, float, bool, float]:
        return (
            self.lemma_id,
            self.inputs,
            self.bound_value,
            self.observed_value,
            self.satisfied,
            self.margin,
        )


def dip_threshold(n: int) -> float:
    """Angular margin the trajectory keeps below the bisector once r doubles."""
    return 1.0 / (6.0 * n)


def roof_constant(n: int) -> float:
    """Growth constant bounding the roof-exit radius by a multiple of r0."""
    return 2.0 * math.exp(PI / (4.0 * n - 4.0) / math.tan(1.0 / (3.0 * n)))


def check_dipping_down(
    r0: float, n: int, options: Optional[IntegratorOptions] = None
) -> BoundCheck:
    """Once r >= 2 r0 the shot has dipped below the bisector by 1/(6n)."""
    if not 0.0 < r0 < PI / 8.0:
        raise ValueError(f"r0 must lie in (0, pi/8), got {r0!r}")
    traj = torus_shot(r0, n, options)
    bound = QUARTER_PI - dip_threshold(n)
    _s, y = traj.sample_arrays
    mask = y[:, 0] >= 2.0 * r0
    if not mask.any():
        return BoundCheck(
            "dip-below-bisector", f"n={n};r0={r0!r}", bound, math.nan, True, math.inf
        )
    worst = float(np.max(y[mask, 1]))
    margin = bound - worst
    return BoundCheck(
        "dip-below-bisector", f"n={n};r0={r0!r}", bound, worst, margin >= -SLACK, margin
    )


def check_roof_bound(
    r0: float, n: int, options: Optional[IntegratorOptions] = None
) -> BoundCheck:
    """Small shots exit through the roof at radius at most c_n r0."""
    cn = roof_constant(n)
    if not 0.0 < cn * r0 < HALF_PI:
        raise ValueError(f"need c_n * r0 < pi/2; c_{n} = {cn:.4f}, r0 = {r0!r}")
    traj = torus_shot(r0, n, options)
    inputs = f"n={n};r0={r0!r}"
    if traj.exit.kind is not ExitKind.ROOF:
        return BoundCheck("roof-exit-radius", inputs, cn * r0, math.inf, False, -math.inf)
    r_exit = traj.exit.state_exit.r
    margin = cn * r0 - r_exit
    return BoundCheck("roof-exit-radius", inputs, cn * r0, r_exit, margin >= -SLACK, margin)


def first_arc_level(alpha0: float, n: int) -> float:
    """Bisector offset reached by the first arc of a centre shot."""
    return (HALF_PI - alpha0) * alpha0 / (4.0 * n)


def check_first_arc(
    r0: float, alpha0: float, n: int, options: Optional[IntegratorOptions] = None
) -> BoundCheck:
    """Up to the level crossing the tangent stays above half its initial slope.

    Locates s1 with vartheta(s1) = (pi/2 - alpha0) alpha0 / (4n) and checks
    0 < vartheta <= vartheta(s1) and tan(alpha) >= tan(alpha0)/2 on (0, s1].
    """
    if not HALF_PI <= r0 < PI:
        raise ValueError(f"r0 must lie in [pi/2, pi), got {r0!r}")
    if not 0.0 < alpha0 < HALF_PI:
        raise ValueError(f"alpha0 must lie in (0, pi/2), got {alpha0!r}")
    level = first_arc_level(alpha0, n)
    params = double_product(n)
    events = [
        EventDef(lambda s, y: (y[1] - QUARTER_PI) - level, "level", +1, True),
    ]
    traj = integrate(State(r0, QUARTER_PI, alpha0), params, events, options or IntegratorOptions())
    inputs = f"n={n};r0={r0!r};alpha0={alpha0!r}"
    if traj.exit.detail != "level":
        # the level event never fired before another exit: violation record
        return BoundCheck("first-arc-slope", inputs, 0.5, math.nan, False, -math.inf)
    _s, y = traj.sample_arrays
    vt = y[1:, 1] - QUARTER_PI
    tan_ratio = np.tan(y[1:, 2]) / math.tan(alpha0)
    margin_vt = float(min(np.min(vt), np.min(level - vt))) if len(vt) else math.inf
    margin_tan = float(np.min(tan_ratio) - 0.5) if len(tan_ratio) else math.inf
    observed = float(np.min(tan_ratio)) if len(tan_ratio) else math.nan
    margin = min(margin_vt / max(level, 1e-300), margin_tan)
    return BoundCheck("first-arc-slope", inputs, 0.5, observed, margin >= -SLACK, margin)


def check_return_bounds(
    r0: float, alpha0: float, n: int, options: Optional[IntegratorOptions] = None
) -> BoundCheck:
    """Crossing-angle growth and peak bounds of a returning centre shot.

    Checks |alpha(sigma)/alpha0| >= max(1, (2n-1)/(2n-2) |cos r0|),
    vartheta(s2) >= alpha0/(2n-2), the endpoint slope comparison
    -vartheta'(sigma) >= vartheta'(0), and monotone decay of vartheta' on
    [s2, sigma].  Non-returning shots are vacuously satisfied.
    """
    report = first_return(r0, alpha0, n, options)
    inputs = f"n={n};r0={r0!r};alpha0={alpha0!r}"
    ratio_bound = max(1.0, (2.0 * n - 1.0) / (2.0 * n - 2.0) * abs(math.cos(r0)))
    if not report.returned:
        return BoundCheck("return-growth", inputs, ratio_bound, math.nan, True, math.inf)
    ratio = abs(report.alpha_at_return / alpha0)
    m_ratio = ratio - ratio_bound
    m_peak = report.vartheta_max - alpha0 / (2.0 * n - 2.0)
    traj = report.trajectory
    sr0 = math.sin(traj.initial_state.r)
    slope0 = math.sin(alpha0) / sr0
    end = traj.exit.state_exit
    slope_end = math.sin(end.alpha) / math.sin(end.r)
    m_slope = -slope_end - slope0
    _s, y = traj.sample_arrays
    sel = (_s >= report.s2) & (_s <= report.sigma)
    slopes = np.sin(y[sel, 2]) / np.sin(y[sel, 0])
    m_mono = float(np.min(-np.diff(slopes))) if sel.sum() >= 2 else math.inf
    margin = min(m_ratio, m_peak, m_slope, m_mono)
    return BoundCheck("return-growth", inputs, ratio_bound, ratio, margin >= -SLACK, margin)


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepConfig:
    """Default grids: r0 linear (20 points), alpha0 logarithmic (30 points)."""

    n_values: Tuple[int, ...] = (2, 3)
    r0_points: int = 20
    alpha0_points: int = 30
    random_points: int = 50
    seed: int = 0


def _probe_row(probe: TurnProbe, expect: Optional[str]) -> BoundCheck:
    ok = probe.outcome != "inconclusive" if expect is None else probe.outcome == expect
    return BoundCheck(
        "evidence-turning" + (f"-expect-{expect}" if expect else ""),
        f"n={probe.n};alpha0={probe.alpha0!r}",
        math.nan,
        probe.alpha_at_min,
        ok,
        math.nan,
    )


def default_lemma_suite(
    config: SweepConfig = SweepConfig(), options: Optional[IntegratorOptions] = None
) -> List[BoundCheck]:
    """The full bound suite over the default grids, deterministically ordered."""
    rows: List[BoundCheck] = []
    rng = np.random.default_rng(config.seed)
    for n in config.n_values:
        for r0 in np.geomspace(1e-4, PI / 8.0 * 0.999, config.r0_points):
            rows.append(check_dipping_down(float(r0), n, options))
        r_hi = 0.9 * HALF_PI / roof_constant(n)
        for r0 in np.geomspace(1e-5, r_hi, config.r0_points):
            rows.append(check_roof_bound(float(r0), n, options))
        r_grid = np.linspace(HALF_PI, PI - 0.25, max(2, config.r0_points // 4))
        a_grid = np.geomspace(1e-4, 1.3, max(2, config.alpha0_points // 3))
        for r0 in r_grid:
            for a0 in a_grid:
                rows.append(check_first_arc(float(r0), float(a0), n, options))
        a_grid = np.geomspace(1e-3, 0.15, max(2, config.alpha0_points // 3))
        for r0 in np.linspace(HALF_PI, 2.9, max(2, config.r0_points // 4)):
            for a0 in a_grid:
                rows.append(check_return_bounds(float(r0), float(a0), n, options))
        # seeded jittered batch of short first-arc checks
        for _ in range(config.random_points):
            r0 = float(rng.uniform(HALF_PI, PI - 0.3))
            a0 = float(math.exp(rng.uniform(math.log(1e-4), math.log(1.0))))
            rows.append(check_first_arc(r0, a0, n, options))
    return rows


def turning_probe_suite(
    n: int,
    count: int = 30,
    lo: float = 1e-6,
    hi: float = HALF_PI - 1e-3,
    expect: Optional[str] = None,
    options: Optional[IntegratorOptions] = None,
) -> List[BoundCheck]:
    """Log-spaced grid of turning probes; rows flag unexpected outcomes."""
    rows = []
    for a0 in np.geomspace(lo, hi, count):
        rows.append(_probe_row(probe_turning(n, float(a0), options), expect))
    return rows


def violations(rows: Iterable[BoundCheck]) -> List[BoundCheck]:
    return [row for row in rows if not row.satisfied]
