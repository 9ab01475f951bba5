"""Command-line front end: constructions, verification sweeps, CSV/SVG export.

Exit status: 0 on success, 1 when a bound is violated or a bracket is
missing (falsification), 2 on usage errors.  Identical configurations
produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import (
    HALF_PI,
    PI,
    QUARTER_PI,
    State,
    System,
    SystemParams,
    double_product,
)
from .geometry import (
    AssembledCurve,
    CurveKind,
    assemble,
    count_crossings,
    curvature_residual,
    lifted_volume,
)
from .integrator import (
    EventDef,
    IntegratorOptions,
    Trajectory,
    integrate,
    resample,
)
from .lemma_lab import (
    BoundCheck,
    SweepConfig,
    default_lemma_suite,
    turning_probe_suite,
    violations,
)
from .shooting import (
    BracketNotFound,
    find_infty_figure,
    find_t4_corner,
    find_torus_corner,
    iteration_ladder,
    ladder_shot_to_axis,
    torus_shot,
    t4_shot,
)


@dataclass
class RunConfig:
    tol_abs: float = 1e-12
    tol_rel: float = 1e-10
    tol_event: float = 1e-11
    tol_bisect: float = 1e-10
    tol_corner: float = 1e-8
    s_max: float = 100.0
    eps_bdry: float = 1e-9
    seed: int = 0
    out: Path = Path("out")

    def options(self, guard_alpha: bool = True) -> IntegratorOptions:
        return IntegratorOptions(
            tol_abs=self.tol_abs,
            tol_rel=self.tol_rel,
            tol_event=self.tol_event,
            s_max=self.s_max,
            eps_bdry=self.eps_bdry,
            guard_alpha=guard_alpha,
        )


# ---------------------------------------------------------------------------
# CSV


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(traj, sink) -> int:
    """Samples as `s,r,theta,alpha` rows; shortest round-trip decimals."""
    buf = io.StringIO()
    buf.write("s,r,theta,alpha\n")
    if isinstance(traj, AssembledCurve):
        data = traj.resample(2001)
        for s, r, th, al in data:
            buf.write(f"{_fmt(s)},{_fmt(r)},{_fmt(th)},{_fmt(al)}\n")
    else:
        for s, state in traj.samples:
            buf.write(f"{_fmt(s)},{_fmt(state.r)},{_fmt(state.theta)},{_fmt(state.alpha)}\n")
    payload = buf.getvalue().encode()
    _write_bytes(sink, payload)
    return len(payload)


def write_report_csv(rows: Sequence[BoundCheck], sink) -> int:
    buf = io.StringIO()
    buf.write("lemma_id,inputs,bound,observed,satisfied,margin\n")
    for row in rows:
        lemma_id, inputs, bound, observed, satisfied, margin = row.to_row()
        buf.write(
            f"{lemma_id},{inputs},{_fmt(bound)},{_fmt(observed)},{satisfied},{_fmt(margin)}\n"
        )
    payload = buf.getvalue().encode()
    _write_bytes(sink, payload)
    return len(payload)


def _write_bytes(sink, payload: bytes) -> None:
    if hasattr(sink, "write"):
        try:
            sink.write(payload)
        except TypeError:
            sink.write(payload.decode())
    else:
        Path(sink).parent.mkdir(parents=True, exist_ok=True)
        Path(sink).write_bytes(payload)


# ---------------------------------------------------------------------------
# SVG


@dataclass(frozen=True)
class SvgStyle:
    stroke: str = "#1f3d7a"
    width: float = 1.5
    dash: str = ""


def render_svg(
    curves: Sequence[Tuple[np.ndarray, SvgStyle]],
    sink,
    markers: Sequence[Tuple[float, float, str]] = (),
    x_range: Tuple[float, float] = (0.0, PI),
    y_range: Tuple[float, float] = (0.0, HALF_PI),
    scale: float = 220.0,
) -> int:
    """Standalone SVG phase portrait with gridlines at multiples of pi/4."""
    x0, x1 = x_range
    y0, y1 = y_range
    pad = 30.0
    W = (x1 - x0) * scale + 2 * pad
    H = (y1 - y0) * scale + 2 * pad

    def tx(x: float) -> float:
        return pad + (x - x0) * scale

    def ty(y: float) -> float:
        return H - pad - (y - y0) * scale

    parts: List[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
        f'viewBox="0 0 {W:.0f} {H:.0f}">'
    )
    parts.append(f'<rect width="{W:.0f}" height="{H:.0f}" fill="white"/>')
    k = 0
    while k * QUARTER_PI <= x1 + 1e-12:
        x = k * QUARTER_PI
        if x >= x0 - 1e-12:
            parts.append(
                f'<line x1="{tx(x):.2f}" y1="{ty(y0):.2f}" x2="{tx(x):.2f}" y2="{ty(y1):.2f}" '
                f'stroke="#cccccc" stroke-width="0.6"/>'
            )
        k += 1
    k = 0
    while k * QUARTER_PI <= y1 + 1e-12:
        y = k * QUARTER_PI
        if y >= y0 - 1e-12:
            parts.append(
                f'<line x1="{tx(x0):.2f}" y1="{ty(y):.2f}" x2="{tx(x1):.2f}" y2="{ty(y):.2f}" '
                f'stroke="#cccccc" stroke-width="0.6"/>'
            )
        k += 1
    for pts, style in curves:
        if len(pts) == 0:
            continue
        if len(pts) == 1:
            parts.append(
                f'<circle cx="{tx(pts[0][0]):.3f}" cy="{ty(pts[0][1]):.3f}" r="3" '
                f'fill="{style.stroke}"/>'
            )
            continue
        coords = " ".join(f"{tx(p[0]):.3f},{ty(p[1]):.3f}" for p in pts)
        dash = f' stroke-dasharray="{style.dash}"' if style.dash else ""
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{style.stroke}" '
            f'stroke-width="{style.width}"{dash}/>'
        )
    for mx, my, label in markers:
        parts.append(
            f'<circle cx="{tx(mx):.3f}" cy="{ty(my):.3f}" r="3.5" fill="#b03030"/>'
        )
        parts.append(
            f'<text x="{tx(mx) + 6:.3f}" y="{ty(my) - 6:.3f}" font-size="13" '
            f'font-family="serif">{label}</text>'
        )
    parts.append("</svg>")
    payload = "\n".join(parts).encode()
    _write_bytes(sink, payload)
    return len(payload)


def _traj_points(traj: Trajectory, m: int = 600) -> np.ndarray:
    pts = resample(traj, m)
    return np.array([[st.r, st.theta] for _s, st in pts])


def _curve_points(curve: AssembledCurve, m: int = 1200) -> np.ndarray:
    data = curve.resample(m)
    return data[:, 1:3]


# ---------------------------------------------------------------------------
# Figures


def _figure_1(cfg: RunConfig, sink) -> int:
    opts = cfg.options()
    roof = torus_shot(0.3927, 2, opts)
    side = torus_shot(1.4923, 2, opts)
    corner = find_torus_corner(2, cfg.tol_corner, opts)
    orbit = assemble(corner.quarter, CurveKind.TORUS_ORBIT)
    curves = [
        (_traj_points(roof), SvgStyle("#444444", 1.4)),
        (_traj_points(side), SvgStyle("#444444", 1.4)),
        (_curve_points(orbit), SvgStyle("#b03030", 1.0, "4 3")),
        (_traj_points(corner.quarter), SvgStyle("#b03030", 2.2)),
    ]
    return render_svg(curves, sink)


def _figure_2(cfg: RunConfig, sink) -> int:
    opts = cfg.options()
    r0, a0 = 2.0 * PI / 3.0, PI / 36.0
    from .lemma_lab import first_arc_level

    level = first_arc_level(a0, 2)
    events = [
        EventDef(lambda s, y: (y[1] - QUARTER_PI) - level, "level", +1, False),
        EventDef(lambda s, y: y[2], "alpha-zero", -1, False),
    ]
    traj = integrate(State(r0, QUARTER_PI, a0), double_product(2), events, opts)
    markers = []
    for rec in traj.records:
        if rec.kind == "level":
            markers.append((rec.state.r, rec.state.theta, "s1"))
        if rec.kind == "alpha-zero" and len([m for m in markers if m[2] == "s2"]) == 0:
            markers.append((rec.state.r, rec.state.theta, "s2"))
    end = traj.exit.state_exit
    markers.append((end.r, end.theta, "s*"))
    return render_svg([(_traj_points(traj), SvgStyle())], sink, markers)


def _figure_4(cfg: RunConfig, sink) -> int:
    opts = cfg.options()
    ladder = iteration_ladder(2, 2, cfg.tol_bisect, opts)
    sphere = assemble(ladder.rungs[0].hat_trajectory, CurveKind.SPHERE_CURVE)
    half2 = ladder_shot_to_axis(2, ladder.rungs[1].alpha_check, 2, opts)
    immersed = assemble(half2, CurveKind.IMMERSED_TORUS_ORBIT)
    curves = [
        (_curve_points(sphere), SvgStyle("#d07020", 2.0)),
        (_curve_points(immersed), SvgStyle("#2050b0", 1.4, "5 3")),
    ]
    return render_svg(curves, sink)


def _figure_5(cfg: RunConfig, sink) -> int:
    opts = cfg.options(guard_alpha=False)
    curves = []
    offset = 0.0
    from .integrator import theta_min_event

    for n in (2, 3, 4):
        for a0 in np.geomspace(2e-4, HALF_PI - 0.05, 10):
            traj = integrate(
                State(HALF_PI, QUARTER_PI, float(a0)),
                double_product(n),
                [theta_min_event()],
                opts,
            )
            pts = _traj_points(traj, 300)
            pts[:, 0] += offset
            style = SvgStyle(["#1f3d7a", "#20754d", "#8a2a66"][(n - 2) % 3], 1.0)
            curves.append((pts, style))
        offset += PI + QUARTER_PI
    return render_svg(curves, sink, x_range=(0.0, 3 * PI + 2 * QUARTER_PI), scale=130.0)


def _figure_6(cfg: RunConfig, sink) -> int:
    opts = cfg.options()
    roof = t4_shot(0.1571, opts)
    boundary = t4_shot(0.9053, opts)
    corner = find_t4_corner(cfg.tol_corner, opts)
    theta_arc = np.linspace(0.0, HALF_PI - 1e-3, 200)
    arc = np.array([[math.atan(1.0 / math.cos(t)), t] for t in theta_arc])
    curves = [
        (arc, SvgStyle("#202020", 1.0)),
        (_traj_points(roof), SvgStyle("#444444", 1.4)),
        (_traj_points(boundary), SvgStyle("#444444", 1.4)),
        (_traj_points(corner.quarter), SvgStyle("#b03030", 2.2)),
    ]
    return render_svg(curves, sink, x_range=(0.0, HALF_PI), y_range=(0.0, HALF_PI))


_FIGURES = {1: _figure_1, 2: _figure_2, 4: _figure_4, 5: _figure_5, 6: _figure_6}


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_integrate(cfg: RunConfig, args) -> int:
    params = SystemParams(System(args.system), args.n)
    theta0 = args.theta0 if args.theta0 is not None else QUARTER_PI
    traj = integrate(State(args.r0, theta0, args.alpha0), params, [], cfg.options())
    out = cfg.out / "trajectory.csv"
    nbytes = write_trajectory_csv(traj, out)
    print(
        f"integrated to s={traj.s_exit:.6f} exit={traj.exit.kind.value} "
        f"({traj.exit.detail}); wrote {nbytes} bytes to {out}"
    )
    return 0


def _cmd_torus(cfg: RunConfig, args) -> int:
    corner = find_torus_corner(args.n, cfg.tol_corner, cfg.options())
    orbit = assemble(corner.quarter, CurveKind.TORUS_ORBIT)
    res = curvature_residual(orbit)
    vol = lifted_volume(orbit)
    z, self_x = count_crossings(orbit)
    write_trajectory_csv(corner.quarter, cfg.out / f"torus-quarter-n{args.n}.csv")
    write_trajectory_csv(orbit, cfg.out / f"torus-orbit-n{args.n}.csv")
    print(
        f"corner r0* = {corner.r0_star:.6f}, side exit theta = {corner.theta_exit:.6f}\n"
        f"closed orbit: closure gap {orbit.closure_gap:.2e}, curvature residual {res:.2e}, "
        f"lifted volume {vol:.6f}, self-intersections {self_x}"
    )
    return 0


def _cmd_infty(cfg: RunConfig, args) -> int:
    fig = find_infty_figure(args.n, cfg.tol_bisect, cfg.options())
    write_trajectory_csv(fig.halves[0], cfg.out / f"infty-upper-n{args.n}.csv")
    write_trajectory_csv(fig.halves[1], cfg.out / f"infty-lower-n{args.n}.csv")
    print(
        f"alpha_infty = {fig.alpha_infty:.9f}, r_infty = {fig.r_infty:.9f} "
        f"(corner r0 = {fig.corner_r0:.9f}, stage-1 separatrix alpha = {fig.alpha_separatrix:.9f})"
    )
    return 0


def _cmd_ladder(cfg: RunConfig, args) -> int:
    ladder = iteration_ladder(args.n, args.k, cfg.tol_bisect, cfg.options())
    rows = []
    for rung in ladder.rungs:
        rows.append(
            BoundCheck(
                f"ladder-rung-{rung.k}",
                f"n={args.n}",
                math.nan,
                rung.alpha_check,
                True,
                rung.alpha_check - rung.alpha_hat,
            )
        )
        print(
            f"k={rung.k}: alpha_hat = {rung.alpha_hat:.12f}, "
            f"alpha_check = {rung.alpha_check:.12f}, crossings = {rung.crossings_hat}"
        )
    write_report_csv(rows, cfg.out / f"ladder-n{args.n}.csv")
    return 0


def _cmd_spheres(cfg: RunConfig, args) -> int:
    ladder = iteration_ladder(args.n, args.k, cfg.tol_bisect, cfg.options())
    for rung in ladder.rungs:
        curve = assemble(rung.hat_trajectory, CurveKind.SPHERE_CURVE)
        res = curvature_residual(curve)
        z, self_x = count_crossings(curve)
        write_trajectory_csv(curve, cfg.out / f"sphere-n{args.n}-k{rung.k}.csv")
        print(
            f"k={rung.k}: residual {res:.2e}, bisector crossings {z}, "
            f"self-intersections {self_x}"
        )
    return 0


def _cmd_t4(cfg: RunConfig, args) -> int:
    corner = find_t4_corner(cfg.tol_corner, cfg.options())
    hexagon = assemble(
        corner.quarter, CurveKind.T4_ORBIT, junction_pos_tol=1e-8, junction_tan_tol=1e-7
    )
    res = curvature_residual(hexagon)
    write_trajectory_csv(corner.quarter, cfg.out / "t4-quarter.csv")
    write_trajectory_csv(hexagon, cfg.out / "t4-orbit.csv")
    print(
        f"free-boundary corner r0* = {corner.r0_star:.6f}, boundary point "
        f"(r, theta) = ({corner.boundary_point[0]:.6f}, {corner.boundary_point[1]:.6f}), "
        f"curvature residual {res:.2e}"
    )
    return 0


def _cmd_probe(cfg: RunConfig, args) -> int:
    rows = turning_probe_suite(args.n, args.count, options=cfg.options(guard_alpha=False))
    outcomes = {}
    for row in rows:
        key = "clockwise" if row.satisfied and abs(row.observed_value + PI) < 1e-3 else (
            "anticlockwise" if abs(row.observed_value) < 1e-3 else "inconclusive"
        )
        outcomes[key] = outcomes.get(key, 0) + 1
    write_report_csv(rows, cfg.out / f"probe-n{args.n}.csv")
    print(f"n={args.n}: " + ", ".join(f"{k}={v}" for k, v in sorted(outcomes.items())))
    return 1 if outcomes.get("inconclusive") else 0


def _cmd_verify(cfg: RunConfig, args) -> int:
    rows: List[BoundCheck] = []
    if args.suite in ("lemmas", "all"):
        n_values = (args.n,) if args.n else (2, 3)
        rows += default_lemma_suite(SweepConfig(n_values=n_values, seed=cfg.seed), cfg.options())
    if args.suite in ("probes", "all"):
        rows += turning_probe_suite(4, 30, expect="clockwise", options=cfg.options(guard_alpha=False))
    write_report_csv(rows, cfg.out / "verify-report.csv")
    bad = violations(rows)
    print(f"{len(rows)} checks, {len(bad)} violations")
    for row in bad[:20]:
        print(f"  VIOLATION {row.lemma_id} [{row.inputs}] margin={row.margin!r}")
    return 1 if bad else 0


def _cmd_figure(cfg: RunConfig, args) -> int:
    builder = _FIGURES.get(args.id)
    if builder is None:
        print(f"no figure with id {args.id}; available: {sorted(_FIGURES)}", file=sys.stderr)
        return 2
    out = cfg.out / f"figure-{args.id}.svg"
    nbytes = builder(cfg, out)
    print(f"wrote {nbytes} bytes to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equishoot",
        description="Shooting constructions for equivariant minimal hypersurfaces in round spheres",
    )
    parser.add_argument("--tol-abs", type=float, default=1e-12)
    parser.add_argument("--tol-rel", type=float, default=1e-10)
    parser.add_argument("--tol-event", type=float, default=1e-11)
    parser.add_argument("--tol-bisect", type=float, default=1e-10)
    parser.add_argument("--tol-corner", type=float, default=1e-8)
    parser.add_argument("--s-max", type=float, default=100.0)
    parser.add_argument("--eps-bdry", type=float, default=1e-9)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("out"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", help="integrate one shot and export samples")
    p.add_argument("--system", choices=["double", "triple"], default="double")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--alpha0", type=float, required=True)
    p.add_argument("--theta0", type=float, default=None)
    p.set_defaults(func=_cmd_integrate)

    p = sub.add_parser("torus", help="closed-orbit corner shot and assembly")
    p.add_argument("--n", type=int, default=2)
    p.set_defaults(func=_cmd_torus)

    p = sub.add_parser("infty", help="two-stage self-crossing orbit construction")
    p.add_argument("--n", type=int, default=2)
    p.set_defaults(func=_cmd_infty)

    p = sub.add_parser("ladder", help="interleaved initial-angle ladder")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--k", type=int, default=3)
    p.set_defaults(func=_cmd_ladder)

    p = sub.add_parser("spheres", help="boundary-to-boundary curves from hat rungs")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(func=_cmd_spheres)

    p = sub.add_parser("t4", help="free-boundary corner of the triple product")
    p.set_defaults(func=_cmd_t4)

    p = sub.add_parser("probe", help="turning-direction probes of centre shots")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--count", type=int, default=30)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("verify", help="run bound suites and write the report")
    p.add_argument("--suite", choices=["lemmas", "probes", "all"], default="all")
    p.add_argument("--n", type=int, default=None)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("figure", help="render a phase-portrait SVG")
    p.add_argument("--id", type=int, required=True)
    p.set_defaults(func=_cmd_figure)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = RunConfig(
        tol_abs=args.tol_abs,
        tol_rel=args.tol_rel,
        tol_event=args.tol_event,
        tol_bisect=args.tol_bisect,
        tol_corner=args.tol_corner,
        s_max=args.s_max,
        eps_bdry=args.eps_bdry,
        seed=args.seed,
        out=args.out,
    )
    try:
        return args.func(cfg, args)
    except BracketNotFound as exc:
        print(f"FALSIFICATION: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
