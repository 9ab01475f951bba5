"""Curve assembly by reflection and geometric certificates.

Shot segments are glued along the symmetry axes of the planar quotient into
closed orbits or boundary-to-boundary arcs.  Certificates are computed from
resampled polylines only (finite differences and quadrature), independently
of the integrator state, so they double as cross-checks of the shots.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import (
    HALF_PI,
    PI,
    QUARTER_PI,
    SystemParams,
    System,
    weight,
)
from .integrator import ExitKind, Trajectory


class AssembleError(ValueError):
    """Input segment does not match the requested assembly."""


class JunctionMismatch(RuntimeError):
    """Adjacent segments disagree beyond tolerance at a junction."""


class DegenerateTangency(RuntimeError):
    """A crossing is tangential at the working resolution."""


class CurveKind(enum.Enum):
    TORUS_ORBIT = "torus-orbit"
    SPHERE_CURVE = "sphere-curve"
    IMMERSED_TORUS_ORBIT = "immersed-torus-orbit"
    T4_ORBIT = "t4-orbit"


StateMap = Callable[[float, float, float], Tuple[float, float, float]]


def _identity(r: float, th: float, al: float) -> Tuple[float, float, float]:
    return (r, th, al)


def _axis_r(r: float, th: float, al: float) -> Tuple[float, float, float]:
    return (PI - r, th, PI - al)


def _axis_theta(r: float, th: float, al: float) -> Tuple[float, float, float]:
    return (r, HALF_PI - th, -al)


def _axis_both(r: float, th: float, al: float) -> Tuple[float, float, float]:
    return (PI - r, HALF_PI - th, al - PI)


def _octant_map(perm: Tuple[int, int, int]) -> StateMap:
    """Isometry of the triple-product quotient permuting the ambient axes.

    Positions map through the unit-sphere embedding
    (sin r cos th, sin r sin th, cos r); the tangent angle is pushed forward
    through the differential, which preserves arc length.
    """

    def smap(r: float, th: float, al: float) -> Tuple[float, float, float]:
        sr, cr = math.sin(r), math.cos(r)
        st, ct = math.sin(th), math.cos(th)
        pos = (sr * ct, sr * st, cr)
        dr, dth = math.cos(al), math.sin(al) / sr
        vel = (
            dr * cr * ct - dth * sr * st,
            dr * cr * st + dth * sr * ct,
            -dr * sr,
        )
        p = tuple(pos[i] for i in perm)
        v = tuple(vel[i] for i in perm)
        r2 = math.acos(max(-1.0, min(1.0, p[2])))
        th2 = math.atan2(p[1], p[0])
        dr2 = -v[2] / math.sqrt(max(1e-300, 1.0 - p[2] * p[2]))
        dth2 = (p[0] * v[1] - p[1] * v[0]) / (p[0] * p[0] + p[1] * p[1])
        al2 = math.atan2(math.sin(r2) * dth2, dr2)
        return (r2, th2, al2)

    return smap


_SWAP_XY = (1, 0, 2)
_SWAP_XZ = (2, 1, 0)


def _compose(outer: Tuple[int, int, int], inner: Tuple[int, int, int]) -> Tuple[int, int, int]:
    # permutations act on coordinates: (outer . inner)(p)[i] = p[inner[outer[i]]]
    return (inner[outer[0]], inner[outer[1]], inner[outer[2]])


@dataclass(frozen=True)
class CurveSegment:
    trajectory: Trajectory
    smap: StateMap
    reverse: bool
    s_start: float

    @property
    def length(self) -> float:
        return self.trajectory.s_exit

    @property
    def s_end(self) -> float:
        return self.s_start + self.length

    def point(self, s_global: float) -> Tuple[float, float, float]:
        """Mapped state at global arc length; alpha follows the traversal."""
        local = min(max(s_global - self.s_start, 0.0), self.length)
        native = self.length - local if self.reverse else local
        r, th, al = self.smap(*self.trajectory.raw_at(native))
        if self.reverse:
            al += PI
        return (r, th, al)

    def endpoint(self, end: int) -> Tuple[float, float, float]:
        return self.point(self.s_start if end == 0 else self.s_end)


@dataclass(frozen=True)
class Junction:
    s: float
    position_gap: float
    tangent_gap: float


class AssembledCurve:
    """Ordered reflected shot segments forming one curve in the quotient."""

    def __init__(
        self,
        kind: CurveKind,
        params: SystemParams,
        segments: List[CurveSegment],
        closed: bool,
        junction_pos_tol: float = 1e-9,
        junction_tan_tol: float = 1e-8,
    ):
        self.kind = kind
        self.params = params
        self.segments = segments
        self.closed = closed
        self.length = segments[-1].s_end
        self.junctions = self._check_junctions(junction_pos_tol, junction_tan_tol)

    def _check_junctions(self, pos_tol: float, tan_tol: float) -> List[Junction]:
        junctions: List[Junction] = []
        pairs = list(zip(self.segments, self.segments[1:]))
        if self.closed:
            pairs.append((self.segments[-1], self.segments[0]))
        for left, right in pairs:
            a = left.endpoint(1)
            b = right.endpoint(0)
            gap = math.hypot(a[0] - b[0], a[1] - b[1])
            dtan = abs(a[2] - b[2]) % PI
            dtan = min(dtan, PI - dtan)
            junctions.append(Junction(left.s_end, gap, dtan))
            if gap > pos_tol:
                raise JunctionMismatch(
                    f"{self.kind.value}: position gap {gap:.3e} > {pos_tol:.1e} at s={left.s_end:.6f}"
                )
            if dtan > tan_tol:
                raise JunctionMismatch(
                    f"{self.kind.value}: tangent gap {dtan:.3e} > {tan_tol:.1e} at s={left.s_end:.6f}"
                )
        return junctions

    @property
    def closure_gap(self) -> float:
        if not self.closed:
            return math.nan
        a = self.segments[0].endpoint(0)
        b = self.segments[-1].endpoint(1)
        return math.hypot(a[0] - b[0], a[1] - b[1])

    def resample(self, m: int) -> np.ndarray:
        """(m, 4) array of (s, r, theta, alpha_traversal), equally spaced in s."""
        if m < 2:
            raise ValueError("resample needs m >= 2")
        out = np.empty((m, 4))
        bounds = [seg.s_end for seg in self.segments]
        j = 0
        for i in range(m):
            s = self.length * i / (m - 1)
            while j < len(bounds) - 1 and s > bounds[j]:
                j += 1
            r, th, al = self.segments[j].point(s)
            out[i] = (s, r, th, al)
        return out

    def endpoint_states(self) -> Tuple[Tuple[float, float, float], Tuple[float, float, float]]:
        return self.segments[0].endpoint(0), self.segments[-1].endpoint(1)


def assemble(
    shot: Trajectory,
    kind: CurveKind,
    junction_pos_tol: float = 1e-9,
    junction_tan_tol: float = 1e-8,
) -> AssembledCurve:
    """Reflect a corner/half shot into the full curve of the given kind.

    TORUS_ORBIT: side-exit corner quarter, reflected across both planar axes
    (4 segments, closed).  SPHERE_CURVE: hat half glued to its central
    reflection at the centre (2 segments, open, boundary to boundary).
    IMMERSED_TORUS_ORBIT: check half ending on the bisector with vertical
    tangent, reflected across both axes (4 segments, closed).
    T4_ORBIT: free-boundary quarter walked around the fundamental-domain
    hexagon of the triple product (6 segments, closed).
    """
    if isinstance(shot, AssembledCurve):
        raise AssembleError("input is already an assembled curve")
    params = shot.params
    exit_state = shot.exit.state_exit

    if kind is CurveKind.TORUS_ORBIT:
        if params.system is not System.DOUBLE_PRODUCT:
            raise AssembleError("torus orbit needs a double-product quarter")
        if abs(exit_state.alpha) > 1e-6 or abs(exit_state.r - HALF_PI) > 1e-6:
            raise AssembleError(
                "torus orbit needs a corner quarter exiting at r = pi/2 with alpha = 0"
            )
        L = shot.s_exit
        segments = [
            CurveSegment(shot, _identity, False, 0.0),
            CurveSegment(shot, _axis_r, True, L),
            CurveSegment(shot, _axis_both, False, 2 * L),
            CurveSegment(shot, _axis_theta, True, 3 * L),
        ]
        return AssembledCurve(kind, params, segments, True, junction_pos_tol, junction_tan_tol)

    if kind is CurveKind.SPHERE_CURVE:
        if params.system is not System.DOUBLE_PRODUCT:
            raise AssembleError("sphere curve needs a double-product half")
        if shot.exit.kind is not ExitKind.BLOW_UP:
            raise AssembleError("sphere curve needs a blow-up-truncated hat half")
        from .dynamics import SymmetryKind, apply_symmetry

        L = shot.s_exit
        # backward half: the central time-reversed copy is again a forward
        # solution ending exactly at the centre start point
        backward = apply_symmetry(shot, SymmetryKind.CENTRAL_TIME_REVERSED)
        segments = [
            CurveSegment(backward, _identity, False, 0.0),
            CurveSegment(shot, _identity, False, L),
        ]
        return AssembledCurve(kind, params, segments, False, junction_pos_tol, junction_tan_tol)

    if kind is CurveKind.IMMERSED_TORUS_ORBIT:
        if params.system is not System.DOUBLE_PRODUCT:
            raise AssembleError("immersed torus orbit needs a double-product half")
        if shot.exit.kind is not ExitKind.VARTHETA_ZERO or abs(abs(exit_state.alpha) - HALF_PI) > 1e-6:
            raise AssembleError(
                "immersed torus orbit needs a half ending on the bisector with "
                "a vertical tangent"
            )
        L = shot.s_exit
        reflect = _axis_theta
        axis_r_reflect = lambda r, th, al: (PI - r, HALF_PI - th, PI + al)
        segments = [
            CurveSegment(shot, _identity, False, 0.0),
            CurveSegment(shot, reflect, True, L),
            CurveSegment(shot, _axis_r, False, 2 * L),
            CurveSegment(shot, axis_r_reflect, True, 3 * L),
        ]
        return AssembledCurve(kind, params, segments, True, junction_pos_tol, junction_tan_tol)

    if kind is CurveKind.T4_ORBIT:
        if params.system is not System.TRIPLE_PRODUCT:
            raise AssembleError("t4 orbit needs a triple-product quarter")
        if shot.exit.kind is not ExitKind.APPENDIX_BOUNDARY:
            raise AssembleError("t4 orbit needs a free-boundary quarter")
        L = shot.s_exit
        ident: Tuple[int, int, int] = (0, 1, 2)
        perms = [ident]
        for i in range(5):
            gen = _SWAP_XZ if i % 2 == 0 else _SWAP_XY
            perms.append(_compose(perms[-1], gen))
        segments = []
        for i, perm in enumerate(perms):
            smap = _identity if perm == ident else _octant_map(perm)
            segments.append(CurveSegment(shot, smap, i % 2 == 1, i * L))
        return AssembledCurve(kind, params, segments, True, junction_pos_tol, junction_tan_tol)

    raise AssembleError(f"unknown curve kind {kind!r}")


# ---------------------------------------------------------------------------
# Certificates


def _periodic_derivative(values: np.ndarray, h: float) -> np.ndarray:
    vp1, vp2 = np.roll(values, -1), np.roll(values, -2)
    vm1, vm2 = np.roll(values, 1), np.roll(values, 2)
    return (-vp2 + 8.0 * vp1 - 8.0 * vm1 + vm2) / (12.0 * h)


def _interior_derivative(values: np.ndarray, h: float) -> np.ndarray:
    d = np.full_like(values, np.nan)
    d[2:-2] = (-values[4:] + 8.0 * values[3:-1] - 8.0 * values[1:-3] + values[:-4]) / (12.0 * h)
    return d


def _resampled_arrays(curve, m: int):
    if isinstance(curve, AssembledCurve):
        data = curve.resample(m)
        return data[:, 0], data[:, 1], data[:, 2], curve.closed, curve.params
    # plain trajectory: treat as an open curve
    from .integrator import resample as traj_resample

    pts = traj_resample(curve, m)
    s = np.array([p[0] for p in pts])
    r = np.array([p[1].r for p in pts])
    th = np.array([p[1].theta for p in pts])
    return s, r, th, False, curve.params


def curvature_residual(
    curve,
    params: Optional[SystemParams] = None,
    m: Optional[int] = None,
    stratum_margin: float = 0.05,
) -> float:
    """Maximum defect of the minimality condition along the resampled curve.

    All derivatives are taken by fourth-order finite differences of the
    resampled positions (the tangent angle is reconstructed from them), so
    the certificate is independent of the integrator's own state variables.
    Samples closer than stratum_margin to the singular strata are excluded,
    as are stencil widths at open ends.  The default sample count targets
    the step size balancing truncation against interpolant noise.
    """
    if m is None:
        length = curve.length if isinstance(curve, AssembledCurve) else curve.s_exit
        m = int(min(max(4096, length / 7e-4), 40000))
    s, r, th, closed, curve_params = _resampled_arrays(curve, m)
    params = params or curve_params
    if closed:
        s, r, th = s[:-1], r[:-1], th[:-1]
        h = s[1] - s[0]
        deriv = _periodic_derivative
    else:
        h = s[1] - s[0]
        deriv = _interior_derivative
    ddr = deriv(r, h)
    ddth = deriv(th, h)
    # tangent angle rate via the components (no unwinding issues on loops):
    # alpha' = p q' - q p' with p = r', q = sin(r) theta', p^2 + q^2 = 1
    p = ddr
    q = np.sin(r) * ddth
    ddalpha = (p * deriv(q, h) - q * deriv(p, h)) / (p * p + q * q)

    if params.system is System.DOUBLE_PRODUCT:
        n = params.n
        res = (
            ddalpha
            - (2 * n - 2) * (np.cos(2 * th) / np.sin(2 * th)) / np.sin(r) * ddr
            + (2 * n - 1) * np.cos(r) * ddth
        )
        margin_ok = (
            (th > stratum_margin)
            & (th < HALF_PI - stratum_margin)
            & (r > stratum_margin)
            & (r < PI - stratum_margin)
        )
    else:
        res = (
            ddalpha
            - 2.0 * (np.cos(2 * th) / np.sin(2 * th)) / np.sin(r) * ddr
            + (1.0 + 2.0 * np.cos(2 * r)) / np.cos(r) * ddth
        )
        margin_ok = (
            (th > stratum_margin)
            & (th < HALF_PI - stratum_margin)
            & (r > stratum_margin)
            & (r < HALF_PI - stratum_margin)
        )
    ok = margin_ok & np.isfinite(res)
    if not closed:
        ok[:4] = False
        ok[-4:] = False
    if not ok.any():
        raise ValueError("no admissible samples for the curvature residual")
    return float(np.max(np.abs(res[ok])))


def lifted_volume(curve: AssembledCurve, params: Optional[SystemParams] = None, m: int = 4097) -> float:
    """Volume of the lifted hypersurface: arc-length quadrature of the weight."""
    from scipy.integrate import simpson

    s, r, th, _closed, curve_params = _resampled_arrays(curve, m)
    params = params or curve_params
    w = np.array([weight(ri, ti, params) for ri, ti in zip(r, th)])
    return float(simpson(w, x=s))


# ---------------------------------------------------------------------------
# Crossing counts


def _bisector_crossings(vt: np.ndarray, closed: bool, zero_tol: float = 1e-9) -> int:
    """Transversal crossings of vartheta = 0 along a sample sequence.

    Runs of on-axis samples are merged; a leading or trailing run on an open
    curve counts as one crossing (the curve leaves the axis transversally).
    """
    sign = np.where(vt > zero_tol, 1, np.where(vt < -zero_tol, -1, 0))
    # compress runs
    comp: List[int] = []
    for v in sign:
        if not comp or comp[-1] != v:
            comp.append(int(v))
    if closed and len(comp) > 1 and comp[0] == comp[-1]:
        comp.pop()
    count = 0
    k = 0
    while k < len(comp):
        if comp[k] == 0:
            prev = comp[k - 1] if k > 0 else None
            nxt = comp[k + 1] if k + 1 < len(comp) else None
            if closed:
                prev = comp[k - 1] if k > 0 else comp[-1]
                nxt = comp[(k + 1) % len(comp)]
            if prev is None or nxt is None:
                count += 1          # endpoint run of an open curve
            elif prev != nxt:
                count += 1          # pass-through
            else:
                raise DegenerateTangency(
                    "curve touches the bisector tangentially at sample resolution"
                )
        elif k > 0 and comp[k - 1] != 0 and comp[k] != comp[k - 1]:
            count += 1
        k += 1
    return count


def _proper_crossings(P: np.ndarray, closed: bool) -> List[Tuple[float, float]]:
    """Transversal self-crossing points of a polyline by exhaustive pair tests."""
    mpts = len(P)
    a = P[:-1]
    b = P[1:]
    nedges = mpts - 1
    pts: List[Tuple[float, float]] = []
    d = b - a
    for i in range(nedges - 2):
        j0 = i + 2
        jmax = nedges if not (closed and i == 0) else nedges - 1
        if j0 >= jmax:
            continue
        aj = a[j0:jmax]
        bj = b[j0:jmax]
        dj = d[j0:jmax]
        r = d[i]
        qp = aj - a[i]
        denom = r[0] * dj[:, 1] - r[1] * dj[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qp[:, 0] * dj[:, 1] - qp[:, 1] * dj[:, 0]) / denom
            u = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / denom
        hit = (np.abs(denom) > 1e-300) & (t > 0) & (t < 1) & (u > 0) & (u < 1)
        for idx in np.nonzero(hit)[0]:
            x = a[i][0] + t[idx] * r[0]
            y = a[i][1] + t[idx] * r[1]
            pts.append((float(x), float(y)))
    return pts


def _vertex_crossings(P: np.ndarray, closed: bool, eps: float) -> List[Tuple[float, float]]:
    """Crossings where a vertex sits on a non-adjacent edge (or vertex)."""
    mpts = len(P) - 1 if closed else len(P)
    pts: List[Tuple[float, float]] = []
    nedges = len(P) - 1
    a, b = P[:-1], P[1:]
    d = b - a
    lens2 = np.einsum("ij,ij->i", d, d)
    for k in range(mpts):
        if not closed and (k == 0 or k == mpts - 1):
            continue
        v = P[k]
        prev = P[k - 1] if k > 0 else P[-2]
        nxt = P[k + 1]
        # distance of v to every edge
        t = np.clip(np.einsum("ij,ij->i", v - a, d) / np.maximum(lens2, 1e-300), 0.0, 1.0)
        proj = a + t[:, None] * d
        dist = np.hypot(proj[:, 0] - v[0], proj[:, 1] - v[1])
        near = dist < eps
        # exclude edges incident to vertex k
        for e in (k - 1, k, k + 1):
            idx = e % nedges if closed else e
            if 0 <= idx < nedges:
                near[idx] = False
        if closed and k == 0:
            near[nedges - 1] = False
        for e in np.nonzero(near)[0]:
            # interior crossing only when the two local edges straddle edge e
            ed = d[e]
            side_prev = ed[0] * (prev[1] - a[e][1]) - ed[1] * (prev[0] - a[e][0])
            side_next = ed[0] * (nxt[1] - a[e][1]) - ed[1] * (nxt[0] - a[e][0])
            if side_prev * side_next < 0.0:
                pts.append((float(v[0]), float(v[1])))
    return pts


def _cluster_points(pts: Sequence[Tuple[float, float]], radius: float) -> List[Tuple[float, float]]:
    clusters: List[Tuple[float, float]] = []
    for p in pts:
        for q in clusters:
            if math.hypot(p[0] - q[0], p[1] - q[1]) < radius:
                break
        else:
            clusters.append(p)
    return clusters


def count_crossings(curve, m: int = 4096) -> Tuple[int, int]:
    """(bisector crossings, transversal self-intersections) of a curve.

    Self-intersections are found by exhaustive segment-pair tests on the
    resampled polyline, with vertex-sharing passes resolved by straddling
    tests; coincident hits are clustered to one geometric crossing.
    """
    if isinstance(curve, AssembledCurve):
        data = curve.resample(m)
        r, th = data[:, 1], data[:, 2]
        closed = curve.closed
    else:
        from .integrator import resample as traj_resample

        pts = traj_resample(curve, m)
        r = np.array([p[1].r for p in pts])
        th = np.array([p[1].theta for p in pts])
        closed = False
    vt = th - QUARTER_PI
    z_crossings = _bisector_crossings(vt, closed)
    P = np.column_stack([r, th])
    edge = float(np.max(np.hypot(np.diff(P[:, 0]), np.diff(P[:, 1]))))
    hits = _proper_crossings(P, closed) + _vertex_crossings(P, closed, eps=edge * 1e-6)
    crossings = _cluster_points(hits, radius=4.0 * edge)
    return z_crossings, len(crossings)


# ---------------------------------------------------------------------------
# Endpoint certification for boundary-reaching curves


def corner_limit_certificate(traj: Trajectory) -> Tuple[float, float]:
    """Extrapolated (|vartheta|, |alpha|) limit of a blow-up-truncated half.

    Fits the last decade of samples (by distance to the limiting corner)
    linearly in that distance and reports the extrapolated axis values.
    """
    _s, y = traj.sample_arrays
    vt = np.abs(y[:, 1] - QUARTER_PI)
    al = np.abs(y[:, 2])
    dist = np.hypot(QUARTER_PI - vt, HALF_PI - al)
    d_end = max(dist[-1], 1e-300)
    sel = (dist <= 10.0 * d_end) & (dist >= d_end * 0.999)
    if sel.sum() < 3:
        sel = dist <= 100.0 * d_end
    A = np.column_stack([np.ones(sel.sum()), dist[sel]])
    vt_fit = np.linalg.lstsq(A, vt[sel], rcond=None)[0][0]
    al_fit = np.linalg.lstsq(A, al[sel], rcond=None)[0][0]
    return float(vt_fit), float(al_fit)


def polyline_min_distances(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each query point to a polyline (exact per segment)."""
    a, b = polyline[:-1], polyline[1:]
    d = b - a
    lens2 = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    out = np.empty(len(points))
    for i, p in enumerate(points):
        t = np.clip(((p - a) * d).sum(axis=1) / lens2, 0.0, 1.0)
        proj = a + t[:, None] * d
        out[i] = np.min(np.hypot(proj[:, 0] - p[0], proj[:, 1] - p[1]))
    return out
