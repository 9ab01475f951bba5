"""Reduced dynamics for equivariant minimal-hypersurface curves on round spheres.

Both systems live on a planar quotient with polar coordinates ``(r, theta)``
and orbital metric ``g = dr^2 + sin(r)^2 dtheta^2``.  A curve parametrised by
arc length lifts to a minimal hypersurface exactly when it is a geodesic of
the conformal metric ``V^2 g``, where ``V(r, theta)`` is the volume of the
group orbit over the point.  With ``alpha`` the angle between the curve and
the ``r``-direction this becomes an autonomous 3x3 system

    dr/ds     = cos(alpha)
    dtheta/ds = sin(alpha) / sin(r)
    dalpha/ds = (d log V/dtheta) cos(alpha)/sin(r) - (d log V/dr) sin(alpha)

DOUBLE_PRODUCT (any n >= 2) uses ``V ~ sin(r)^(2n-2) sin(2 theta)^(n-1)`` on
``(0, pi) x (0, pi/2)``.  TRIPLE_PRODUCT (n = 2 only) uses
``W ~ sin(r)^2 cos(r) sin(2 theta)`` on ``(0, pi/2) x (0, pi/2)``.

Conventions: ``alpha`` is unwrapped on the real line (reporting may reduce
it); ``vartheta = theta - pi/4`` is a derived view of the same state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Tuple

PI = math.pi
HALF_PI = math.pi / 2.0
QUARTER_PI = math.pi / 4.0


class DomainError(ValueError):
    """State lies on or outside the singular boundary of the reduction."""


class System(enum.Enum):
    DOUBLE_PRODUCT = "double"
    TRIPLE_PRODUCT = "triple"


@dataclass(frozen=True)
class SystemParams:
    """Which reduction to integrate and its dimension parameter."""

    system: System = System.DOUBLE_PRODUCT
    n: int = 2

    def __post_init__(self) -> None:
        if self.system is System.DOUBLE_PRODUCT:
            if self.n < 2:
                raise ValueError("double-product reduction requires n >= 2")
        elif self.n != 2:
            raise ValueError("triple-product reduction is implemented for n = 2 only")

    @property
    def r_sup(self) -> float:
        """Least upper bound of the r-range of the open quotient domain."""
        return PI if self.system is System.DOUBLE_PRODUCT else HALF_PI


def double_product(n: int = 2) -> SystemParams:
    return SystemParams(System.DOUBLE_PRODUCT, n)


def triple_product() -> SystemParams:
    return SystemParams(System.TRIPLE_PRODUCT, 2)


@dataclass(frozen=True)
class State:
    """A point (r, theta, alpha) of the reduced phase space."""

    r: float
    theta: float
    alpha: float

    @property
    def vartheta(self) -> float:
        return self.theta - QUARTER_PI

    def astuple(self) -> Tuple[float, float, float]:
        return (self.r, self.theta, self.alpha)


@dataclass(frozen=True)
class Derivative:
    dr: float
    dtheta: float
    dalpha: float

    def astuple(self) -> Tuple[float, float, float]:
        return (self.dr, self.dtheta, self.dalpha)


def is_interior(r: float, theta: float, params: SystemParams) -> bool:
    """Strict interior of the open quotient domain (alpha is unconstrained)."""
    return 0.0 < r < params.r_sup and 0.0 < theta < HALF_PI


def require_interior(state: State, params: SystemParams) -> None:
    if not is_interior(state.r, state.theta, params):
        raise DomainError(
            f"state (r={state.r!r}, theta={state.theta!r}) is not interior to "
            f"the {params.system.value}-product quotient"
        )


def make_rhs(params: SystemParams) -> Callable[[float, float, float], Tuple[float, float, float]]:
    """Unchecked fast right-hand side (r, theta, alpha) -> derivatives.

    No domain validation: callers that may step outside the quotient must
    guard against the resulting ZeroDivisionError / non-finite values.
    """
    if params.system is System.DOUBLE_PRODUCT:
        a = 2.0 * params.n - 2.0
        b = 2.0 * params.n - 1.0

        def rhs(r: float, theta: float, alpha: float) -> Tuple[float, float, float]:
            sr = math.sin(r)
            ca = math.cos(alpha)
            sa = math.sin(alpha)
            s2t = math.sin(2.0 * theta)
            return (
                ca,
                sa / sr,
                a * (math.cos(2.0 * theta) / s2t) * ca / sr - b * (math.cos(r) / sr) * sa,
            )

        return rhs

    def rhs_triple(r: float, theta: float, alpha: float) -> Tuple[float, float, float]:
        sr = math.sin(r)
        ca = math.cos(alpha)
        sa = math.sin(alpha)
        s2t = math.sin(2.0 * theta)
        s2r = math.sin(2.0 * r)
        return (
            ca,
            sa / sr,
            2.0 * (math.cos(2.0 * theta) / s2t) * ca / sr
            - ((2.0 + 4.0 * math.cos(2.0 * r)) / s2r) * sa,
        )

    return rhs_triple


def eval_field(state: State, params: SystemParams) -> Derivative:
    """Evaluate the reduced vector field at an interior state.

    Raises DomainError on the singular strata (sin r = 0, theta in {0, pi/2},
    and additionally sin 2r = 0 for the triple-product system).
    """
    require_interior(state, params)
    dr, dth, dal = make_rhs(params)(state.r, state.theta, state.alpha)
    return Derivative(dr, dth, dal)


# ---------------------------------------------------------------------------
# Orbit-volume weights


def sphere_volume(n: int) -> float:
    """Volume of the unit (n-1)-sphere in R^n, 2 pi^(n/2) / Gamma(n/2)."""
    return 2.0 * PI ** (n / 2.0) / math.gamma(n / 2.0)


def weight(r: float, theta: float, params: SystemParams) -> float:
    """Orbit volume over (r, theta); zero exactly on the boundary strata."""
    if params.system is System.DOUBLE_PRODUCT:
        n = params.n
        om = sphere_volume(n)
        return om * om * math.sin(r) ** (2 * n - 2) * math.sin(2.0 * theta) ** (n - 1) / 2.0 ** (n - 1)
    return 4.0 * PI ** 3 * math.sin(r) ** 2 * math.cos(r) * math.sin(2.0 * theta)


# ---------------------------------------------------------------------------
# Free-boundary gauge of the triple-product fundamental domain


def boundary_gauge(r: float, theta: float) -> Tuple[float, float]:
    """Return (u, v) with u = tan(r) cos(theta), v = -arctan(cos(r) tan(theta)).

    u = 1 traces the free-boundary arc of the fundamental domain; v is the
    angle alpha of its outward normal at (r, theta).
    """
    if not 0.0 < r < HALF_PI:
        raise DomainError(f"boundary gauge needs r in (0, pi/2), got {r!r}")
    u = math.tan(r) * math.cos(theta)
    v = -math.atan(math.cos(r) * math.tan(theta))
    return u, v


CORNER_RADIUS = math.atan(math.sqrt(2.0))  # u(r, pi/4) = 1 at this r


# ---------------------------------------------------------------------------
# Side-shooting chart x = tan r, y = cot 2 theta, z = -cot alpha


@dataclass(frozen=True)
class XyzState:
    """Chart adapted to shots leaving through the side of the shooting box."""

    x: float
    y: float
    z: float

    def astuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)


def chart_transform(state: State) -> XyzState:
    """Map (r, theta, alpha) -> (tan r, cot 2 theta, -cot alpha).

    Valid for r in (0, pi/2), theta in (0, pi/4], alpha in [-pi/2, 0).
    """
    r, theta, alpha = state.r, state.theta, state.alpha
    if not 0.0 < r < HALF_PI:
        raise DomainError(f"chart needs r in (0, pi/2), got {r!r}")
    if not 0.0 < theta <= QUARTER_PI:
        raise DomainError(f"chart needs theta in (0, pi/4], got {theta!r}")
    if not -HALF_PI <= alpha < 0.0:
        raise DomainError(f"chart needs alpha in [-pi/2, 0), got {alpha!r}")
    return XyzState(
        math.tan(r),
        math.cos(2.0 * theta) / math.sin(2.0 * theta),
        -math.cos(alpha) / math.sin(alpha),
    )


def chart_inverse(xyz: XyzState) -> State:
    """Inverse of chart_transform on the closed octant x > 0, y >= 0, z >= 0."""
    x, y, z = xyz.x, xyz.y, xyz.z
    if x <= 0.0 or y < 0.0 or z < 0.0:
        raise DomainError(f"chart inverse needs x > 0, y >= 0, z >= 0, got {xyz!r}")
    return State(
        math.atan(x),
        QUARTER_PI - 0.5 * math.atan(y),
        math.atan(z) - HALF_PI,
    )


def eval_field_xyz(xyz: XyzState, n: int) -> Tuple[float, float, float]:
    """Right-hand side of the side-shooting system; all components >= 0."""
    x, y, z = xyz.x, xyz.y, xyz.z
    if x <= 0.0:
        raise DomainError(f"side chart needs x > 0, got {x!r}")
    rz = math.sqrt(z * z + 1.0)
    rx = math.sqrt(x * x + 1.0)
    return (
        (x * x + 1.0) * z / rz,
        2.0 * (y * y + 1.0) * rx / (x * rz),
        (2.0 * n - 2.0) * y * z * rz * rx / x + (2.0 * n - 1.0) * rz / x,
    )


# ---------------------------------------------------------------------------
# Symmetries


class SymmetryKind(enum.Enum):
    """Solution-preserving trajectory maps, each an involution.

    REFLECT_VARTHETA       (r, vt, a)(s)  ->  (r, -vt, -a)(s)
    CENTRAL_TIME_REVERSED  (r, vt, a)(s)  ->  (pi - r, -vt, a)(S - s)
    AXIS_R                 (r, vt, a)(s)  ->  (pi - r, vt, pi - a)(s)
    AXIS_THETA             theta reflected across pi/4, same map as
                           REFLECT_VARTHETA in the original coordinates.
    """

    REFLECT_VARTHETA = "reflect-vartheta"
    CENTRAL_TIME_REVERSED = "central-time-reversed"
    AXIS_R = "axis-r"
    AXIS_THETA = "axis-theta"


def symmetry_state_map(kind: SymmetryKind) -> Callable[[float, float, float], Tuple[float, float, float]]:
    """Pointwise (r, theta, alpha) map of the symmetry (time handled by caller)."""
    if kind in (SymmetryKind.REFLECT_VARTHETA, SymmetryKind.AXIS_THETA):
        return lambda r, th, al: (r, HALF_PI - th, -al)
    if kind is SymmetryKind.CENTRAL_TIME_REVERSED:
        return lambda r, th, al: (PI - r, HALF_PI - th, al)
    return lambda r, th, al: (PI - r, th, PI - al)


def symmetry_reverses_time(kind: SymmetryKind) -> bool:
    return kind is SymmetryKind.CENTRAL_TIME_REVERSED


def apply_symmetry(trajectory, kind: SymmetryKind):
    """Map a trajectory by one of the symmetries; result solves the same system."""
    from .integrator import transform_trajectory

    return transform_trajectory(trajectory, symmetry_state_map(kind), symmetry_reverses_time(kind))
