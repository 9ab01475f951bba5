"""Shooting constructions for equivariant minimal hypersurfaces in round spheres."""

from .dynamics import (
    CORNER_RADIUS,
    Derivative,
    DomainError,
    State,
    SymmetryKind,
    System,
    SystemParams,
    XyzState,
    apply_symmetry,
    boundary_gauge,
    chart_inverse,
    chart_transform,
    double_product,
    eval_field,
    eval_field_xyz,
    triple_product,
    weight,
)
from .integrator import (
    EventDef,
    ExitEvent,
    ExitKind,
    IntegratorOptions,
    NoCrossing,
    Trajectory,
    integrate,
    locate_event,
    resample,
)

__all__ = [
    "CORNER_RADIUS",
    "Derivative",
    "DomainError",
    "EventDef",
    "ExitEvent",
    "ExitKind",
    "IntegratorOptions",
    "NoCrossing",
    "State",
    "SymmetryKind",
    "System",
    "SystemParams",
    "Trajectory",
    "XyzState",
    "apply_symmetry",
    "boundary_gauge",
    "chart_inverse",
    "chart_transform",
    "double_product",
    "eval_field",
    "eval_field_xyz",
    "integrate",
    "locate_event",
    "resample",
    "triple_product",
    "weight",
]
