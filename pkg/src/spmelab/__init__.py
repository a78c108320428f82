"""spmelab: pathwise experiments for transport-driven degenerate diffusion.

The package solves the regularised 1D slow-diffusion equation along smooth
approximations of Brownian paths, transforms the output between frames and
into the pressure variable, compares against self-similar profiles, and
measures finite-time extinction statistics against a barrier-crossing bound.
"""

__version__ = "0.1.0"

from .barenblatt import (
    BarenblattProfile,
    dominating_profile,
    eval_density,
    eval_pressure,
    free_boundary_radius,
    support_rate_constant,
)
from .brownian import (
    BrownianPath,
    HoelderEstimate,
    MollifiedPath,
    Mollifier,
    hoelder_constant,
    mollify,
    path_seed_sequence,
    sample_path,
    sup_distance,
)
from .extinction import (
    ExtinctionRecord,
    McSummary,
    detect_extinction,
    hitting_time,
    mc_extinction,
    wilson_interval,
)
from .fields import DensityField, ExtendedField, Grid1D, PressureField
from .solver import (
    BarenblattSliceProfile,
    BumpProfile,
    SolverConfig,
    SolveTrace,
    ZeroProfile,
    diagnostics_report,
    initial_density,
    solve,
    stable_dt,
    step,
)
from .transforms import (
    flow_frame,
    from_pressure,
    pressure_residual,
    shift_field,
    to_pressure,
    upper_envelope,
)

__all__ = [
    "BarenblattProfile",
    "BarenblattSliceProfile",
    "BrownianPath",
    "BumpProfile",
    "DensityField",
    "ExtendedField",
    "ExtinctionRecord",
    "Grid1D",
    "HoelderEstimate",
    "McSummary",
    "MollifiedPath",
    "Mollifier",
    "PressureField",
    "SolverConfig",
    "SolveTrace",
    "ZeroProfile",
    "detect_extinction",
    "diagnostics_report",
    "dominating_profile",
    "eval_density",
    "eval_pressure",
    "flow_frame",
    "free_boundary_radius",
    "from_pressure",
    "hitting_time",
    "hoelder_constant",
    "initial_density",
    "mc_extinction",
    "mollify",
    "path_seed_sequence",
    "pressure_residual",
    "sample_path",
    "shift_field",
    "solve",
    "stable_dt",
    "step",
    "sup_distance",
    "support_rate_constant",
    "to_pressure",
    "upper_envelope",
    "wilson_interval",
]
