"""Singularity-free guiding vector fields for following self-intersecting
planar paths, with a unicycle guidance law, a trajectory-tracking baseline
and a fixed-step simulator."""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    ImplicitPath2D,
    ParametricPath,
    SurfacePair,
    UnknownPathError,
    builtin_path,
    distance_to_lifted_path,
    distance_to_path,
    lift_to_surfaces,
    rescale_to_unit_box,
)
from .field import (  # noqa: E402
    PlanarField,
    ProjectionOperator,
    SingularHeadingError,
    SpatialField,
    chi_closed_form,
    eval_planar,
    eval_spatial,
    jacobian_chi_p,
    min_field_norm,
    project,
)
from .control import (  # noqa: E402
    ControlOutput,
    GvfController,
    TrajTrackController,
    UnicycleState,
    gvf_control,
    heading_error,
    traj_track_control,
)
from .sim import (  # noqa: E402
    DisturbanceModel,
    NoiseModel,
    Scenario,
    Trace,
    run_closed_loop,
    run_integral_curve,
    run_perturbed,
    run_projected,
    run_scenario,
)
