"""Numerical laboratory for graphical mean curvature flow.

Grids and discrete calculus, closed-form translator/sphere barriers, graph
geometry with evolution-identity residuals, a conservative flow solver,
quantitative-estimate checkers, and end-to-end sharpness experiments.
"""

from .grid import (
    Ball,
    EmptyRegionError,
    GradedGrid,
    Grid,
    InvalidGridError,
    ScalarField,
    UniformGrid,
    VectorField,
    divergence,
    gradient,
    quadrature,
    region_mask,
)
from .explicit import (
    AlternatingFamily,
    ConstructionError,
    DomainError,
    GrimReaper,
    ParameterError,
    SphereBarrier,
    alternating_eval,
    barrier_pair,
    grim_reaper_eval,
    initial_data_area_sharpness,
    initial_data_gradient_sharpness,
    sphere_barrier_height,
)
from .geometry import (
    GeometryFields,
    compute_geometry,
    heat_residual_eta,
    heat_residual_exp,
    heat_residual_v,
    heat_residual_v_weak,
    laplace_beltrami,
    phi_v_max,
)
from .solver import (
    CFLViolation,
    ComparisonReport,
    FlowTrajectory,
    SolverConfig,
    SolverError,
    comparison_check,
    evolve,
    read_trajectory_bin,
    step,
    write_trajectory_bin,
    write_trajectory_csv,
)
from .estimates import (
    EstimateReport,
    InstanceRejected,
    ODEInstance,
    PreconditionError,
    area_constant_fit,
    area_measurement,
    eh_bound_comparison,
    energy_identity_check,
    energy_identity_series,
    gradient_bound_chained,
    gradient_bound_explicit,
    height_bound,
    ode_bound,
    ode_check,
    saturating_oracle,
    stokes_area_check,
)
from .experiments import (
    ExperimentSpec,
    RunBundle,
    run_convergence,
    run_estimate_suite,
    run_experiment,
    run_identity_suite,
    run_ode_suite,
    run_sharpness_area,
    run_sharpness_gradient,
    write_bundle,
)

__version__ = "0.1.0"
