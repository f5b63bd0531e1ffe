"""Zero-range process laboratory: microscopic dynamics, continuum limits,
and statistical verification of the scaling behavior of a tagged particle."""

from .kernel import (
    JumpKernel,
    RateFunction,
    Thermodynamics,
    kernel_from_name,
    nearest_neighbor_kernel,
    rate_from_name,
    uniform_kernel,
    validate_rate,
)
from .measures import (
    CanonicalEnsemble,
    DensityProfile,
    canonical_expectation,
    enumerate_canonical,
    equivalence_gap,
    profile_from_name,
    sample_local_equilibrium,
    sample_mu_marginal,
    sample_nu_origin,
)
from .dynamics import (
    Configuration,
    RecordSpec,
    SimulationState,
    TrajectoryRecord,
    environment_view,
    init_state,
    kmc_step,
    simulate,
)
from .hydro import (
    DiffusionPath,
    GridField,
    integrate_sde,
    interpolate_density,
    limit_quadratic_variation,
    solve_pde,
)
from . import analysis, errors

__version__ = "0.1.0"

__all__ = [
    "JumpKernel",
    "RateFunction",
    "Thermodynamics",
    "kernel_from_name",
    "nearest_neighbor_kernel",
    "rate_from_name",
    "uniform_kernel",
    "validate_rate",
    "CanonicalEnsemble",
    "DensityProfile",
    "canonical_expectation",
    "enumerate_canonical",
    "equivalence_gap",
    "profile_from_name",
    "sample_local_equilibrium",
    "sample_mu_marginal",
    "sample_nu_origin",
    "Configuration",
    "RecordSpec",
    "SimulationState",
    "TrajectoryRecord",
    "environment_view",
    "init_state",
    "kmc_step",
    "simulate",
    "DiffusionPath",
    "GridField",
    "integrate_sde",
    "interpolate_density",
    "limit_quadratic_variation",
    "solve_pde",
    "analysis",
    "errors",
]
