"""Damped pressure waves on pipe networks.

Mixed finite elements on metric graphs produce a linear descriptor system
whose state splits into pressures, fluxes and junction multipliers; Krylov
moment matching with compatibility-restoring basis modifications yields
reduced models that keep mass conservation, energy dissipation and steady
states of the full model.
"""

from .descriptor import (
    DescriptorSystem,
    MomentSequence,
    SingularPencilError,
    build_descriptor,
    from_fem,
    moments,
    solve_shifted,
    steady_state,
    transfer,
)
from .diagnostics import (
    ComparisonReport,
    DecayFit,
    fit_decay_rate,
    reproduce_table_energy,
    reproduce_table_mass,
    verify_moment_matching,
)
from .fem import FemSystem, Mesh, assemble, check_A0, project_initial
from .mor import (
    DROP_TOL,
    KrylovBasis,
    ProjectionBasis,
    ReducedSystem,
    SurjectivityError,
    build_compatible_bases,
    check_compatibility,
    cs_split,
    krylov_iterate,
    min_norm_solve,
    ortho,
    project,
    project_initial_reduced,
    standard_bases,
)
from .network import (
    Edge,
    Network,
    builtin_scenario,
    builtin_scenarios,
    classify_vertices,
    incidence_sign,
    network_from_dict,
)
from .timeint import (
    BalanceResiduals,
    SimulationTrace,
    SingularStepError,
    ThetaScheme,
    balance_residuals,
    hat_input,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Edge",
    "Network",
    "builtin_scenario",
    "builtin_scenarios",
    "classify_vertices",
    "incidence_sign",
    "network_from_dict",
    "FemSystem",
    "Mesh",
    "assemble",
    "check_A0",
    "project_initial",
    "DescriptorSystem",
    "MomentSequence",
    "SingularPencilError",
    "build_descriptor",
    "from_fem",
    "moments",
    "solve_shifted",
    "steady_state",
    "transfer",
    "DROP_TOL",
    "KrylovBasis",
    "ProjectionBasis",
    "ReducedSystem",
    "SurjectivityError",
    "build_compatible_bases",
    "check_compatibility",
    "cs_split",
    "krylov_iterate",
    "min_norm_solve",
    "ortho",
    "project",
    "project_initial_reduced",
    "standard_bases",
    "BalanceResiduals",
    "SimulationTrace",
    "SingularStepError",
    "ThetaScheme",
    "balance_residuals",
    "hat_input",
    "simulate",
    "ComparisonReport",
    "DecayFit",
    "fit_decay_rate",
    "reproduce_table_energy",
    "reproduce_table_mass",
    "verify_moment_matching",
]
