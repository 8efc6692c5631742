"""Discontinuous Galerkin solver for the two-species heterodimer
reaction-diffusion model on polytopal grids, with kinetic analysis,
manufactured-solution verification and biomarker simulation tools."""

from .assembly import (
    NonlinearForm,
    PenaltyField,
    SystemOperators,
    assemble_boundary_data,
    assemble_diffusion,
    assemble_forcing,
    assemble_mass,
    assemble_nonlinear,
    assemble_reaction,
    assemble_system,
    export_matrix,
    penalty_field,
)
from .kinetics import (
    AdmissibilityError,
    Equilibria,
    ModelParams,
    check_admissibility,
    diffusion_field,
    diffusion_tensor,
    equilibria,
    fk_alpha,
    min_wave_speed,
)
from .mesh import (
    DIRICHLET,
    INTERNAL,
    NEUMANN,
    MeshError,
    MeshFormatError,
    MeshTopologyError,
    PolyMesh,
    build_cartesian_grid,
    harmonic_average,
    mesh_report,
    read_mesh,
    tag_boundary,
    write_mesh,
)
from .sim import (
    BiomarkerSeries,
    Region,
    biomarker,
    biomarker_series,
    export_fields,
    front_speed,
    run_seeded,
    seeded_initial_state,
    sensitivity_diffusion_split,
    staging,
)
from .space import (
    DGSpace,
    build_space,
    dg3_norm,
    dg_norm,
    energy_norm,
    l2_norm,
)
from .timestepping import (
    SchemeConfig,
    SolverError,
    State,
    Trajectory,
    run,
    step_crank_nicolson,
    step_implicit_euler,
)
from .verification import (
    ManufacturedCase,
    RateTable,
    convergence_study,
    error_norms,
    exact_eval,
    forcing_eval,
    run_manufactured,
)

__version__ = "0.1.0"
