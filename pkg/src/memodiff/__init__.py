"""Diffusion with measure-valued memory and delay kernels: solvers and checks."""

from .errors import (
    ConfigError,
    CoercivityError,
    InsufficientHistoryError,
    MemodiffError,
    MisalignedAtomError,
    NoAdmissibleDeltaError,
    NonFiniteStateError,
    PicardDivergenceError,
    ResolutionError,
    UnsupportedKernelError,
)
from .kernel import (
    Atom,
    BernsteinQuadrature,
    MeasureKernel,
    bernstein_quadrature,
    delay,
    eval_density,
    exponential,
    fractional,
    mixed,
    mollify_delay,
    restrict,
    scale_kernel,
    total_mass,
    tv_distance,
    zero_kernel,
)
from .mesh_fem import (
    CoefficientField,
    FemMatrices,
    Mesh1D,
    assemble,
    build_mesh,
    dual_norm,
    form_constants,
    interpolate,
    norm_h,
    seminorm_v,
)
from .convolution import (
    QuadratureWeights,
    TimeGrid,
    apply_memory,
    build_weights,
    convolve_direct,
    make_grid,
    operator_norm_check,
    young_check,
)
from .stepper import (
    ProblemSpec,
    SolveReport,
    Trajectory,
    dt_dual_norm_series,
    restriction_consistency,
    solve,
    solve_picard,
    trajectory_csv,
)
from .internal_variables import (
    DiffusiveState,
    EnergySplit,
    advance_internal,
    refined_energy_report,
    solve_diffusive,
    structural_identity_residual,
)
from .diagnostics import (
    apriori_bound_check,
    contraction_factor,
    cumulative_dissipation,
    energy_inequality_report,
    positive_type_test,
)
from .experiments import parse_config, run_scenario

__version__ = "0.1.0"
