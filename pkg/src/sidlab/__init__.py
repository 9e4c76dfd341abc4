"""Numerical laboratory for symmetric self-interacting diffusions on the flat torus."""

__version__ = "0.1.0"

from .geometry import (
    DensityField,
    Grid,
    ModeVector,
    PotentialField,
    WeakMetricParams,
    density_modes,
    dirac_modes,
    field_from_csv,
    field_to_csv,
    gibbs,
    gibbs_values,
    inner_product,
    lambda_modes,
    make_grid,
    mode_indices,
    uniform_density,
    weak_distance,
)
from .kernels import (
    GridMatrixKernel,
    KernelReport,
    KernelSpec,
    MercerSplit,
    TranslationInvariantKernel,
    check_hyp_occ,
    convexity_certificate,
    diam_diag,
    eval_potential,
    is_mercer,
    kernel_matrix,
    kernel_report,
    make_circle_dot,
    make_gaussian_schoenberg,
    make_grid_matrix,
    make_heat,
    make_translation_invariant,
    mercer_split,
    rho,
    rho_spectral,
    torus_criterion_sum,
    zero_kernel,
)
from .dynamics import (
    FixedPointRecord,
    FlowTrace,
    SpectralReport,
    field_X,
    field_Y,
    find_fixed_points,
    flow_X,
    flow_Y,
    free_energy,
    free_energy_gradient,
    hessian_quadratic,
    hessian_spectrum,
    morse_sum,
    residual,
)
from .sde import (
    MonteCarloReport,
    MonteCarloThresholds,
    OccupationState,
    SdeConfig,
    TrajectoryRecord,
    drift,
    init_state,
    monte_carlo,
    run,
    shadow_error,
    step,
)
from .seeds import mix64
