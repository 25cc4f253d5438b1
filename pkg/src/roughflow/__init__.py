"""roughflow: rough-path calculus on time grids.

Truncated tensor algebra, canonical lifts, controlled paths and the sewing
map, exact fractional Brownian motion sampling, additively perturbed flows,
and measure transport by particle push-forward.
"""

from .tensor_algebra import (
    TruncatedTensor,
    segment_signature,
    symmetrize,
    tensor_inverse,
    tensor_mul,
)
from .rough_path import (
    RoughPathGrid,
    TimeGrid,
    holder_seminorm,
    holder_seminorm_path,
    identity_rough_path,
    level_seminorms,
    max_chen_defect,
    max_symmetry_defect,
    rho_gamma,
)
from .controlled_path import (
    ControlledPathGrid,
    controlled_distance,
    controlled_seminorm,
    linear_combination,
)
from .sewing import (
    GermFunction,
    SewResult,
    delta,
    germ_distance,
    germ_from_controlled,
    rough_integral,
    rough_integral_result,
    sew,
)
from .fbm import (
    FbmPath,
    FbmSpec,
    VolterraKernel,
    check_hurst_constraint,
    covariance,
    covariance_matrix,
    default_gamma,
    kernel_covariance_check,
    lift_fbm,
    sample,
    sample_batch,
)
from .rough_flow import (
    DriftField,
    FlowEnsemble,
    compose_lift,
    drift_stability,
    driver_stability,
    ito_residual,
    lift_along_path,
    mollify_drift,
    solve_flow,
    time_integral,
)
from .stacks import SmoothFunctionStack, gaussian_bump, plateau1d
from .continuity import (
    ContinuityReport,
    ParticleMeasure,
    discontinuous_drift_experiment,
    integrated_controlled_path,
    push_forward,
    weak_residual,
)
from .errors import ConfigurationError, NonConvergenceError

__version__ = "0.1.0"
