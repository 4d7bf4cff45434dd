"""Joint hurdle/proportional-odds regression for paired zero-inflated
ordinal outcomes, with coefficient arrays represented by linked Tucker
factorizations, sampled by NUTS under horseshoe priors, and summarized by
design-space projection and Wasserstein-barycenter aggregation."""

from .tensors import (
    CpFactor,
    DenseTensor,
    ShapeError,
    TuckerFactor,
    cp_reconstruct,
    cp_to_tucker,
    mode_product,
    tucker_param_count,
    tucker_reconstruct,
)
from .model import (
    MISSING,
    CellProbabilities,
    CoefficientBlock,
    CoefficientTensors,
    CutpointRaw,
    LinkedCoefficients,
    PairedDataset,
    assemble_coefficients,
    cell_pmf,
    cutpoints,
    linear_predictors,
    log_likelihood,
    occurrence_prob,
    severity_pmf,
)
from .posterior import (
    HyperParams,
    LogDensityResult,
    ModelParams,
    ParamLayout,
    PosteriorTarget,
    Ranks,
    grad_log_posterior,
    gradient_check,
    layout_for,
    log_posterior,
    log_prior,
    pack,
    unpack,
)

__version__ = "0.1.0"
