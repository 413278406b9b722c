"""Zero-inflated semi-parametric estimation of temporal treatment
effects on panel data.

The outcome difference against a baseline period mixes an exact point
mass at zero with a continuous response.  A binomial-logit additive
model explains the zero probability, a Gaussian additive model the
nonzero differences; both use penalized splines with REML-selected
smoothing.  Counterfactual effects combine the two parts per unit and
period, with percentile-bootstrap bands.
"""

from .bootstrap import BootstrapPlan, BootstrapResult, EffectTarget, bootstrap_effects, percentile_band
from .data import (
    DiffSample,
    PanelDataset,
    TrimReport,
    build_diff_samples,
    ingest_csv,
    panel_to_csv,
    random_growth_transform,
    trim,
)
from .design import ModelFormula, SmoothTerm
from .diagnostics import (
    NeighborGraph,
    PlaceboResult,
    build_wd,
    fit_comparison_ladder,
    fit_spillover_model,
    placebo_test,
)
from .effects import (
    EffectEstimate,
    counterfactual_effect,
    effect_profile,
    effects_to_frame,
    treatment_contrast,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    InferenceError,
    NumericalError,
    SchemaError,
    UsageError,
    ZipanelError,
)
from .gam import (
    AdditiveModel,
    approx_anova,
    fit_binomial_logit,
    fit_gaussian,
    optimize_reml,
    reml_score,
    term_pvalues,
)
from .mixture import MixtureModel, fit_mixture, load_bundle, save_bundle
from .selection import MedoidSet, SelectionReport, backward_select, kmedoids, profile_medoids
from .splines import (
    SmoothSpec,
    apply_centering_constraint,
    bspline_basis,
    difference_penalty,
    quantile_knots,
    tensor_basis,
)
from .synth import Scenario, TruthRecord, generate, truth_effect

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
