"""A desk-scale laboratory for entropy calibration of sequence models.

Small autoregressive models over a few tokens and a short horizon are
represented exactly, so the quantities that are estimated on real systems
(generation entropy, log loss on held-out data, the gap between them, and
the effect of decoder adjustments on all three) can be computed here by
enumeration and checked against their theoretical behavior.
"""
from .model import (
    DEFAULT_PROMPT,
    EnumerationCapError,
    ModelDomainError,
    Prompt,
    PromptSet,
    TabularModel,
    decode_prefix,
    deterministic_model,
    entropy_overshoot_pair,
    load_model,
    prefix_code,
    random_model,
    save_model,
    uniform_model,
)
from .oracle import (
    JointDistribution,
    TemperatureDomainError,
    future_entropy_exact,
    future_entropy_table,
    global_first_order_error,
    global_temp_logprob_gradient,
    global_temperature_model,
    joint_distribution,
    prefix_weights,
    sequence_log_joint,
)
from .metrics import (
    CalibrationReport,
    ent_ce,
    entropy_per_step_exact,
    entropy_per_step_mc,
    log_loss_per_step,
)
from .calibrate import (
    AdjustedModel,
    CalibrationConfig,
    CalibrationRun,
    FutureEntropyPredictor,
    TheoremCheck,
    adjusted_conditional,
    fit_predictor,
    future_entropy_mc,
    future_entropy_scaling,
    identity_adjustment,
    lemma_fitting_check,
    lemma_logloss_check,
    logloss_gradient_alpha,
    optimize_alpha_t,
    verify_theorem,
)
from .truncate import (
    TradeoffPoint,
    TruncationRule,
    min_p,
    temperature,
    top_k,
    top_p,
    tradeoff_curve,
    tradeoff_to_csv,
    truncate_row,
    truncated_model,
)
from .powerlaw import (
    AsymptoticDomainError,
    DerailConfig,
    PowerLaw,
    UrnResult,
    derail_excess_exact,
    derail_expected_curve,
    derail_miscalibration_closed_form,
    draw_urn,
    expected_singleton_mass_exact,
    fit_singleton_slope,
    geometric_m_grid,
    simulate_derailing,
    simulate_urn,
    singleton_mass_asymptotic,
)
from .analysis import (
    CorpusError,
    LogLogFit,
    TokenCounts,
    exponential_smooth,
    fit_loglog,
    ingest_corpus,
    lowercase_whitespace,
    predicted_scaling_exponent,
    zipf_exponent,
)

__version__ = "0.1.0"
