"""Probabilistic single-switch text entry engine.

Decodes intended words from noisy click timings against a scheduled letter
sequence, adapts its click model online, and ships a simulator, an offline
CLI and a demo HTTP service.
"""
from .adaptation import (
    EStepResult,
    KdeClickDensity,
    KdeModel,
    TrainingHistory,
    blend,
    build_kde,
    calibrate,
    e_step,
    kernel_bandwidth,
    log_posterior,
    m_step,
    prior_mode_params,
    run_em,
)
from .decoder import (
    Dictionary,
    PosteriorState,
    initial_state,
    letter_index,
    load_dictionary,
    maybe_select,
    posterior_update,
)
from .engine import TickerEngine, WindowOutcome
from .likelihood import (
    GaussianClickDensity,
    LikelihoodTable,
    ensemble_likelihood,
    gz_indicator,
    log_ensemble_likelihood,
    match_marginals,
    p_C_bruteforce,
    p_C_recursive,
    p_z_t_ell,
)
from .model import (
    Alphabet,
    ClickEnsemble,
    ConfigError,
    EngineConfig,
    Hypers,
    LabelHypothesis,
    Params,
    validate_config,
)
from .schedule import (
    Schedule,
    SeparationReport,
    build_default_schedule,
    empirical_information_rate,
    letter_codeword,
    min_separation,
    optimize_order,
    word_code,
)
from .simulator import SessionReport, UserModel, run_session, sample_window, sweep

__version__ = "0.1.0"
