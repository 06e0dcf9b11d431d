"""Trial-offer markets with continuation.

Probability model, reduction to a plain multinomial-logit market, ranking
policies with an exact optimizer, efficiency bounds, and an agent-based
simulator of social-influence dynamics.
"""

__version__ = "0.1.0"

from .market import (
    ContinuationSpec,
    Market,
    Ranking,
    SocialState,
    continuation_probability,
    effective_sample_probabilities,
    expected_purchases,
    expected_purchases_with_continuation,
    fold_social_state,
    lambda_fixed_point,
    next_purchase_distribution,
    reduce_market,
    try_probabilities,
)
from .policies import (
    OptimizerReport,
    PolicyKind,
    brute_force_ranking,
    compute_ranking,
    performance_ranking,
    performance_ranking_with_continuation,
    popularity_ranking,
    quality_ranking,
    random_ranking,
)
from .simulation import (
    ReplicationResult,
    SessionOutcome,
    SimConfig,
    SimResult,
    first_purchase_frequencies,
    run_replications,
    run_session,
    run_simulation,
)
from .analysis import (
    BoundCertificate,
    ImprovementRow,
    download_quality_scatter,
    efficiency_bounds,
    improvement_table,
    polynomial_bound_factor,
    position_bias_gain,
    si_one_step_gain,
)
from .instances import (
    ConfigError,
    ExperimentSpec,
    ParseError,
    demo_market,
    load_experiment,
    load_market,
    market_from_dict,
    market_to_dict,
    random_market,
    save_market,
    visibility_profile,
)
from .store import emit_plot_data, run_experiment
from .verify import CheckResult, run_checks
