"""Trial-level simulation and analysis of CH-Eberhard Bell tests with memory."""
from .engine import (
    PlaybackStrategy,
    RandomnessStreams,
    Session,
    SettingsDistribution,
    SourceModel,
    draw_settings,
    filter_detected,
    run_session,
)
from .model import (
    OUTCOME_PAIRS,
    SETTING_PAIRS,
    BehaviorTable,
    LhvModel,
    MemoryPolicy,
    TrialRecord,
    behavior_from_lhv,
    behavior_from_policy,
    check_no_signaling,
    validate_behavior,
)
from .search import enumerate_assignments, exhaustive_policy_search, hill_climb_policy
from .statistics import (
    b_conditional,
    b_value,
    check_identity,
    chsh_estimate,
    chsh_value,
    correlator,
    counts_from_records,
    expected_increment,
    fluctuation_monte_carlo,
    martingale_pvalue,
    t_statistic,
)
from .strategies import (
    DeterministicAssignment,
    TablePolicySpec,
    behavior_playback,
    demo_model,
    make_deterministic,
    make_memory_policy,
    pr_box_table,
    random_lhv_model,
    resolve_strategy,
)

__version__ = "0.1.0"
