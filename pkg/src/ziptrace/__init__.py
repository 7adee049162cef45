"""Trace-driven simulator for identifier-renewal location privacy.

The package pairs a defender that fragments cell-tower traces under ephemeral
pseudonyms with a provider-side attacker that profiles users from labeled
history and links fragments back together, plus the metrics, battery model,
and experiment harness needed to evaluate the privacy/utility trade-off.
"""

from .attacker import (
    Attribution,
    LinkMatrix,
    LocationProfiler,
    ProfileScorer,
    TrajectoryLinker,
    TransitionMatrix,
    build_profiles,
    classify,
    collapse_repeats,
    evaluate_accuracy,
    link_and_classify,
    profile_user,
    train_link_matrix,
)
from .battery import (
    DEFAULT_BATTERY,
    RADIO_3G,
    RADIO_4G,
    BatterySpec,
    RadioProfile,
    cycle_energy_mwh,
    daily_battery_fraction,
    offline_time_per_cycle,
)
from .defender import (
    RenewalPolicy,
    TraceAnonymizer,
    UtilityLedger,
    anonymize,
    anonymize_dataset,
    fresh_pseudonym,
)
from .errors import (
    ParameterError,
    ParseError,
    TraceValidationError,
    UndefinedScoreError,
    UnknownUserError,
    ZipTraceError,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    emit_plot_data,
    run_all,
    run_offline_sweep,
    run_tradeoff,
    run_trace_length,
)
from .metrics import (
    BehaviorScores,
    USER_TYPES,
    classify_type,
    jaccard_score,
    mixing_score,
    score_dataset,
)
from .synth import SynthConfig, generate, typology_targets
from .traces import (
    AnonTrace,
    Dataset,
    PseudonymousTrace,
    TowerEvent,
    Trace,
    check_dataset,
    read_anon_traces,
    read_sidecar,
    read_traces,
    split_by_period,
    write_anon_traces,
    write_sidecar,
    write_traces,
)

__version__ = "0.1.0"
