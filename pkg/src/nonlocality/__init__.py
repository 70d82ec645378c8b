"""Nonlocal boxes, CHSH bounds, superquantum correlations and jamming."""

__version__ = "0.1.0"

from .bell import (
    CLASSICAL_BOUND,
    NO_SIGNALING_BOUND,
    QUANTUM_BOUND,
    BoundClass,
    LocalityCertificate,
    chsh_from_model,
    chsh_of_box,
    chsh_value,
    classify,
    deterministic_vertices,
    is_local,
    max_chsh_over_axes,
)
from .boxes import (
    ConditionalBox,
    InvalidBoxError,
    MarginalDistribution,
    NoSignalingReport,
    Party,
    box_from_correlations,
    check_no_signaling,
    correlator,
    deterministic_box,
    marginal,
    mix,
    pr_box,
    uniform_box,
    validate_box,
)
from .correlations import (
    AxisConfiguration,
    CorrelationModel,
    antisymmetry_residual,
    box_at_angles,
    eval_correlation,
)
from .jamming import (
    ButtonSchedule,
    ConditionReport,
    InadmissibleScenarioError,
    IntervalClass,
    JammingScenario,
    SpacetimeEvent,
    binary_condition,
    check_scenario,
    forward_cone_intersection_apex,
    in_forward_cone,
    interval_class,
    simulate_jamming,
    unary_condition,
)
from .sampler import (
    ExperimentPlan,
    RoundStream,
    SettingSchedule,
    Tally,
    chsh_estimate,
    empirical_no_signaling,
    estimate_correlators,
    run_experiment,
    sample_round,
)
