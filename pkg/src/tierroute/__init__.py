"""Consistency-aware query routing for device/edge/cloud LLM serving.

Trace-driven: per-tier outcomes come from recorded or synthetic traces, never
from live model calls. The pipeline builds soft consistency labels, trains a
small MLP score predictor, clusters embeddings, learns per-cluster routing
thresholds with GP Bayesian optimization, and evaluates routing policies in a
deterministic simulator with explicit network and cost models.
"""

from .accounting import (
    CloudBaselines,
    CostModel,
    UtilityRecord,
    UtilityWeights,
    cloud_reference_means,
    cluster_utility,
    inference_cost,
    per_query_utility,
    query_latency,
)
from .bayesopt import (
    BoConfig,
    GpHyperparameters,
    GpSurrogate,
    ObservationSet,
    ThresholdPair,
    expected_improvement,
    gp_fit,
    optimize_offline,
    propose_thresholds,
    refresh_online,
)
from .cluster import ClusterModel, assign, assign_batch, elbow_select_k, kmeans_fit
from .labels import (
    ConsistencyLabels,
    LabelConfig,
    aug_with_reference,
    aug_without_reference,
    build_labels,
    fuse_label,
)
from .mlp import (
    MlpConfig,
    MlpModel,
    TrainReport,
    gradient_check,
    init_model,
    load_checkpoint,
    predict,
    predict_batch,
    save_checkpoint,
    train,
)
from .network import (
    LinkProfile,
    NetworkScenario,
    builtin_profiles,
    round_trip_latency,
    scenario_by_name,
    scenario_link,
)
from .router import (
    RouterState,
    RoutingDecision,
    StreamReport,
    baseline_route,
    load_bundle,
    route_query,
    routing_tier,
    run_offline_phase,
    run_stream,
    save_bundle,
    state_checksum,
)
from .trace import (
    GroundTruth,
    QueryRecord,
    SyntheticConfig,
    TierId,
    TierResponseInfo,
    Trace,
    concat_traces,
    generate_synthetic_trace,
    load_trace,
    save_trace,
)

__version__ = "0.1.0"
