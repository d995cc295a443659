"""Shared builders for router and acceptance tests."""

import numpy as np

from tierroute.accounting import CostModel, UtilityWeights
from tierroute.bayesopt import BoConfig
from tierroute.labels import LabelConfig, build_labels
from tierroute.mlp import MlpConfig
from tierroute.router import run_offline_phase
from tierroute.trace import SyntheticConfig

# Four latent clusters with heterogeneous device-consistency and token costs.
# Clusters 1 and 3 share success probabilities (so their predicted scores are
# indistinguishable) but cluster 3 generates far longer responses, making
# escalation expensive: only per-cluster thresholds can route them apart.
HETERO_PROFILE = (
    (0.95, 0.97, 0.97),
    (0.895, 0.955, 0.96),
    (0.30, 0.55, 0.95),
    (0.895, 0.955, 0.96),
)
HETERO_TOKENS = (
    (80, 80, 80),
    (50, 50, 50),
    (110, 110, 110),
    (450, 450, 450),
)


def hetero_config(n_queries, seed, noise_sigma=0.05, embedding_dim=32):
    return SyntheticConfig(
        n_queries=n_queries,
        embedding_dim=embedding_dim,
        n_latent_clusters=4,
        seed=seed,
        noise_sigma=noise_sigma,
        tier_accuracy_profile=HETERO_PROFILE,
        token_mean_profile=HETERO_TOKENS,
    )


def quick_mlp(input_dim, seed=0, **overrides):
    base = dict(input_dim=input_dim, hidden_dims=(64, 32), activation="relu",
                learning_rate=3e-3, batch_size=128, max_epochs=40,
                early_stop_patience=6, seed=seed, validation_fraction=0.1)
    base.update(overrides)
    return MlpConfig(**base)


def quick_bo(seed=0, **overrides):
    base = dict(offline_budget=30, online_steps_per_refresh=2,
                candidate_pool_size=512, seed=seed)
    base.update(overrides)
    return BoConfig(**base)


def build_state(trace, scenario, seed=0, weights=None, label_cfg=None,
                mlp_overrides=None, bo_overrides=None, **offline_kw):
    labels = build_labels(trace, label_cfg or LabelConfig())
    mlp_cfg = quick_mlp(trace.embedding_dim, seed=seed, **(mlp_overrides or {}))
    bo_cfg = quick_bo(seed=seed, **(bo_overrides or {}))
    return run_offline_phase(
        trace, labels,
        mlp_config=mlp_cfg,
        scenario=scenario,
        weights=weights or UtilityWeights(),
        cost_model=CostModel(),
        bo_config=bo_cfg,
        **offline_kw,
    )


def truth_fractions(report, truth, tier):
    """Fraction of each latent cluster's queries routed to the given tier."""
    counts = {}
    hits = {}
    for i, row in enumerate(report.decisions):
        latent = int(truth.cluster_of[i])
        counts[latent] = counts.get(latent, 0) + 1
        if row.tier == tier:
            hits[latent] = hits.get(latent, 0) + 1
    return {k: hits.get(k, 0) / counts[k] for k in counts}


def nested_correctness(trace, seed=0, p_device=0.55, p_edge_extra=0.5, p_cloud_extra=0.6):
    """Rewrite correct bits so cloud dominates edge dominates device pointwise."""
    from tierroute.trace import TierId, TierResponseInfo

    rng = np.random.default_rng(seed)
    for rec in trace.records:
        device = bool(rng.random() < p_device)
        edge = device or bool(rng.random() < p_edge_extra)
        cloud = edge or bool(rng.random() < p_cloud_extra)
        bits = {TierId.DEVICE: device, TierId.EDGE: edge, TierId.CLOUD: cloud}
        for tier, flag in bits.items():
            old = rec.tier_info[tier]
            rec.tier_info[tier] = TierResponseInfo(
                generated_tokens=old.generated_tokens,
                compute_seconds=old.compute_seconds,
                prompt_tokens=old.prompt_tokens,
                correct=flag,
                request_bytes=old.request_bytes,
                response_bytes=old.response_bytes,
            )
    return trace
