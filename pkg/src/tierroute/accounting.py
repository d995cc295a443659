"""Per-query cost, latency, and scalar utility accounting.

Cost is activated model parameters (billions) times generated tokens. Utility
is lambda1 * correctness - lambda2 * latency - lambda3 * cost, with latency and
cost normalized by cloud-only trace means by default so the weights stay
dimensionless across traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import NetworkScenario, round_trip_latency, scenario_link
from .trace import TierId, TierResponseInfo, Trace

# Qwen3 tier sizes in billions of parameters (1.7B device, 14B edge, 32B cloud).
DEFAULT_ACTIVATED_PARAMS: dict[TierId, float] = {
    TierId.DEVICE: 1.7,
    TierId.EDGE: 14.0,
    TierId.CLOUD: 32.0,
}


@dataclass(frozen=True)
class CostModel:
    activated_params: dict[TierId, float] = field(
        default_factory=lambda: dict(DEFAULT_ACTIVATED_PARAMS)
    )

    def __post_init__(self) -> None:
        for tier in TierId:
            if self.activated_params.get(tier, 0.0) <= 0:
                raise ValueError(f"activated_params missing or non-positive for {tier.label}")


@dataclass(frozen=True)
class UtilityWeights:
    lambda1: float = 1.0
    lambda2: float = 0.2
    lambda3: float = 0.2
    normalize_by_cloud: bool = True

    def __post_init__(self) -> None:
        if min(self.lambda1, self.lambda2, self.lambda3) <= 0:
            raise ValueError("all lambda weights must be positive")

    @classmethod
    def from_kappas(cls, kappa1: float, kappa2: float,
                    normalize_by_cloud: bool = True) -> UtilityWeights:
        """kappa1 = lambda1/lambda2 and kappa2 = lambda1/lambda3, with lambda1 = 1."""
        return cls(lambda1=1.0, lambda2=1.0 / kappa1, lambda3=1.0 / kappa2,
                   normalize_by_cloud=normalize_by_cloud)


@dataclass(frozen=True)
class CloudBaselines:
    """Cloud-only trace means used to normalize latency and cost."""

    mean_latency_s: float
    mean_cost: float

    def __post_init__(self) -> None:
        if self.mean_latency_s <= 0 or self.mean_cost <= 0:
            raise ValueError("cloud baselines must be positive")


@dataclass(frozen=True)
class UtilityRecord:
    query_id: str
    tier: TierId
    correct: bool
    latency_s: float
    cost_param_tokens: float
    utility: float

    def __post_init__(self) -> None:
        if self.latency_s < 0 or self.cost_param_tokens < 0:
            raise ValueError("latency and cost must be >= 0")


def inference_cost(model: CostModel, tier: TierId, generated_tokens: int) -> float:
    """Billion-parameter-tokens consumed by one response."""
    if generated_tokens < 0:
        raise ValueError("generated_tokens must be >= 0")
    return model.activated_params[tier] * generated_tokens


def query_latency(tier: TierId, info: TierResponseInfo, scenario: NetworkScenario,
                  window_index: int = 0) -> float:
    """Compute time plus, for offloaded tiers, the window-appropriate round trip."""
    if tier == TierId.DEVICE:
        return info.compute_seconds
    link = scenario_link(scenario, tier, window_index)
    return info.compute_seconds + round_trip_latency(link, info.request_bytes,
                                                     info.response_bytes)


def per_query_utility(correct: bool, latency_s: float, cost: float,
                      weights: UtilityWeights,
                      cloud_baselines: CloudBaselines | None = None) -> float:
    """lambda1 * I[correct] - lambda2 * latency - lambda3 * cost (normalized by default)."""
    if weights.normalize_by_cloud:
        if cloud_baselines is None:
            raise ValueError("normalize_by_cloud requires cloud baselines")
        latency_term = latency_s / cloud_baselines.mean_latency_s
        cost_term = cost / cloud_baselines.mean_cost
    else:
        latency_term = latency_s
        cost_term = cost
    return (weights.lambda1 * (1.0 if correct else 0.0)
            - weights.lambda2 * latency_term
            - weights.lambda3 * cost_term)


def cluster_utility(records: list[UtilityRecord], weights: UtilityWeights,
                    cloud_baselines: CloudBaselines | None = None) -> float:
    """Mean per-query utility over the records (exact linearity identity).

    Recomputed from each record's components so the result is, by construction,
    the arithmetic mean of ``per_query_utility`` outputs.
    """
    if not records:
        raise ValueError("cluster_utility needs at least one record")
    utilities = [
        per_query_utility(r.correct, r.latency_s, r.cost_param_tokens,
                          weights, cloud_baselines)
        for r in records
    ]
    return float(np.mean(utilities))


def cloud_reference_means(trace: Trace, scenario: NetworkScenario,
                          cost_model: CostModel, window_index: int = 0) -> CloudBaselines:
    """Mean cloud-tier latency and cost over the trace, used as normalization scales."""
    if not trace.records:
        raise ValueError("cannot compute cloud baselines on an empty trace")
    lats = []
    costs = []
    for rec in trace.records:
        info = rec.tier_info[TierId.CLOUD]
        lats.append(query_latency(TierId.CLOUD, info, scenario, window_index))
        costs.append(inference_cost(cost_model, TierId.CLOUD, info.generated_tokens))
    return CloudBaselines(mean_latency_s=float(np.mean(lats)),
                          mean_cost=float(np.mean(costs)))
