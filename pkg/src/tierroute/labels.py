"""Soft consistency labels: similarity/augmentation fusion and cloud-edge blending.

For each record, the device answer is compared against the cloud and edge
answers. The similarity score comes from the trace; the augmentation signal is
a hard rule when reference correctness is available (0 only when the device is
wrong while the stronger tier is right) and an opaque judge score otherwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingScoreError
from .trace import QueryRecord, TierId, Trace


@dataclass(frozen=True)
class LabelConfig:
    alpha: float = 0.5  # similarity weight inside each pairwise label
    beta: float = 0.5   # cloud weight inside the fused label

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha={self.alpha} outside [0, 1]")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta={self.beta} outside [0, 1]")


@dataclass
class ConsistencyLabels:
    """Per-record label components, aligned with ``ids``."""

    ids: list[str]
    sim_cloud: np.ndarray
    sim_edge: np.ndarray
    aug_cloud: np.ndarray
    aug_edge: np.ndarray
    s_cloud: np.ndarray
    s_edge: np.ndarray
    s_fused: np.ndarray
    config: LabelConfig = field(default_factory=LabelConfig)

    def __len__(self) -> int:
        return len(self.ids)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "sim_cloud", "sim_edge", "aug_cloud", "aug_edge",
                             "s_cloud", "s_edge", "s_fused"])
            for i, rid in enumerate(self.ids):
                writer.writerow([
                    rid,
                    repr(float(self.sim_cloud[i])), repr(float(self.sim_edge[i])),
                    repr(float(self.aug_cloud[i])), repr(float(self.aug_edge[i])),
                    repr(float(self.s_cloud[i])), repr(float(self.s_edge[i])),
                    repr(float(self.s_fused[i])),
                ])


def aug_with_reference(device_correct: bool, other_correct: bool) -> float:
    """Hard augmentation: 0 only when the device is wrong and the stronger tier right."""
    return 0.0 if (not device_correct and other_correct) else 1.0


def aug_without_reference(judge_score: float) -> float:
    """Judge-based augmentation is an opaque pass-through in [0, 1]."""
    if judge_score is None:
        raise MissingScoreError("judge score absent for a record without references")
    return float(judge_score)


def fuse_label(sim: float, aug: float, alpha: float) -> float:
    """Blend similarity and augmentation: alpha*sim + (1-alpha)*aug."""
    return alpha * sim + (1.0 - alpha) * aug


def _record_aug(rec: QueryRecord, other: TierId) -> float:
    # Reference rule takes precedence when both signals are available.
    if rec.has_reference:
        device_info = rec.tier_info[TierId.DEVICE]
        other_info = rec.tier_info[other]
        return aug_with_reference(bool(device_info.correct), bool(other_info.correct))
    judge = rec.judge_cloud if other == TierId.CLOUD else rec.judge_edge
    if judge is None:
        raise MissingScoreError(
            f"record {rec.id!r}: no reference and no judge score for tier {other.label}"
        )
    return aug_without_reference(judge)


def build_labels(trace: Trace, cfg: LabelConfig | None = None) -> ConsistencyLabels:
    """Compute per-record cloud/edge labels and their fused training target."""
    cfg = cfg or LabelConfig()
    n = len(trace.records)
    ids = [r.id for r in trace.records]
    sim_cloud = np.empty(n)
    sim_edge = np.empty(n)
    aug_cloud = np.empty(n)
    aug_edge = np.empty(n)
    for i, rec in enumerate(trace.records):
        if rec.sim_cloud is None or rec.sim_edge is None:
            raise MissingScoreError(f"record {rec.id!r}: missing sim_cloud or sim_edge")
        sim_cloud[i] = rec.sim_cloud
        sim_edge[i] = rec.sim_edge
        aug_cloud[i] = _record_aug(rec, TierId.CLOUD)
        aug_edge[i] = _record_aug(rec, TierId.EDGE)
    s_cloud = cfg.alpha * sim_cloud + (1.0 - cfg.alpha) * aug_cloud
    s_edge = cfg.alpha * sim_edge + (1.0 - cfg.alpha) * aug_edge
    s_fused = cfg.beta * s_cloud + (1.0 - cfg.beta) * s_edge
    return ConsistencyLabels(
        ids=ids, sim_cloud=sim_cloud, sim_edge=sim_edge,
        aug_cloud=aug_cloud, aug_edge=aug_edge,
        s_cloud=s_cloud, s_edge=s_edge, s_fused=s_fused, config=cfg,
    )
