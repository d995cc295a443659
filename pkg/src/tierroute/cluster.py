"""K-means over query embeddings with automatic elbow selection of K.

Centroids are fitted once offline and frozen; the online phase only reads them
for nearest-centroid lookup.

Centroid file layout (``tierroute-centroids-v1``): one UTF-8 JSON header line
(k, dim, seed, inertia), then the centroid matrix as row-major little-endian
64-bit floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BundleIntegrityError, DimensionMismatchError


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray   # (k, d)
    inertia: float
    seed: int

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exact pairwise squared distances via broadcasting, shape (n, k)."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = rng.integers(0, n)
    centroids[0] = points[first]
    closest = _sq_dists(points, centroids[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # All remaining points coincide with chosen centroids.
            idx = rng.integers(0, n)
        else:
            idx = rng.choice(n, p=closest / total)
        centroids[j] = points[idx]
        closest = np.minimum(closest, _sq_dists(points, centroids[j:j + 1])[:, 0])
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int
           ) -> tuple[np.ndarray, np.ndarray, float]:
    labels = np.full(points.shape[0], -1)
    for _ in range(max_iter):
        dists = _sq_dists(points, centroids)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(centroids.shape[0]):
            members = points[labels == j]
            if members.shape[0] == 0:
                # Revive an empty cluster at the point farthest from its centroid.
                worst = dists[np.arange(points.shape[0]), labels].argmax()
                centroids[j] = points[worst]
            else:
                centroids[j] = members.mean(axis=0)
    dists = _sq_dists(points, centroids)
    labels = dists.argmin(axis=1)
    inertia = float(dists[np.arange(points.shape[0]), labels].sum())
    return centroids, labels, inertia


def kmeans_fit(embeddings: np.ndarray, k: int, seed: int, *,
               restarts: int = 5, max_iter: int = 300) -> ClusterModel:
    """Best-of-``restarts`` Lloyd runs from k-means++ seeding; seed-deterministic."""
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("embeddings must be a non-empty (n, d) matrix")
    if not np.all(np.isfinite(points)):
        raise ValueError("embeddings must be finite")
    n = points.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, n={n}]")

    rng = np.random.default_rng(seed)
    best_centroids = None
    best_inertia = np.inf
    for _ in range(max(restarts, 1)):
        centroids = _kmeanspp_init(points, k, rng).copy()
        centroids, _, inertia = _lloyd(points, centroids, max_iter)
        if inertia < best_inertia:
            best_inertia = inertia
            best_centroids = centroids
    return ClusterModel(k=k, centroids=best_centroids, inertia=best_inertia, seed=seed)


def knee_point(ks: np.ndarray, inertias: np.ndarray) -> int:
    """k with maximum perpendicular distance to the chord of the normalized curve.

    Both axes are scaled to [0, 1] first; a perfectly linear curve has zero
    distance everywhere and falls back to the smallest k.
    """
    ks = np.asarray(ks, dtype=np.float64)
    inertias = np.asarray(inertias, dtype=np.float64)
    span = inertias.max() - inertias.min()
    if span <= 0:
        return int(ks[0])
    xs = (ks - ks[0]) / (ks[-1] - ks[0])
    ys = (inertias - inertias.min()) / span
    ax, ay = xs[0], ys[0]
    bx, by = xs[-1], ys[-1]
    chord = np.hypot(bx - ax, by - ay)
    dists = np.abs((bx - ax) * (ay - ys) - (ax - xs) * (by - ay)) / chord
    # Snap rounding dust to zero so exactly-linear curves tie-break to k_min.
    dists[dists < 1e-12] = 0.0
    return int(ks[int(np.argmax(dists))])


def elbow_select_k(embeddings: np.ndarray, k_min: int = 2, k_max: int = 12,
                   seed: int = 0, *, restarts: int = 5) -> int:
    """Sweep the inertia curve over [k_min, k_max] and return its knee."""
    points = np.asarray(embeddings, dtype=np.float64)
    n = points.shape[0]
    if not (2 <= k_min < k_max <= n):
        raise ValueError(f"need 2 <= k_min < k_max <= n; got ({k_min}, {k_max}, n={n})")
    ks = np.arange(k_min, k_max + 1)
    inertias = np.array([
        kmeans_fit(points, int(k), seed, restarts=restarts).inertia for k in ks
    ])
    return knee_point(ks, inertias)


def assign_batch(model: ClusterModel, embeddings: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if points.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"embedding dim {points.shape[1]} != centroid dim {model.dim}"
        )
    return _sq_dists(points, model.centroids).argmin(axis=1)


def assign(model: ClusterModel, embedding: np.ndarray) -> int:
    """Index of the Euclidean-nearest centroid; ties break to the lowest index."""
    return int(assign_batch(model, np.asarray(embedding).reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# Centroid IO
# ---------------------------------------------------------------------------

_CENTROID_FORMAT = "tierroute-centroids-v1"


def save_centroids(model: ClusterModel, path: str | Path) -> None:
    header = {
        "format": _CENTROID_FORMAT,
        "k": model.k,
        "dim": model.dim,
        "seed": model.seed,
        "inertia": model.inertia,
    }
    with Path(path).open("wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(model.centroids).astype("<f8").tobytes())


def load_centroids(path: str | Path) -> ClusterModel:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise BundleIntegrityError(f"{path}: missing centroid header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleIntegrityError(f"{path}: bad centroid header ({exc})") from exc
    if header.get("format") != _CENTROID_FORMAT:
        raise BundleIntegrityError(f"{path}: unknown centroid format {header.get('format')!r}")
    k, dim = int(header["k"]), int(header["dim"])
    body = raw[newline + 1:]
    if len(body) != k * dim * 8:
        raise BundleIntegrityError(
            f"{path}: centroid payload holds {len(body)} bytes, expected {k * dim * 8}"
        )
    centroids = np.frombuffer(body, dtype="<f8").reshape(k, dim).astype(np.float64)
    return ClusterModel(k=k, centroids=centroids,
                        inertia=float(header["inertia"]), seed=int(header["seed"]))
