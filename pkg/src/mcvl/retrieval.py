"""Map database, exact kNN, mean-shift over retrieved positions, pose measurement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from mcvl.geometry import Pose6D, mean_rotation

log = logging.getLogger(__name__)


class EmptyDatabaseError(ValueError):
    pass


class DegenerateQueryError(ValueError):
    """Query descriptor is all-zero, so no meaningful neighbours exist."""


@dataclass
class MapDatabase:
    descriptors: np.ndarray  # (n, p)
    poses: np.ndarray  # (n, 6): x y z roll pitch yaw
    seq_ids: np.ndarray  # (n,)
    frame_ids: np.ndarray  # (n,)
    codebook_hash: bytes = b"\0" * 32
    seq_names: list = field(default_factory=list)

    def __post_init__(self):
        self.descriptors = np.ascontiguousarray(self.descriptors, dtype=float)
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 6)
        self.seq_ids = np.asarray(self.seq_ids, dtype=np.int64)
        self.frame_ids = np.asarray(self.frame_ids, dtype=np.int64)
        n = len(self.descriptors)
        if self.descriptors.ndim != 2 or not (len(self.poses) == len(self.seq_ids) == len(self.frame_ids) == n):
            raise ValueError("database fields must have matching lengths")

    def __len__(self) -> int:
        return len(self.descriptors)

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]


@dataclass(frozen=True)
class RetrievalConfig:
    R: int = 20
    meanshift_bandwidth: float = 7.5
    min_support: int = 3


@dataclass
class Measurement:
    pose: Pose6D
    support: int
    distances: np.ndarray
    indices: np.ndarray
    low_confidence: bool = False


def knn(db: MapDatabase, q, R: int):
    """Exact L2 nearest neighbours: ``(indices, distances)`` ascending, ties to lower index."""
    if len(db) == 0:
        raise EmptyDatabaseError("map database is empty")
    q = np.asarray(q.values if hasattr(q, "values") else q, dtype=float)
    if q.shape != (db.dim,):
        raise ValueError(f"query dim {q.shape} != database dim {db.dim}")
    if R > len(db):
        log.info("R=%d clamped to database size %d", R, len(db))
        R = len(db)
    if R < 1:
        raise ValueError("R must be at least 1")
    d = np.sqrt(((db.descriptors - q) ** 2).sum(axis=1))
    order = np.argsort(d, kind="stable")[:R]
    return order, d[order]


@dataclass
class MeanShiftResult:
    modes: np.ndarray  # (c, dim)
    labels: np.ndarray  # (n,)

    @property
    def clusters(self) -> list:
        return [np.flatnonzero(self.labels == c) for c in range(len(self.modes))]


def mean_shift(points, bandwidth: float, max_iter: int = 300) -> MeanShiftResult:
    """Flat-kernel mean shift started from every point.

    Converged modes closer than ``bandwidth / 2`` to an earlier surviving mode
    are merged into it; each point then joins its nearest surviving mode.
    """
    P = np.asarray(points, dtype=float)
    P = P.reshape(len(P), -1)
    if len(P) == 0:
        raise ValueError("mean shift needs at least one point")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    tol = 1e-9 * bandwidth
    modes = []
    for x in P:
        m = x.copy()
        for _ in range(max_iter):
            nb = np.linalg.norm(P - m, axis=1) <= bandwidth
            new = P[nb].mean(axis=0)
            done = np.linalg.norm(new - m) <= tol
            m = new
            if done:
                break
        modes.append(m)
    kept = []
    for m in modes:
        if all(np.linalg.norm(m - k) >= bandwidth / 2 for k in kept):
            kept.append(m)
    kept = np.array(kept)
    dist = np.linalg.norm(P[:, None, :] - kept[None, :, :], axis=2)
    labels = np.argmin(dist, axis=1)
    # a mode that attracts no point is dropped; relabel keeping mode order
    used = np.unique(labels)
    remap = np.full(len(kept), -1)
    remap[used] = np.arange(len(used))
    return MeanShiftResult(kept[used], remap[labels])


def measure(db: MapDatabase, q, cfg: RetrievalConfig = RetrievalConfig()) -> Measurement:
    """Pose measurement from the largest mean-shift cluster of the top-R retrievals.

    Largest-cluster ties go to the smaller mean retrieval distance, then to the
    lower cluster index.
    """
    vals = np.asarray(q.values if hasattr(q, "values") else q, dtype=float)
    if getattr(q, "degenerate", False) or not np.any(vals):
        raise DegenerateQueryError("query descriptor is degenerate")
    idx, dist = knn(db, vals, cfg.R)
    poses = db.poses[idx]
    ms = mean_shift(poses[:, :3], cfg.meanshift_bandwidth)
    best, best_key = 0, None
    for c, members in enumerate(ms.clusters):
        key = (-len(members), float(dist[members].mean()), c)
        if best_key is None or key < best_key:
            best, best_key = c, key
    members = ms.clusters[best]
    pos = poses[members, :3].mean(axis=0)
    rot = mean_rotation(poses[members, 3:])
    support = len(members)
    return Measurement(Pose6D(pos, rot), support, dist, idx, support < cfg.min_support)
