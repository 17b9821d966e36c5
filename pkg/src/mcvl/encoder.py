"""Global image descriptor: k-means vocabulary, VLAD sum pooling, PCA whitening.

The full chain for one image is::

    dense SIFT -> RootSIFT -> VLAD (K*d) -> PCA project -> whiten -> L2
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from mcvl import _backend
from mcvl.features import DescriptorSet, FeatureConfig, extract_dense, root_sift

log = logging.getLogger(__name__)

PCA_EPS = 1e-12


@dataclass
class Vocabulary:
    centers: np.ndarray
    inertia_history: list = field(default_factory=list)

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers, dtype=float)
        if self.centers.ndim != 2 or len(self.centers) < 2:
            raise ValueError("vocabulary needs at least 2 centers")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("vocabulary centers must be finite")

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]


@dataclass
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (D, p), orthonormal columns
    scale: np.ndarray  # (p,), whitening divisors
    eigenvalues: np.ndarray | None = None

    @property
    def p(self) -> int:
        return self.basis.shape[1]

    @property
    def D(self) -> int:
        return self.basis.shape[0]

    def project(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) @ self.basis

    def whiten(self, x) -> np.ndarray:
        return self.project(x) / self.scale

    def reconstruct(self, x) -> np.ndarray:
        return self.mean + self.project(x) @ self.basis.T


@dataclass
class GlobalDescriptor:
    values: np.ndarray
    degenerate: bool = False


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = (X * X).sum(1)[:, None] - 2.0 * (X @ C.T) + (C * C).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    idx = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[idx]).ravel()
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            raise ValueError("fewer distinct samples than requested clusters")
        nxt = int(np.searchsorted(np.cumsum(d2), rng.uniform(0, total), side="right"))
        nxt = min(nxt, n - 1)
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dists(X, X[nxt:nxt + 1]).ravel())
    return X[idx].copy()


def train_vocabulary(samples, K: int = 128, seed: int = 0, max_iter: int = 100,
                     tol: float = 1e-4) -> Vocabulary:
    """Lloyd's k-means with k-means++ seeding.

    Stops after ``max_iter`` iterations or once the relative inertia decrease
    drops below ``tol``.  Empty clusters are re-seeded from the points farthest
    from their current center.
    """
    X = np.asarray(samples, dtype=float)
    if len(X) < K:
        raise ValueError(f"need at least K={K} samples, got {len(X)}")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, K, rng)
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, C)
        labels = np.argmin(d2, axis=1)
        dmin = d2[np.arange(len(X)), labels]
        inertia = float(dmin.sum())
        history.append(inertia)
        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        newC = C.copy()
        live = counts > 0
        newC[live] = sums[live] / counts[live, None]
        empty = np.flatnonzero(~live)
        if len(empty):
            far = np.argsort(-dmin, kind="stable")[: len(empty)]
            newC[empty] = X[far]
        C = newC
        if len(history) > 1:
            prev = history[-2]
            if prev <= 0 or (prev - inertia) / prev < tol:
                break
        if inertia == 0:
            break
    d2 = _sq_dists(X, C)
    history.append(float(d2.min(axis=1).sum()))
    return Vocabulary(C, history)


def embed_vlad(ds, vocab: Vocabulary) -> np.ndarray:
    """Sum-pooled VLAD vector of length K*d (plain residual sums, no normalization)."""
    X = ds.descriptors if isinstance(ds, DescriptorSet) else np.asarray(ds, dtype=float)
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    if X.shape[1] != vocab.d:
        raise ValueError(f"descriptor dim {X.shape[1]} != vocabulary dim {vocab.d}")
    dots = np.ascontiguousarray(X @ vocab.centers.T)
    vec, _ = _backend.vlad_aggregate(X, vocab.centers, dots)
    return vec


def assign_words(X, vocab: Vocabulary) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    dots = np.ascontiguousarray(X @ vocab.centers.T)
    return _backend.vlad_aggregate(X, vocab.centers, dots)[1]


def train_pca(raw, p: int = 4096, seed: int = 0) -> PcaModel:
    """Mean-centred PCA with whitening divisors ``sqrt(eigenvalue) + 1e-12``.

    ``p`` is clamped to the numerical rank of the centred data (at most
    ``n - 1``).  The eigensolver is deterministic; ``seed`` is accepted only so
    training calls share one signature.
    """
    del seed
    X = np.asarray(raw, dtype=float)
    n, D = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    mean = X.mean(axis=0)
    Xc = X - mean
    if n <= D:
        G = Xc @ Xc.T
        vals, vecs = np.linalg.eigh(G)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        keep = vals > 1e-10 * max(vals[0], 1e-300)
        vals, vecs = vals[keep], vecs[:, keep]
        basis = Xc.T @ vecs / np.sqrt(vals)
        eig = vals / (n - 1)
    else:
        C = Xc.T @ Xc / (n - 1)
        vals, vecs = np.linalg.eigh(C)
        order = np.argsort(vals)[::-1]
        vals, basis = vals[order], vecs[:, order]
        keep = vals > 1e-10 * max(vals[0], 1e-300)
        eig, basis = vals[keep], basis[:, keep]
    p_eff = min(p, D, n - 1, basis.shape[1])
    if p_eff < p:
        log.info("PCA dims clamped from %d to %d (n=%d, D=%d)", p, p_eff, n, D)
    basis = basis[:, :p_eff]
    eig = eig[:p_eff]
    # deterministic sign: largest-magnitude entry of each column positive
    pivot = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivot, np.arange(p_eff)])
    basis = basis * np.where(signs == 0, 1.0, signs)
    return PcaModel(mean, basis, np.sqrt(eig) + PCA_EPS, eig)


def finalize(raw, pca: PcaModel) -> GlobalDescriptor:
    """Whitened PCA projection, L2-normalized. All-zero input maps to all-zero output."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw VLAD vector must be finite")
    if not np.any(raw):
        return GlobalDescriptor(np.zeros(pca.p), True)
    y = pca.whiten(raw)
    nrm = np.linalg.norm(y)
    if nrm == 0:
        return GlobalDescriptor(np.zeros(pca.p), True)
    return GlobalDescriptor(y / nrm, False)


def _f32(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(float)


class Codebook:
    """Vocabulary + PCA model, stored at float32 precision.

    Values are rounded to float32 on construction so that an in-memory codebook
    and one read back from disk encode images identically.
    """

    def __init__(self, vocab: Vocabulary, pca: PcaModel, features: FeatureConfig = FeatureConfig()):
        self.vocab = Vocabulary(_f32(vocab.centers), list(vocab.inertia_history))
        self.pca = PcaModel(_f32(pca.mean), _f32(pca.basis), _f32(pca.scale), pca.eigenvalues)
        self.features = features
        if self.pca.D != self.vocab.K * self.vocab.d:
            raise ValueError("PCA input dim does not match vocabulary K*d")

    def raw(self, img) -> np.ndarray:
        return embed_vlad(root_sift(extract_dense(img, self.features)), self.vocab)

    def encode_raw(self, raw) -> GlobalDescriptor:
        return finalize(raw, self.pca)

    def encode(self, img) -> GlobalDescriptor:
        return self.encode_raw(self.raw(img))


def sample_descriptors(images, per_image: int, feat: FeatureConfig, seed: int) -> np.ndarray:
    """RootSIFT descriptors subsampled uniformly from each image (vocabulary pool)."""
    rng = np.random.default_rng(seed)
    pool = []
    for img in images:
        X = root_sift(extract_dense(img, feat).descriptors)
        take = min(per_image, len(X))
        pool.append(X[np.sort(rng.choice(len(X), take, replace=False))])
    return np.vstack(pool)


def train_codebook(images, K: int = 128, pca_dims: int = 4096, feat: FeatureConfig = FeatureConfig(),
                   per_image: int = 100, seed: int = 0, image_stride: int = 1):
    """Train vocabulary and PCA on the same (map) images.

    The vocabulary pool is drawn from every ``image_stride``-th image; PCA uses
    all of them.  Returns ``(codebook, raw_vlads)`` so callers can reuse the raw VLAD vectors
    of the training images.
    """
    images = list(images)
    vocab = train_vocabulary(sample_descriptors(images[::image_stride], per_image, feat, seed), K, seed)
    vocab = Vocabulary(_f32(vocab.centers), vocab.inertia_history)
    raws = np.vstack([embed_vlad(root_sift(extract_dense(im, feat)), vocab) for im in images])
    pca = train_pca(raws, pca_dims, seed)
    return Codebook(vocab, pca, feat), raws
