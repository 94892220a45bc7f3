"""PCA remapping for sparse embedding domains.

Reference embeddings are centered by the dataset mean, scaled to unit norm
and projected onto their top principal directions, giving a dense angular
space where the sphere mechanisms apply. A privatized point is mapped back
as a softmax-weighted average of the original embeddings of its ``j``
nearest references, with weights decreasing in angular distance.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovariance, DimMismatch, InsufficientReferences, ZeroVector
from .geometry import ZERO_NORM, angular_distances
from .mechanisms import apply

FORMAT_VERSION = 1
RANK_TOL = 1e-10


@dataclass(frozen=True)
class ReferenceSet:
    ids: np.ndarray
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        ids = np.asarray(self.ids, dtype=np.int64)
        if emb.ndim != 2 or emb.shape[0] == 0:
            raise InsufficientReferences("reference set must be a nonempty 2-D array")
        if ids.shape != (emb.shape[0],):
            raise DimMismatch("one id per reference embedding is required")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_pairs(cls, entries):
        entries = list(entries)
        if not entries:
            raise InsufficientReferences("reference set is empty")
        ids, vecs = zip(*entries)
        dims = {len(v) for v in vecs}
        if len(dims) != 1:
            raise DimMismatch(f"inconsistent reference dimensions {sorted(dims)}")
        return cls(np.array(ids), np.array(vecs, dtype=np.float64))

    def __len__(self):
        return self.embeddings.shape[0]


@dataclass(frozen=True)
class PcaRemapper:
    dataset_mean: np.ndarray
    components: np.ndarray  # (target_dim, source_dim), orthonormal rows
    reference_ids: np.ndarray
    reference_original: np.ndarray
    reference_projected: np.ndarray
    j: int = 8
    lam: float = 32.0

    @property
    def source_dim(self):
        return self.components.shape[1]

    @property
    def target_dim(self):
        return self.components.shape[0]

    def to_dict(self):
        return {
            "format": "spherepriv.pca_remapper",
            "version": FORMAT_VERSION,
            "source_dim": self.source_dim,
            "target_dim": self.target_dim,
            "j": self.j,
            "lambda": self.lam,
            "dataset_mean": self.dataset_mean.tolist(),
            "components": self.components.tolist(),
            "reference_ids": self.reference_ids.tolist(),
            "reference_original": self.reference_original.tolist(),
            "reference_projected": self.reference_projected.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "spherepriv.pca_remapper" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a version-1 PCA remapper document")
        return cls(
            dataset_mean=np.array(d["dataset_mean"], dtype=np.float64),
            components=np.array(d["components"], dtype=np.float64),
            reference_ids=np.array(d["reference_ids"], dtype=np.int64),
            reference_original=np.array(d["reference_original"], dtype=np.float64),
            reference_projected=np.array(d["reference_projected"], dtype=np.float64),
            j=int(d["j"]),
            lam=float(d["lambda"]),
        )


def _standardize(x, mean):
    c = x - mean
    n = np.linalg.norm(c, axis=-1, keepdims=True)
    if np.any(n < ZERO_NORM):
        raise ZeroVector("input equals the dataset mean")
    return c / n


def _project(x, mean, components):
    p = _standardize(x, mean) @ components.T
    n = np.linalg.norm(p, axis=-1, keepdims=True)
    if np.any(n < ZERO_NORM):
        raise ZeroVector("input has no component in the retained subspace")
    return p / n


def fit(references, target_dim, j=8, lam=32.0):
    """Fit standardization + PCA on ``references`` (a ReferenceSet)."""
    x = references.embeddings
    if target_dim < 2:
        raise ValueError("target_dim must be >= 2")
    if target_dim > x.shape[1]:
        raise DimMismatch("target_dim exceeds source dimension")
    if len(references) <= target_dim:
        raise InsufficientReferences(f"need more than {target_dim} references, got {len(references)}")
    if not 1 <= j <= len(references):
        raise ValueError("j must lie in [1, number of references]")
    if not lam > 0:
        raise ValueError("lambda must be > 0")

    mean = x.mean(axis=0)
    s = _standardize(x, mean)
    evals, evecs = np.linalg.eigh(np.cov(s, rowvar=False))
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if evals[target_dim - 1] <= RANK_TOL * max(evals[0], ZERO_NORM):
        raise DegenerateCovariance(f"covariance rank is below target_dim={target_dim}")
    components = np.ascontiguousarray(evecs[:, :target_dim].T)
    projected = _project(x, mean, components)
    return PcaRemapper(mean, components, references.ids.copy(), x.copy(), projected, int(j), float(lam))


def project(remapper, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != remapper.source_dim:
        raise DimMismatch(f"expected dim {remapper.source_dim}, got {x.shape[-1]}")
    return _project(x, remapper.dataset_mean, remapper.components)


def neighbor_weights(remapper, y, j=None):
    """Indices of the ``j`` nearest references to ``y`` and their softmax weights."""
    j = remapper.j if j is None else j
    d = angular_distances(remapper.reference_projected, y[None, :])
    idx = np.argsort(d, kind="stable")[:j]
    logits = -remapper.lam * d[idx]
    w = np.exp(logits - logits.max())
    return idx, w / w.sum()


def reconstruct(remapper, y, j=None):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (remapper.target_dim,):
        raise DimMismatch(f"expected a {remapper.target_dim}-dim vector")
    idx, w = neighbor_weights(remapper, y, j)
    if idx.size == 1:
        return remapper.reference_original[idx[0]].copy()
    return w @ remapper.reference_original[idx]


def privatize_remapped(remapper, x, spec, rng, j=None):
    y = apply(spec, project(remapper, x), rng).vector
    return reconstruct(remapper, y, j)
