"""Synthetic identity databases standing in for face datasets.

Identity means are uniform on the sphere and each record is a VMF draw
around its identity mean. Binary attributes are identity-level: the label
is the side of a fixed random hyperplane on which the identity mean falls.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamples
from .geometry import uniform_sample
from .vmf import VmfParams, sample_vmf


@dataclass(frozen=True)
class IdentityRecord:
    identity_id: int
    embedding: np.ndarray
    attributes: dict = field(default_factory=dict)


@dataclass
class IdentityDatabase:
    dim: int
    records: list
    identity_means: dict = field(default_factory=dict)
    attribute_directions: dict = field(default_factory=dict)

    @property
    def ids(self):
        return np.array([r.identity_id for r in self.records], dtype=np.int64)

    @property
    def embeddings(self):
        if not self.records:
            return np.empty((0, self.dim))
        return np.stack([r.embedding for r in self.records])

    def subset(self, records):
        return IdentityDatabase(self.dim, list(records), self.identity_means, self.attribute_directions)

    def __len__(self):
        return len(self.records)


def attribute_label(direction, mean):
    return int(direction @ mean >= 0.0)


def generate(num_identities, samples_per_identity, dim, within_kappa, attribute_names, rng):
    if num_identities < 1 or samples_per_identity < 1:
        raise ValueError("counts must be positive")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if within_kappa < 0:
        raise ValueError("within_kappa must be >= 0")
    means = uniform_sample(dim, rng, num_identities)
    directions = {name: uniform_sample(dim, rng) for name in attribute_names}
    records = []
    for i, mu in enumerate(means):
        attrs = {name: attribute_label(d, mu) for name, d in directions.items()}
        samples = sample_vmf(VmfParams(mu, within_kappa), rng, samples_per_identity)
        records.extend(IdentityRecord(i, s, dict(attrs)) for s in samples)
    return IdentityDatabase(dim, records, dict(enumerate(means)), directions)


def split_query_gallery(db, queries_per_identity, rng):
    """Per identity, move ``queries_per_identity`` random records to the query side."""
    by_id = {}
    for r in db.records:
        by_id.setdefault(r.identity_id, []).append(r)
    queries, gallery = [], []
    for ident in sorted(by_id):
        recs = by_id[ident]
        if queries_per_identity >= len(recs) or queries_per_identity < 1:
            raise InsufficientSamples(
                f"identity {ident} has {len(recs)} samples; cannot take {queries_per_identity} queries"
            )
        order = rng.permutation(len(recs))
        queries.extend(recs[k] for k in sorted(order[:queries_per_identity]))
        gallery.extend(recs[k] for k in sorted(order[queries_per_identity:]))
    return db.subset(queries), db.subset(gallery)
