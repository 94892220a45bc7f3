"""Privacy and utility evaluation at the embedding level.

Identification sorts the gallery by angular distance to each query;
verification computes an equal error rate from genuine and impostor
distances; utility is measured as agreement of hyperplane attribute labels.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import EmptyGallery, EmptyInput, NoAttributes
from .geometry import angular_distances, normalize, uniform_sample
from .mechanisms import MechanismKind, MechanismSpec, apply, privatize_batch
from .streams import substream
from .synthdata import split_query_gallery
from .vmf import VmfParams, log_density_rows, sample_vmf

QUERY_CHUNK = 1024


@dataclass
class EvalReport:
    mechanism: MechanismSpec
    rank_k: dict
    eer: float
    eer_threshold: float
    mean_displacement: float
    median_displacement: float
    attribute_accuracy: dict
    num_queries: int
    seed: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mechanism": self.mechanism.to_dict(),
            "label": self.mechanism.label,
            "rank_k": {str(k): v for k, v in self.rank_k.items()},
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "mean_displacement": self.mean_displacement,
            "median_displacement": self.median_displacement,
            "attribute_accuracy": self.attribute_accuracy,
            "num_queries": self.num_queries,
            "seed": self.seed,
            **self.extra,
        }


@dataclass
class AttackReport:
    observations: int
    cosine_to_true: float
    rank1_after_attack: float | None = None

    def __post_init__(self):
        if self.observations < 1:
            raise ValueError("observations must be >= 1")


class DisplacementStats(NamedTuple):
    mean: float
    median: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    distances: np.ndarray


# -- identification ---------------------------------------------------------


def genuine_ranks(query_ids, query_vecs, gallery_ids, gallery_vecs):
    """0-based rank of the first same-identity gallery entry for each query.

    Gallery entries are ordered by angular distance, ties broken by gallery
    index. Queries with no same-identity entry get rank ``len(gallery)``.
    """
    query_ids = np.asarray(query_ids)
    gallery_ids = np.asarray(gallery_ids)
    gallery_vecs = np.asarray(gallery_vecs, dtype=np.float64)
    n_gal = gallery_ids.shape[0]
    if n_gal == 0:
        raise EmptyGallery("gallery is empty")
    ranks = np.empty(len(query_ids), dtype=np.int64)
    cols = np.arange(n_gal)
    for s in range(0, len(query_ids), QUERY_CHUNK):
        q = np.asarray(query_vecs[s : s + QUERY_CHUNK], dtype=np.float64)
        d = np.arccos(np.clip(q @ gallery_vecs.T, -1.0, 1.0))
        same = query_ids[s : s + QUERY_CHUNK, None] == gallery_ids[None, :]
        dg = np.where(same, d, np.inf)
        first = np.argmin(dg, axis=1)
        g = dg[np.arange(len(first)), first]
        before = (d < g[:, None]) | ((d == g[:, None]) & (cols[None, :] < first[:, None]))
        r = before.sum(axis=1)
        r[~np.isfinite(g)] = n_gal
        ranks[s : s + QUERY_CHUNK] = r
    return ranks


def rank_k_rates(query_ids, query_vecs, gallery, k_values):
    ranks = genuine_ranks(query_ids, query_vecs, gallery.ids, gallery.embeddings)
    return {int(k): float(np.mean(ranks < k)) for k in k_values}


def rank_k_identification(queries, gallery, k):
    """Fraction of ``queries`` whose identity appears among the ``k`` nearest gallery entries."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(gallery) == 0:
        raise EmptyGallery("gallery is empty")
    return rank_k_rates(queries.ids, queries.embeddings, gallery, [k])[k]


# -- verification -----------------------------------------------------------


def _lower_hull(points):
    """Indices of the lower convex hull of points sorted by x."""
    hull = []
    for i, (px, py) in enumerate(points):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = points[hull[-2]], points[hull[-1]]
            if (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def compute_eer(genuine, impostor):
    """Equal error rate and its threshold from angular distances.

    A pair is accepted when its distance is <= t, so FAR(t) counts impostor
    distances <= t and FRR(t) counts genuine distances > t. Operating points
    are swept over the pooled sorted distances; the crossing FAR = FRR is
    located by linear interpolation along the convex hull of the (FAR, FRR)
    points, which makes the result depend only on the ordering of scores.
    """
    genuine = np.sort(np.asarray(genuine, dtype=np.float64))
    impostor = np.sort(np.asarray(impostor, dtype=np.float64))
    if genuine.size == 0 or impostor.size == 0:
        raise EmptyInput("genuine and impostor lists must be nonempty")
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    far = np.searchsorted(impostor, thresholds, side="right") / impostor.size
    frr = 1.0 - np.searchsorted(genuine, thresholds, side="right") / genuine.size
    far = np.concatenate([[0.0], far])
    frr = np.concatenate([[1.0], frr])
    thr = np.concatenate([[thresholds[0]], thresholds])
    # Keep, for each FAR value, the lowest FRR (the last threshold reaching it).
    pts, tpos = [], []
    for i in range(far.size):
        if pts and far[i] == pts[-1][0]:
            pts[-1] = (far[i], frr[i])
            tpos[-1] = thr[i]
        else:
            pts.append((far[i], frr[i]))
            tpos.append(thr[i])
    idx = _lower_hull(pts)
    hull = [pts[i] for i in idx]
    hull_t = [tpos[i] for i in idx]
    for (x1, y1), (x2, y2), t1, t2 in zip(hull, hull[1:], hull_t, hull_t[1:]):
        d1, d2 = x1 - y1, x2 - y2
        if d1 == 0.0:
            return float(x1), float(t1)
        if d1 < 0.0 <= d2:
            a = -d1 / (d2 - d1)
            return float(x1 + a * (x2 - x1)), float(t1 + a * (t2 - t1))
    return float(hull[-1][0]), float(hull_t[-1])


# -- utility ----------------------------------------------------------------


def _spec_key(spec):
    doc = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(doc).digest()[:4], "little")


def attribute_agreement(db, records, privatized):
    if not db.attribute_directions:
        raise NoAttributes("database carries no attribute directions")
    out = {}
    for name, direction in db.attribute_directions.items():
        pred = (privatized @ direction >= 0.0).astype(int)
        truth = np.array([r.attributes[name] for r in records])
        out[name] = float(np.mean(pred == truth))
    return out


def attribute_preservation(db, spec, seed, draws=1):
    """Per-attribute label agreement after privatizing every record of ``db``."""
    if not db.attribute_directions:
        raise NoAttributes("database carries no attribute directions")
    records = [r for r in db.records for _ in range(draws)]
    xs = np.stack([r.embedding for r in records])
    priv = privatize_batch(spec, xs, seed, keys=(3, _spec_key(spec)))
    return attribute_agreement(db, records, priv)


def displacement_stats(spec, dim, trials, rng, bins=36):
    """Angles between random inputs and their privatized outputs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    xs = uniform_sample(dim, rng, trials)
    seed = int(rng.integers(2**63))
    ys = privatize_batch(spec, xs, seed)
    if not spec.on_sphere:
        ys = ys / np.linalg.norm(ys, axis=1, keepdims=True)
    d = angular_distances(xs, ys)
    hist, edges = np.histogram(d, bins=bins, range=(0.0, math.pi))
    return DisplacementStats(float(d.mean()), float(np.median(d)), hist, edges, d)


# -- attacks ----------------------------------------------------------------


def sample_releases(spec, x, m, rng):
    """``m`` independent privatized releases of ``x`` as rows."""
    x = normalize(x)
    if spec.kind is MechanismKind.AVATAR_LDP:
        return sample_vmf(VmfParams(x, spec.epsilon), rng, m)
    if spec.kind is MechanismKind.UNIFORM_BASELINE:
        return uniform_sample(x.shape[0], rng, m)
    return np.stack([apply(spec, x, rng).vector for _ in range(m)])


def averaging_attack(x, spec, m, rng, gallery=None, identity_id=None):
    """Estimate ``x`` as the normalized mean of ``m`` releases."""
    if m < 1:
        raise ValueError("m must be >= 1")
    x = normalize(x)
    releases = sample_releases(spec, x, m, rng)
    mean = releases.mean(axis=0)
    n = np.linalg.norm(mean)
    estimate = mean / n if n > 0 else mean
    rank1 = None
    if gallery is not None and identity_id is not None:
        ranks = genuine_ranks([identity_id], estimate[None, :], gallery.ids, gallery.embeddings)
        rank1 = float(ranks[0] < 1)
    return AttackReport(m, float(estimate @ x), rank1)


def averaging_attack_series(spec, dim, m_grid, repetitions, seed, gallery=None):
    """Mean attack outcome over ``repetitions`` random targets for each m.

    Targets are uniform random directions, or gallery records when a gallery
    is given (then rank-1 recovery is reported as well).
    """
    rows = []
    for m in m_grid:
        cos, hits = [], []
        for rep in range(repetitions):
            rng = substream(seed, int(m), rep)
            if gallery is None:
                x, ident = uniform_sample(dim, rng), None
            else:
                rec = gallery.records[int(rng.integers(len(gallery)))]
                x, ident = rec.embedding, rec.identity_id
            rep_out = averaging_attack(x, spec, int(m), rng, gallery, ident)
            cos.append(rep_out.cosine_to_true)
            if rep_out.rank1_after_attack is not None:
                hits.append(rep_out.rank1_after_attack)
        rows.append(
            {
                "observations": int(m),
                "cosine_to_true": float(np.mean(cos)),
                "cosine_std": float(np.std(cos)),
                "rank1_after_attack": float(np.mean(hits)) if hits else None,
            }
        )
    return rows


# -- privacy bound ----------------------------------------------------------


def density_ratio_slack(x1, x2, y, epsilon):
    """Compare VMF log-density ratios with the eps*d2 and eps*d_angle bounds.

    Rows of ``x1``, ``x2``, ``y`` form the triples. Slack is ratio - bound;
    the guarantee holds when it never exceeds 0.
    """
    ratio = log_density_rows(y, x1, epsilon) - log_density_rows(y, x2, epsilon)
    d2 = np.linalg.norm(x1 - x2, axis=1)
    dang = angular_distances(x1, x2)
    return {
        "dim": int(x1.shape[1]),
        "epsilon": float(epsilon),
        "trials": int(x1.shape[0]),
        "max_slack_d2": float(np.max(ratio - epsilon * d2)),
        "max_slack_angular": float(np.max(ratio - epsilon * dang)),
        "max_gap_d2_minus_angular": float(np.max(d2 - dang)),
        "violations": int(np.sum(ratio > epsilon * d2 + 1e-9) + np.sum(epsilon * d2 > epsilon * dang + 1e-9)),
    }


def ldp_bound_check(dim, epsilon, trials, rng):
    """Density-ratio bound check on ``trials`` uniform random triples."""
    x1, x2, y = (uniform_sample(dim, rng, trials) for _ in range(3))
    return density_ratio_slack(x1, x2, y, epsilon)


# -- sweep ------------------------------------------------------------------


def evaluate_mechanism(query, gallery, spec, k_values, seed, draws_per_query=1, db=None):
    """One report row: privatize the queries and score them against the gallery."""
    if len(gallery) == 0:
        raise EmptyGallery("gallery is empty")
    key = _spec_key(spec)
    records = [r for r in query.records for _ in range(draws_per_query)]
    qids = np.array([r.identity_id for r in records], dtype=np.int64)
    xs = np.stack([r.embedding for r in records])
    priv = privatize_batch(spec, xs, seed, keys=(1, key))
    if not spec.on_sphere:
        priv_dir = priv / np.linalg.norm(priv, axis=1, keepdims=True)
    else:
        priv_dir = priv

    rank_k = rank_k_rates(qids, priv_dir, gallery, k_values)

    # Balanced verification pairs: one genuine and one impostor per query.
    gids = gallery.ids
    gvecs = gallery.embeddings
    first_of = {}
    for idx, g in enumerate(gids):
        first_of.setdefault(int(g), idx)
    ident_list = np.array(sorted(first_of))
    pair_rng = substream(seed, 2, key)
    gen_idx, imp_idx, keep = [], [], []
    for row, q in enumerate(qids):
        if int(q) not in first_of or len(ident_list) < 2:
            continue
        other = q
        while other == q:
            other = ident_list[pair_rng.integers(len(ident_list))]
        gen_idx.append(first_of[int(q)])
        imp_idx.append(first_of[int(other)])
        keep.append(row)
    if keep:
        keep = np.array(keep)
        genuine = angular_distances(priv_dir[keep], gvecs[gen_idx])
        impostor = angular_distances(priv_dir[keep], gvecs[imp_idx])
        eer, thr = compute_eer(genuine, impostor)
    else:
        eer, thr = float("nan"), float("nan")

    disp = angular_distances(xs, priv_dir)
    source = db if db is not None else query
    attrs = attribute_agreement(source, records, priv_dir) if source.attribute_directions else {}
    return EvalReport(
        mechanism=spec,
        rank_k=rank_k,
        eer=eer,
        eer_threshold=thr,
        mean_displacement=float(disp.mean()),
        median_displacement=float(np.median(disp)),
        attribute_accuracy=attrs,
        num_queries=len(records),
        seed=int(seed),
        extra={"draws_per_query": draws_per_query},
    )


def privacy_utility_sweep(db, specs, k_values, seed, queries_per_identity=1, draws_per_query=1):
    """Evaluate every spec on one query/gallery split of ``db``.

    ``draws_per_query`` privatizes each query that many times with
    independent substreams (a fresh release per observation).
    """
    specs = list(specs)
    if not specs:
        raise ValueError("specs must be nonempty")
    query, gallery = split_query_gallery(db, queries_per_identity, substream(seed, 0))
    return [evaluate_mechanism(query, gallery, s, k_values, seed, draws_per_query, db) for s in specs]


def two_proportion_pvalue(hits1, n1, hits2, n2):
    """Two-sided p-value of the pooled two-proportion z test."""
    from scipy import stats

    p = (hits1 + hits2) / (n1 + n2)
    se = math.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))
    if se == 0:
        return 1.0
    z = (hits1 / n1 - hits2 / n2) / se
    return float(2 * stats.norm.sf(abs(z)))
