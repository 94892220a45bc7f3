"""Privatization mechanisms acting on unit identity embeddings.

* ``avatar_ldp``: resample from VMF(x, epsilon), epsilon * d_angle private.
* ``avatar_rotation``: rotate x by exactly ``theta`` in a random 2-plane.
* ``compose_ldp_rotation``: rotation applied to the LDP output.
* ``uniform_baseline`` / ``laplace_baseline``: comparison points.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegeneratePlane, InvalidSpec
from .geometry import normalize, orthonormal_pair, rotate_in_plane, rotate_rows, uniform_sample
from .streams import fingerprint, substream
from .vmf import VmfParams, sample_vmf

LAPLACE_SENSITIVITY = 2.0
REVERSAL_WARNING = (
    "theta = 180 degrees maps x to -x deterministically; "
    "repeating the operation recovers the original identity"
)

log = logging.getLogger("spherepriv")


class MechanismKind(str, Enum):
    AVATAR_LDP = "avatar_ldp"
    AVATAR_ROTATION = "avatar_rotation"
    COMPOSE_LDP_ROTATION = "compose_ldp_rotation"
    UNIFORM_BASELINE = "uniform_baseline"
    LAPLACE_BASELINE = "laplace_baseline"
    IDENTITY = "identity"


_NEEDS_EPSILON = {MechanismKind.AVATAR_LDP, MechanismKind.COMPOSE_LDP_ROTATION, MechanismKind.LAPLACE_BASELINE}
_NEEDS_THETA = {MechanismKind.AVATAR_ROTATION, MechanismKind.COMPOSE_LDP_ROTATION}


@dataclass(frozen=True)
class MechanismSpec:
    """Declarative mechanism description. ``theta`` is in radians."""

    kind: MechanismKind
    epsilon: float | None = None
    theta: float | None = None
    renormalize_output: bool | None = None

    def __post_init__(self):
        try:
            kind = MechanismKind(self.kind)
        except ValueError:
            raise InvalidSpec(f"unknown mechanism kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        if kind in _NEEDS_EPSILON:
            if self.epsilon is None or not self.epsilon > 0 or not math.isfinite(self.epsilon):
                raise InvalidSpec(f"{kind.value} requires a finite epsilon > 0")
        elif self.epsilon is not None:
            raise InvalidSpec(f"{kind.value} takes no epsilon")
        if kind in _NEEDS_THETA:
            if self.theta is None or not 0.0 <= self.theta <= math.pi:
                raise InvalidSpec(f"{kind.value} requires theta in [0, pi]")
        elif self.theta is not None:
            raise InvalidSpec(f"{kind.value} takes no theta")
        if kind is MechanismKind.LAPLACE_BASELINE:
            if self.renormalize_output is None:
                object.__setattr__(self, "renormalize_output", True)
        elif self.renormalize_output is not None:
            raise InvalidSpec("renormalize_output applies to laplace_baseline only")
        if self.reversible:
            log.warning(REVERSAL_WARNING)

    @property
    def reversible(self):
        """True when the rotation is the antipodal map, which undoes itself."""
        return self.theta is not None and math.isclose(self.theta, math.pi, abs_tol=1e-12)

    @classmethod
    def ldp(cls, epsilon):
        return cls(MechanismKind.AVATAR_LDP, epsilon=epsilon)

    @classmethod
    def rotation(cls, theta):
        return cls(MechanismKind.AVATAR_ROTATION, theta=theta)

    @classmethod
    def rotation_degrees(cls, degrees):
        return cls(MechanismKind.AVATAR_ROTATION, theta=math.radians(degrees))

    @classmethod
    def compose(cls, epsilon, theta):
        return cls(MechanismKind.COMPOSE_LDP_ROTATION, epsilon=epsilon, theta=theta)

    @classmethod
    def uniform(cls):
        return cls(MechanismKind.UNIFORM_BASELINE)

    @classmethod
    def laplace(cls, epsilon, renormalize=True):
        return cls(MechanismKind.LAPLACE_BASELINE, epsilon=epsilon, renormalize_output=renormalize)

    @classmethod
    def identity(cls):
        return cls(MechanismKind.IDENTITY)

    @property
    def label(self):
        k = self.kind
        if k is MechanismKind.AVATAR_LDP:
            return f"AvatarLDP eps={self.epsilon:g}"
        if k is MechanismKind.AVATAR_ROTATION:
            return f"AvatarRotation theta={math.degrees(self.theta):g}deg"
        if k is MechanismKind.COMPOSE_LDP_ROTATION:
            return f"AvatarLDP+Rotation eps={self.epsilon:g} theta={math.degrees(self.theta):g}deg"
        if k is MechanismKind.LAPLACE_BASELINE:
            suffix = "" if self.renormalize_output else " raw"
            return f"Laplace eps={self.epsilon:g}{suffix}"
        if k is MechanismKind.UNIFORM_BASELINE:
            return "Rand. sampling"
        return "Real (identity)"

    @property
    def on_sphere(self):
        return not (self.kind is MechanismKind.LAPLACE_BASELINE and not self.renormalize_output)

    def to_dict(self):
        d = {"kind": self.kind.value}
        for key in ("epsilon", "theta", "renormalize_output"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "kind" not in d:
            raise InvalidSpec("mechanism document needs a 'kind'")
        unknown = set(d) - {"kind", "epsilon", "theta", "renormalize_output"}
        if unknown:
            raise InvalidSpec(f"unknown mechanism fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class PrivatizedEmbedding:
    vector: np.ndarray
    source_dim: int
    mechanism: MechanismSpec
    seed_fingerprint: str


def _release(vector, x, spec, fp):
    return PrivatizedEmbedding(vector, x.shape[0], spec, fp)


def _ldp_vector(x, epsilon, rng):
    return sample_vmf(VmfParams(x, epsilon), rng)


def _rotation_vector(x, theta, rng):
    while True:
        z = uniform_sample(x.shape[0], rng)
        try:
            basis = orthonormal_pair(x, z)
        except DegeneratePlane:
            continue
        return rotate_in_plane(x, basis, theta)


def avatar_ldp(x, epsilon, rng):
    spec = MechanismSpec.ldp(epsilon)
    x = normalize(x)
    fp = fingerprint(rng)
    return _release(_ldp_vector(x, epsilon, rng), x, spec, fp)


def avatar_rotation(x, theta, rng):
    spec = MechanismSpec.rotation(theta)
    x = normalize(x)
    fp = fingerprint(rng)
    return _release(_rotation_vector(x, theta, rng), x, spec, fp)


def compose_ldp_rotation(x, epsilon, theta, rng):
    spec = MechanismSpec.compose(epsilon, theta)
    x = normalize(x)
    fp = fingerprint(rng)
    # The rotation stage only sees the LDP output.
    y = _ldp_vector(x, epsilon, rng)
    return _release(_rotation_vector(y, theta, rng), x, spec, fp)


def uniform_baseline(x, rng):
    x = np.asarray(x, dtype=np.float64)
    fp = fingerprint(rng)
    return _release(uniform_sample(x.shape[0], rng), x, MechanismSpec.uniform(), fp)


def laplace_baseline(x, epsilon, renormalize, rng):
    spec = MechanismSpec.laplace(epsilon, renormalize)
    x = normalize(x)
    fp = fingerprint(rng)
    y = x + rng.laplace(0.0, LAPLACE_SENSITIVITY / epsilon, size=x.shape[0])
    if renormalize:
        y = normalize(y)
    return _release(y, x, spec, fp)


def apply(spec, x, rng):
    """Run the mechanism described by ``spec`` on ``x``."""
    if not isinstance(spec, MechanismSpec):
        raise InvalidSpec(f"expected a MechanismSpec, got {type(spec).__name__}")
    k = spec.kind
    if k is MechanismKind.IDENTITY:
        x = normalize(x)
        return _release(x.copy(), x, spec, fingerprint(rng))
    if k is MechanismKind.AVATAR_LDP:
        return avatar_ldp(x, spec.epsilon, rng)
    if k is MechanismKind.AVATAR_ROTATION:
        return avatar_rotation(x, spec.theta, rng)
    if k is MechanismKind.COMPOSE_LDP_ROTATION:
        return compose_ldp_rotation(x, spec.epsilon, spec.theta, rng)
    if k is MechanismKind.UNIFORM_BASELINE:
        return uniform_baseline(x, rng)
    if k is MechanismKind.LAPLACE_BASELINE:
        return laplace_baseline(x, spec.epsilon, spec.renormalize_output, rng)
    raise InvalidSpec(f"unhandled mechanism kind {k}")


def _rotation_chunk(spec, xs, seed, keys, indices):
    zs = np.empty_like(xs)
    rngs = [substream(seed, *keys, int(i)) for i in indices]
    for row, r in enumerate(rngs):
        zs[row] = r.standard_normal(xs.shape[1])
    out, bad = rotate_rows(xs, zs, spec.theta)
    for row in np.flatnonzero(bad):
        # Rare: keep drawing from the same record stream.
        out[row] = _rotation_vector(xs[row], spec.theta, rngs[row])
    return out


def _generic_chunk(spec, xs, seed, keys, indices):
    return np.stack([apply(spec, x, substream(seed, *keys, int(i))).vector for x, i in zip(xs, indices)])


def privatize_batch(spec, xs, seed, keys=(), workers=1, chunk_size=2048):
    """Privatize each row of ``xs`` with its own substream ``(seed, *keys, row)``.

    Output is identical for any ``workers`` value. Rows must be unit norm.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise ValueError("xs must be a 2-D array of row vectors")
    if spec.kind is MechanismKind.IDENTITY:
        return xs.copy()
    if spec.kind is MechanismKind.AVATAR_ROTATION:
        xs = xs / np.linalg.norm(xs, axis=1, keepdims=True)
        chunk = _rotation_chunk
    else:
        chunk = _generic_chunk
    starts = range(0, xs.shape[0], chunk_size)
    jobs = [(xs[s : s + chunk_size], np.arange(s, min(s + chunk_size, xs.shape[0]))) for s in starts]
    if workers <= 1 or len(jobs) <= 1:
        parts = [chunk(spec, x, seed, keys, idx) for x, idx in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: chunk(spec, job[0], seed, keys, job[1]), jobs))
    if not parts:
        return np.empty_like(xs)
    return np.concatenate(parts)
