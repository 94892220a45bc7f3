"""Von Mises-Fisher sampling and density on S^{n-1}."""

import math
from dataclasses import dataclass

import numpy as np

from .bessel import log_iv
from .errors import DimMismatch, SamplerStalled
from .geometry import normalize, uniform_sample

MAX_REJECTION_ROUNDS = 10**6


@dataclass(frozen=True)
class VmfParams:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError("kappa must be >= 0")
        object.__setattr__(self, "mu", normalize(self.mu))

    @property
    def dim(self):
        return self.mu.shape[0]


def _envelope(dim, kappa):
    m = dim - 1.0
    # (-2k + sqrt(4k^2 + m^2)) / m, rearranged to avoid cancellation at large k
    b = m / (math.sqrt(4.0 * kappa * kappa + m * m) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * math.log1p(-x0 * x0)
    return b, x0, c


def sample_cosines(dim, kappa, rng, size):
    """Draw ``size`` values of w = <mu, y> for y ~ VMF(mu, kappa) on S^{dim-1}.

    Wood's rejection sampler with a Beta((n-1)/2, (n-1)/2) proposal. Returns
    (w, 1 - w) so callers can form sqrt(1 - w^2) without cancellation.
    """
    if dim < 2:
        raise DimMismatch("dim must be >= 2")
    m = dim - 1.0
    b, x0, c = _envelope(dim, kappa)
    w = np.empty(size)
    one_minus_w = np.empty(size)
    pending = np.arange(size)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > MAX_REJECTION_ROUNDS:
            raise SamplerStalled(f"VMF rejection loop exceeded {MAX_REJECTION_ROUNDS} rounds (dim={dim}, kappa={kappa})")
        n = pending.size
        z = rng.beta(0.5 * m, 0.5 * m, size=n)
        u = rng.uniform(size=n)
        denom = 1.0 - (1.0 - b) * z
        wp = (1.0 - (1.0 + b) * z) / denom
        omw = 2.0 * b * z / denom
        ok = kappa * wp + m * np.log1p(-x0 * wp) - c >= np.log(u)
        idx = pending[ok]
        w[idx] = wp[ok]
        one_minus_w[idx] = omw[ok]
        pending = pending[~ok]
    return w, one_minus_w


def _householder_to(mu, ys):
    """Apply the reflection that maps e1 onto ``mu`` to each row of ``ys``."""
    u = -mu.copy()
    u[0] += 1.0
    uu = u @ u
    if uu < 1e-30:
        return ys
    return ys - np.outer(ys @ u, u) * (2.0 / uu)


def sample_vmf(params, rng, size=None):
    """Draw from VMF(mu, kappa); kappa == 0 falls back to the uniform law."""
    mu, kappa, dim = params.mu, float(params.kappa), params.dim
    if kappa == 0.0:
        return uniform_sample(dim, rng, size)
    n = 1 if size is None else size
    w, omw = sample_cosines(dim, kappa, rng, n)
    v = uniform_sample(dim - 1, rng, n) if dim > 2 else np.where(rng.uniform(size=(n, 1)) < 0.5, -1.0, 1.0)
    radial = np.sqrt(omw * (1.0 + w))
    ys = np.empty((n, dim))
    ys[:, 0] = w
    ys[:, 1:] = v * radial[:, None]
    ys = _householder_to(mu, ys)
    ys /= np.linalg.norm(ys, axis=1, keepdims=True)
    return ys[0] if size is None else ys


def log_normalizer(dim, kappa):
    """ln C_n(kappa) with density C_n(kappa) exp(kappa <mu, y>)."""
    nu = 0.5 * dim - 1.0
    return nu * math.log(kappa) - 0.5 * dim * math.log(2.0 * math.pi) - log_iv(nu, kappa)


def log_density(y, params):
    """Log VMF density at ``y`` (a vector or a stack of row vectors)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != params.dim:
        raise DimMismatch(f"dimension mismatch: {y.shape[-1]} vs {params.dim}")
    if params.kappa <= 0:
        raise ValueError("log_density requires kappa > 0; use -log_unit_sphere_area for kappa = 0")
    return log_normalizer(params.dim, params.kappa) + params.kappa * (y @ params.mu)


def log_density_rows(ys, mus, kappa):
    """Row-wise log density of ``ys[i]`` under VMF(``mus[i]``, kappa)."""
    ys = np.asarray(ys, dtype=np.float64)
    mus = np.asarray(mus, dtype=np.float64)
    if ys.shape != mus.shape:
        raise DimMismatch(f"shape mismatch: {ys.shape} vs {mus.shape}")
    if kappa <= 0:
        raise ValueError("log_density_rows requires kappa > 0")
    return log_normalizer(ys.shape[-1], kappa) + kappa * np.sum(ys * mus, axis=-1)


def mean_resultant_length(dim, kappa):
    """A_n(kappa) = I_{n/2}(kappa) / I_{n/2-1}(kappa), the mean of <mu, y>."""
    if dim < 2:
        raise DimMismatch("dim must be >= 2")
    if kappa == 0:
        return 0.0
    nu = 0.5 * dim - 1.0
    return math.exp(log_iv(nu + 1.0, kappa) - log_iv(nu, kappa))
