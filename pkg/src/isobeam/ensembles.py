"""Seeded sampling of Haar precoders and correlated Gaussian channels."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularGram
from .numerics import as_hermitian, hermitian_sqrt

HAAR_RETRIES = 3


@dataclass(frozen=True)
class RngStream:
    """Key of an independent random stream.

    The generator for ``(seed, stream_id)`` is derived with
    ``numpy.random.SeedSequence``, so replication ``i`` always sees the same
    numbers regardless of which process draws them or in what order.
    """

    seed: int
    stream_id: int = 0

    def generator(self):
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


def _rng(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def sample_gaussian_matrix(rows, cols, variance, rng):
    """Circularly-symmetric complex Gaussian matrix with entry variance ``variance``."""
    g = _rng(rng)
    scale = np.sqrt(variance / 2.0)
    return scale * (g.standard_normal((rows, cols)) + 1j * g.standard_normal((rows, cols)))


def sample_haar_columns(n_rows, n_cols, rng):
    """First ``n_cols`` columns of a Haar unitary, as ``X (X^H X)^{-1/2}``."""
    if n_cols > n_rows:
        raise DimensionMismatch(f"cannot draw {n_cols} orthonormal columns in dimension {n_rows}")
    g = _rng(rng)
    for _ in range(HAAR_RETRIES + 1):
        x = sample_gaussian_matrix(n_rows, n_cols, 1.0, g)
        w, v = np.linalg.eigh(x.conj().T @ x)
        if w.size == 0 or w[0] > 1e-10 * max(1.0, w[-1]):
            return x @ ((v / np.sqrt(w)) @ v.conj().T)
    raise SingularGram(f"Gram matrix singular after {HAAR_RETRIES} resamples")


def sample_channel_fading(correlations, rng):
    """Channel whose column ``j`` is ``R_j^{1/2} z_j`` with ``z_j ~ CN(0, I/N)``.

    Parameters
    ----------
    correlations : sequence of (N, N) arrays, or a prepared stack of their
        square roots from `correlation_roots`.
    """
    roots = correlations if isinstance(correlations, _Roots) else correlation_roots(correlations)
    n = roots.n
    z = sample_gaussian_matrix(n, len(roots.stack), 1.0 / n, rng)
    return np.einsum("jab,bj->aj", roots.stack, z)


class _Roots:
    def __init__(self, stack, n):
        self.stack = stack
        self.n = n


def correlation_roots(correlations):
    """Precompute ``R_j^{1/2}`` for repeated calls to `sample_channel_fading`."""
    mats = [np.asarray(r) for r in correlations]
    if not mats:
        raise DimensionMismatch("at least one column correlation is required")
    n = mats[0].shape[0]
    if any(m.shape != (n, n) for m in mats):
        raise DimensionMismatch("all column correlations must be N x N")
    return _Roots(np.array([hermitian_sqrt(m) for m in mats]), n)


def sample_kronecker_channel(r, t, rng):
    """Kronecker channel ``R^{1/2} Z T^{1/2}``, ``Z`` with CN(0, 1/N) entries."""
    r_half = hermitian_sqrt(r)
    t_half = hermitian_sqrt(t)
    n, n_k = r_half.shape[0], t_half.shape[0]
    z = sample_gaussian_matrix(n, n_k, 1.0 / n, rng)
    return r_half @ z @ t_half


def kronecker_reduction(r, t):
    """Column correlations ``R_j = t_j R`` equivalent to the Kronecker model.

    ``t_j`` are the eigenvalues of ``T``. The equivalence holds after
    rotating the transmit side by the eigenvectors of ``T``, which a Haar
    precoder absorbs.
    """
    r = as_hermitian(r, psd=True)
    t_eig = np.clip(np.linalg.eigvalsh(as_hermitian(t, psd=True)), 0.0, None)
    return [tj * r for tj in t_eig]
