"""Generalized Jakes correlation for linear arrays with a uniform angular spread."""

from dataclasses import dataclass

import numpy as np

from .errors import QuadratureDivergence

DEFAULT_NODES = 512
DEFAULT_PANELS = 16
CLAMP_TOL = 1e-6


@dataclass(frozen=True)
class JakesSpec:
    """Angular range in radians and antenna positions in wavelengths."""

    theta_min: float
    theta_max: float
    positions: tuple
    side: str = "receive"

    def __post_init__(self):
        if not self.theta_max > self.theta_min:
            raise ValueError("theta_max must exceed theta_min")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("antenna positions must be finite")
        if self.side not in ("transmit", "receive"):
            raise ValueError("side must be 'transmit' or 'receive'")


def build_linear_array(count, spacing_wavelengths):
    """Positions ``0, s, 2s, ...`` of a uniform linear array."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return tuple(float(spacing_wavelengths) * i for i in range(count))


def _gauss_legendre(lo, hi, n_nodes, n_panels):
    per = n_nodes // n_panels
    if per * n_panels != n_nodes:
        raise ValueError("n_nodes must be a multiple of n_panels")
    x, w = np.polynomial.legendre.leggauss(per)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def jakes_matrix(spec, n_nodes=DEFAULT_NODES, n_panels=DEFAULT_PANELS):
    """Raw quadrature of the Jakes kernel, without the PSD clamp."""
    pos = np.asarray(spec.positions, dtype=float)
    theta, w = _gauss_legendre(spec.theta_min, spec.theta_max, n_nodes, n_panels)
    w = w / (spec.theta_max - spec.theta_min)
    cos_t = np.cos(theta)
    n = pos.size
    out = np.eye(n, dtype=complex)
    iu, ju = np.triu_indices(n, 1)
    d = pos[iu] - pos[ju]
    vals = np.exp(2j * np.pi * d[:, None] * cos_t[None, :]) @ w
    out[iu, ju] = vals
    out[ju, iu] = vals.conj()
    return out


def jakes_correlation(spec, n_nodes=DEFAULT_NODES, n_panels=DEFAULT_PANELS):
    """Correlation matrix with entries ``E_theta exp(2 pi i d_ij cos theta)``.

    ``theta`` is uniform on ``[theta_min, theta_max]`` and ``d_ij`` is the
    signed distance between antennas ``i`` and ``j`` in wavelengths. The
    integral uses composite Gauss-Legendre quadrature. Small negative
    eigenvalues caused by quadrature error are clamped to zero.

    Raises
    ------
    QuadratureDivergence
        If an eigenvalue falls below ``-1e-6``.
    """
    m = jakes_matrix(spec, n_nodes, n_panels)
    w, v = np.linalg.eigh(m)
    if w[0] < -CLAMP_TOL:
        raise QuadratureDivergence(f"eigenvalue {w[0]:.3e}; increase the number of nodes")
    if w[0] >= 0:
        return m
    m = (v * np.clip(w, 0.0, None)) @ v.conj().T
    # rescale to unit diagonal; a congruence keeps the result PSD
    d = 1.0 / np.sqrt(np.diag(m).real)
    m = d[:, None] * m * d[None, :]
    m = 0.5 * (m + m.conj().T)
    np.fill_diagonal(m, 1.0)
    return m
