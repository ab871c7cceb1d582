"""Deterministic equivalents of mutual information, MMSE SINR and sum rate.

All values are in nats; see `to_unit` for conversion at output time.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotPD
from .fixed_point import FadingSolution, QuasiStaticSolution
from .numerics import logdet_hpd

LN2 = np.log(2.0)


def to_unit(value, unit):
    """Convert nats to ``unit`` ("nats" or "bits")."""
    if unit == "nats":
        return value
    if unit == "bits":
        return value / LN2
    raise ValueError(f"unknown unit {unit!r}")


@dataclass(frozen=True)
class MetricReport:
    mutual_info: float
    sinr: list
    mmse_sum_rate: float
    stieltjes: float = float("nan")


def _pair(sol):
    if isinstance(sol, QuasiStaticSolution):
        return sol.a, sol.a_bar
    if isinstance(sol, FadingSolution):
        return sol.b, sol.b_bar
    raise TypeError("expected a quasi-static or fading solution")


def _precoder_terms(sol, p):
    """Sum over users of the terms that account for the isometric precoders.

    ``(1/N) logdet((c_bar - x x_bar) I + x P) + (1 - c) c_bar log(c_bar - x x_bar)
    - c_bar log c_bar`` with ``(x, x_bar)`` = ``(a, a_bar)`` or ``(b, b_bar)``.
    Each term is zero for a full-stream user.
    """
    x, x_bar = _pair(sol)
    n = sol.n_rx
    total = 0.0
    for k, pk in enumerate(p):
        if sol.full_stream[k]:
            continue
        pk = np.asarray(pk, dtype=float)
        cb = sol.c_bar[k]
        c = sol.c[k]
        gap = cb - x[k] * x_bar[k]
        diag = gap + x[k] * pk
        if gap <= 0 or np.any(diag <= 0):
            raise NotPD(f"precoder term of user {k} is not positive (gap={gap:.3e})")
        total += np.sum(np.log(diag)) / n + (1.0 - c) * cb * np.log(gap) - cb * np.log(cb)
    return float(total)


def det_mutual_info_quasi_static(sol, r, p):
    r_stack = np.asarray(r, dtype=complex)
    n = sol.n_rx
    m = np.eye(n) + np.einsum("k,kij->ij", sol.a_bar, r_stack) / sol.sigma2
    return logdet_hpd(m) / n + _precoder_terms(sol, p)


def det_vn_fading(sol, r):
    """Variance-profile part of the fading mutual information."""
    n = sol.n_rx
    acc = np.zeros((n, n), dtype=complex)
    tail = 0.0
    for k, rk in enumerate(r):
        bb = sol.b_bar[k]
        for rkj, z in zip(rk, sol.zeta[k]):
            acc += bb * np.asarray(rkj) / (1.0 + bb * z)
            tail += np.log1p(bb * z)
    m = np.eye(n) + acc / (n * sol.sigma2)
    return logdet_hpd(m) / n - float(np.dot(sol.b_bar, sol.b)) + tail / n


def det_mutual_info_fading(sol, r, p):
    return det_vn_fading(sol, r) + _precoder_terms(sol, p)


def det_mutual_info(sol, r, p):
    """Deterministic mutual information for either kind of solution."""
    if isinstance(sol, QuasiStaticSolution):
        return det_mutual_info_quasi_static(sol, r, p)
    return det_mutual_info_fading(sol, r, p)


def det_sinr(sol, p_entry, k):
    """MMSE SINR of a stream of user ``k`` with power ``p_entry``."""
    x, x_bar = _pair(sol)
    return float(p_entry) * x[k] / (sol.c_bar[k] - x[k] * x_bar[k])


def det_sinr_all(sol, p):
    return [np.array([det_sinr(sol, pe, k) for pe in np.asarray(pk, dtype=float)])
            for k, pk in enumerate(p)]


def det_mmse_sum_rate(sol, p, users=None):
    """Normalized MMSE sum rate ``(1/N) sum log(1 + gamma)``.

    ``users`` restricts the sum to a subset of users.
    """
    users = range(len(p)) if users is None else users
    sinr = det_sinr_all(sol, p)
    return float(sum(np.sum(np.log1p(sinr[k])) for k in users) / sol.n_rx)


def det_stieltjes(sol, r):
    """``(1/N) tr (sum_k a_bar_k R_k + sigma2 I)^{-1}``."""
    r_stack = np.asarray(r, dtype=complex)
    n = sol.n_rx
    m = np.einsum("k,kij->ij", sol.a_bar, r_stack) + sol.sigma2 * np.eye(n)
    return float(np.trace(np.linalg.inv(m)).real / n)


def det_vn_variance_profile(sol, r):
    r_stack = np.asarray(r, dtype=complex)
    n = r_stack.shape[1]
    d = sol.delta
    m = np.eye(n) + np.einsum("j,jab->ab", 1.0 / (1.0 + d), r_stack) / (n * sol.sigma2)
    return logdet_hpd(m) / n + float(np.sum(np.log1p(d)) - np.sum(d / (1.0 + d))) / n


def metric_report(sol, r, p):
    stj = det_stieltjes(sol, r) if isinstance(sol, QuasiStaticSolution) else float("nan")
    return MetricReport(
        mutual_info=det_mutual_info(sol, r, p),
        sinr=det_sinr_all(sol, p),
        mmse_sum_rate=det_mmse_sum_rate(sol, p),
        stieltjes=stj,
    )
