"""Exact finite-size metrics on sampled channels and the replication engine.

Replication ``i`` draws everything from ``RngStream(seed, i)``, in this
order: the channel of every user (fading scenarios only, users in index
order), then the precoder of every user. Every replication is evaluated on
the whole noise grid with the same draw.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .ensembles import RngStream, sample_haar_columns
from .errors import DimensionMismatch, IsobeamError
from .numerics import logdet_hpd, solve_hpd

DOWNDATE_TOL = 1e-8
METRICS = ("mutual_info", "mmse_sum_rate")


@dataclass(frozen=True)
class ReplicationStats:
    metric_name: str
    mean: float
    std_dev: float
    std_err: float
    n_reps: int
    seed: int


def build_B(h, w, p):
    """``sum_k H_k W_k P_k W_k^H H_k^H``."""
    if not (len(h) == len(w) == len(p)) or not h:
        raise DimensionMismatch("h, w and p need one entry per user")
    n = np.shape(h[0])[0]
    b = np.zeros((n, n), dtype=complex)
    for hk, wk, pk in zip(h, w, p):
        hk = np.asarray(hk)
        wk = np.asarray(wk)
        pk = np.asarray(pk, dtype=float).reshape(-1)
        if hk.shape[0] != n or hk.shape[1] != wk.shape[0] or wk.shape[1] != pk.size:
            raise DimensionMismatch(f"shapes H{hk.shape}, W{wk.shape}, P({pk.size}) do not conform")
        v = hk @ wk
        b += (v * pk) @ v.conj().T
    return 0.5 * (b + b.conj().T)


def empirical_mutual_info(b, sigma2):
    """``(1/N) logdet(I + B / sigma2)``."""
    b = np.asarray(b)
    n = b.shape[0]
    return logdet_hpd(np.eye(n) + b / sigma2) / n


def empirical_mmse_sinr(h, w, p, sigma2, k, j):
    """SINR of stream ``j`` of user ``k`` at the output of the MMSE detector."""
    b = build_B(h, w, p)
    v = np.asarray(h[k]) @ np.asarray(w[k])[:, j]
    pkj = float(np.asarray(p[k]).reshape(-1)[j])
    if pkj == 0.0:
        return 0.0
    rest = b - pkj * np.outer(v, v.conj()) + sigma2 * np.eye(b.shape[0])
    return float(pkj * np.real(v.conj() @ solve_hpd(rest, v)))


def sinr_all(h, w, p, sigma2, b=None):
    """SINR of every stream, from one factorization of ``B + sigma2 I``.

    With ``q = v^H (B + sigma2 I)^{-1} v`` the inversion lemma gives
    ``gamma = p q / (1 - p q)``. Streams whose implied solve residual exceeds
    ``DOWNDATE_TOL`` are recomputed directly.
    """
    if b is None:
        b = build_B(h, w, p)
    n = b.shape[0]
    a = b + sigma2 * np.eye(n)
    factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    out = []
    for k, (hk, wk, pk) in enumerate(zip(h, w, p)):
        pk = np.asarray(pk, dtype=float).reshape(-1)
        v = np.asarray(hk) @ np.asarray(wk)
        x = scipy.linalg.cho_solve(factor, v, check_finite=False)
        q = np.real(np.sum(v.conj() * x, axis=0))
        denom = 1.0 - pk * q
        gamma = np.where(pk > 0, pk * q / np.where(denom > 0, denom, 1.0), 0.0)
        # check the solve of (A - p v v^H) y = v with y = x / denom
        y = x / np.where(denom != 0, denom, 1.0)
        res = a @ y - v * (pk * np.sum(v.conj() * y, axis=0)) - v
        scale = np.maximum(np.linalg.norm(v, axis=0), 1e-300)
        bad = (pk > 0) & ((denom <= 0) | (np.linalg.norm(res, axis=0) / scale > DOWNDATE_TOL))
        for j in np.flatnonzero(bad):
            rest = a - pk[j] * np.outer(v[:, j], v[:, j].conj())
            gamma[j] = pk[j] * np.real(v[:, j].conj() @ solve_hpd(rest, v[:, j]))
        out.append(gamma)
    return out


def empirical_mmse_sum_rate(h, w, p, sigma2, users=None):
    """``(1/N) sum log(1 + gamma)`` over the streams of ``users`` (default all)."""
    n = np.shape(h[0])[0]
    gammas = sinr_all(h, w, p, sigma2)
    users = range(len(p)) if users is None else users
    return float(sum(np.sum(np.log1p(gammas[k])) for k in users) / n)


def _replicate(scn, sigma2_grid, metrics, seed, index):
    """Metric samples of replication ``index``: array (len(grid), len(metrics))."""
    g = RngStream(seed, index).generator()
    h = scn.sample_channels(g)
    w = [sample_haar_columns(m, len(pk), g) for m, pk in zip(scn.n_antennas, scn.powers)]
    b_all = build_B(h, w, scn.powers)
    interferers = scn.interference
    b_int = build_B([h[k] for k in interferers], [w[k] for k in interferers],
                    [scn.powers[k] for k in interferers]) if interferers else None
    out = np.empty((len(sigma2_grid), len(metrics)))
    for i, s2 in enumerate(sigma2_grid):
        for j, name in enumerate(metrics):
            if name == "mutual_info":
                val = empirical_mutual_info(b_all, s2)
                if b_int is not None:
                    val -= empirical_mutual_info(b_int, s2)
            elif name == "mmse_sum_rate":
                gam = sinr_all(h, w, scn.powers, s2, b=b_all)
                val = sum(np.sum(np.log1p(gam[k])) for k in scn.signal) / scn.n_rx
            else:
                raise ValueError(f"unknown metric {name!r}")
            out[i, j] = val
    return out


def _replicate_chunk(args):
    scn, grid, metrics, seed, indices = args
    rows = []
    for i in indices:
        try:
            rows.append(_replicate(scn, grid, metrics, seed, i))
        except IsobeamError as exc:
            raise type(exc)(f"replication {i}: {exc}") from exc
    return np.array(rows)


def replicate_samples(scenario, n_reps, seed, sigma2_grid, metrics=METRICS, workers=1):
    """Raw samples, shape ``(n_reps, len(sigma2_grid), len(metrics))``.

    Replications are split into contiguous chunks and reassembled in index
    order, so the result does not depend on ``workers``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    from .scenarios import realize

    scn = realize(scenario)
    grid = [float(s) for s in sigma2_grid]
    metrics = tuple(metrics)
    workers = max(1, int(workers))
    if workers == 1:
        return _replicate_chunk((scn, grid, metrics, seed, range(n_reps)))
    chunks = np.array_split(np.arange(n_reps), min(workers * 4, n_reps))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_replicate_chunk,
                              [(scn, grid, metrics, seed, c.tolist()) for c in chunks]))
    return np.concatenate(parts, axis=0)


def summarize(samples, name, seed):
    """ReplicationStats of a 1-D sample vector (sample std, ``ddof=1``)."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1)) if n > 1 else 0.0
    return ReplicationStats(name, mean, std, std / np.sqrt(n), n, int(seed))


def run_replications(scenario, metrics=METRICS, n_reps=1000, seed=0, sigma2_grid=None, workers=1):
    """Monte Carlo statistics for each noise level.

    Quasi-static scenarios keep their channels and resample the precoders
    only; fading scenarios redraw channels and precoders every replication.

    Returns
    -------
    list of dict
        One ``{metric: ReplicationStats}`` per entry of ``sigma2_grid``
        (default: the scenario's own SNR grid).
    """
    from .scenarios import realize

    scn = realize(scenario)
    if sigma2_grid is None:
        sigma2_grid = scn.sigma2_grid
    metrics = tuple(metrics)
    samples = replicate_samples(scn, n_reps, seed, sigma2_grid, metrics, workers)
    return [{m: summarize(samples[:, i, j], m, seed) for j, m in enumerate(metrics)}
            for i in range(len(sigma2_grid))]
