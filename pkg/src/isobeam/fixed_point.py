"""Fixed-point solvers for the fundamental equations.

Three systems are handled here:

* quasi-static channels, where each user ``k`` has a known Gram matrix
  ``R_k = H_k H_k^H`` and the unknowns are ``(a_k, a_bar_k)``;
* fading channels, where column ``j`` of ``H_k`` has covariance
  ``R_kj / N`` and the unknowns are ``(b_k, b_bar_k, zeta_kj)``;
* the variance-profile system (no precoder), unknowns ``delta_j``.

Every solver uses plain iteration with the printed initial values; no
damping or acceleration is applied. Convergence is declared when the
largest successive change ``|x_new - x|`` over all unknowns is at most
``tol * max(1, |x_new|)``.

Power loadings are given as one vector of diagonal entries per user, so
``len(p[k])`` is the number of streams ``n_k``.
"""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidLoadFactor,
    InvalidNoise,
    NonConvergence,
    UnsupportedFullStream,
)
from .numerics import inv_hpd, trace_of_products

RANK_TOL = 1e-10
BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_outer: int = 10000
    max_inner: int = 10000
    warm_start: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class _Dims:
    n_rx: int
    n_antennas: tuple
    n_streams: tuple
    full_stream: tuple

    @property
    def c(self):
        """Load factors ``n_k / N_k`` (0 for users without antennas)."""
        return np.array([n / m if m else 0.0 for n, m in zip(self.n_streams, self.n_antennas)])

    @property
    def c_bar(self):
        """Antenna ratios ``N_k / N``."""
        return np.array(self.n_antennas, dtype=float) / self.n_rx


@dataclass(frozen=True)
class QuasiStaticSolution(_Dims):
    a: np.ndarray = field(default=None)
    a_bar: np.ndarray = field(default=None)
    residual: float = 0.0
    outer_iters: int = 0
    sigma2: float = 1.0


@dataclass(frozen=True)
class FadingSolution(_Dims):
    b: np.ndarray = field(default=None)
    b_bar: np.ndarray = field(default=None)
    zeta: list = field(default=None)
    residual: float = 0.0
    outer_iters: int = 0
    sigma2: float = 1.0


@dataclass(frozen=True)
class VarianceProfileSolution:
    delta: np.ndarray
    t_matrix: np.ndarray
    residual: float
    iters: int
    sigma2: float


def _converged(new, old, tol):
    new = np.asarray(new, dtype=float)
    old = np.asarray(old, dtype=float)
    if new.size == 0:
        return True
    return bool(np.all(np.abs(new - old) <= tol * np.maximum(1.0, np.abs(new))))


def _scaled_residual(lhs, rhs):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if lhs.size == 0:
        return 0.0
    return float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))))


def _matrix_stack(r, name="r"):
    try:
        return np.asarray(r, dtype=complex)
    except ValueError:
        raise DimensionMismatch(f"{name} must hold square matrices of equal size") from None


def _check_noise(sigma2):
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise InvalidNoise(f"noise variance must be positive, got {sigma2!r}")


def _power_vectors(p):
    return [np.asarray(pk, dtype=float).reshape(-1) for pk in p]


def solve_full_stream(p, n_antennas):
    """Substitution values for users transmitting on all their antennas.

    For a user with ``n_k == N_k`` the precoder is a full unitary matrix and
    drops out of ``B_N`` when ``P_k = p_k I``. The valid fixed-point branch
    is then ``a_bar_k = p_k`` (equivalently ``b_bar_k = p_k``).

    Returns
    -------
    dict
        ``{k: p_k}`` for every full-stream user ``k``.

    Raises
    ------
    UnsupportedFullStream
        If a full-stream user has unequal power entries.
    """
    out = {}
    for k, (pk, nk) in enumerate(zip(_power_vectors(p), n_antennas)):
        if pk.size != nk or nk == 0:
            continue
        if np.ptp(pk) > 1e-12 * max(1.0, float(np.max(np.abs(pk)))):
            raise UnsupportedFullStream(
                f"user {k} uses all {nk} antennas with non-uniform powers; "
                "only P_k = p_k I is supported when n_k = N_k"
            )
        out[k] = float(pk[0])
    return out


def _dims(n_rx, n_antennas, p, allow_full_stream):
    n_antennas = tuple(int(m) for m in n_antennas)
    n_streams = tuple(pk.size for pk in p)
    if len(n_antennas) != len(p):
        raise DimensionMismatch("one power vector per user is required")
    for k, (n, m) in enumerate(zip(n_streams, n_antennas)):
        if m < 1:
            raise InvalidLoadFactor(f"user {k} has no transmit antennas")
        if n > m or (n == m and not allow_full_stream):
            raise InvalidLoadFactor(f"user {k}: n_k={n} must be below N_k={m}")
        if np.any(p[k] < 0):
            raise DimensionMismatch(f"user {k} has negative power entries")
    fixed = solve_full_stream(p, n_antennas) if allow_full_stream else {}
    full = tuple(k in fixed for k in range(len(p)))
    return _Dims(int(n_rx), n_antennas, n_streams, full), fixed


class _PowerEquation:
    """Solver for ``x = (1/N) sum_l p_l / (c_bar - a x + a p_l)`` in ``x``.

    The iteration from ``x = 0`` increases monotonically to the unique root
    in ``[0, c c_bar / a)``; its contraction factor is at most ``c``.
    Powers are grouped by value, which keeps the loop cheap for the usual
    ``P = p I`` case.
    """

    def __init__(self, p, n_rx, c_bar):
        groups = Counter(float(v) for v in p)
        self.values = [v for v in groups]
        self.weights = [groups[v] / n_rx for v in self.values]
        self.c_bar = float(c_bar)

    def rhs(self, a, x):
        cb = self.c_bar
        return sum(w * v / (cb - a * x + a * v) for v, w in zip(self.values, self.weights))

    def solve(self, a, tol, max_iter, x0=0.0):
        a = float(a)
        x = float(x0)
        for it in range(1, max_iter + 1):
            x_new = self.rhs(a, x)
            if abs(x_new - x) <= tol * max(1.0, abs(x_new)):
                return x_new, it
            x = x_new
        raise NonConvergence(f"power equation did not converge in {max_iter} iterations (a={a:.6g})")


def _check_full_stream_rank(r_stack, dims):
    # a_k a_bar_k < c_bar_k relies on rank R_k <= N_k, automatic for R_k = H_k H_k^H
    for k, full in enumerate(dims.full_stream):
        if not full:
            continue
        w = np.linalg.eigvalsh(r_stack[k])
        rank = int(np.sum(w > RANK_TOL * max(w[-1], 0.0)))
        if rank > dims.n_antennas[k]:
            raise DimensionMismatch(
                f"user {k}: full-stream user needs rank R_k <= N_k={dims.n_antennas[k]}, "
                f"got rank {rank}")


def _check_range(prod, dims, label):
    bound = dims.c * dims.c_bar
    bound = np.where(np.array(dims.full_stream), dims.c_bar, bound)
    excess = prod - bound
    if np.any(excess > BOUNDARY_SLACK * np.maximum(1.0, bound)):
        k = int(np.argmax(excess))
        raise NonConvergence(f"{label}: range constraint violated for user {k}")


# ---------------------------------------------------------------------------
# quasi-static system
# ---------------------------------------------------------------------------

def _qs_a_update(r_stack, a_bar, sigma2):
    n = r_stack.shape[1]
    m = np.einsum("k,kij->ij", a_bar, r_stack) + sigma2 * np.eye(n)
    return trace_of_products(r_stack, inv_hpd(m)) / n


def quasi_static_equations(r, p, a, a_bar, sigma2, n_antennas):
    """Evaluate the right-hand sides of the quasi-static system.

    Returns ``(a_rhs, a_bar_rhs)`` for the given candidate values, so that a
    solution satisfies ``a == a_rhs`` and ``a_bar == a_bar_rhs``.
    """
    r_stack = _matrix_stack(r)
    n = r_stack.shape[1]
    p = _power_vectors(p)
    a = np.asarray(a, dtype=float)
    a_bar = np.asarray(a_bar, dtype=float)
    a_rhs = _qs_a_update(r_stack, a_bar, sigma2)
    cb = np.asarray(n_antennas, dtype=float) / n
    ab_rhs = np.array(
        [np.sum(pk / (cb[k] - a[k] * a_bar[k] + a[k] * pk)) / n for k, pk in enumerate(p)]
    )
    return a_rhs, ab_rhs


def solve_quasi_static(r, p, n_antennas, sigma2, cfg=DEFAULT_CONFIG, init=None,
                       allow_full_stream=True):
    """Solve the quasi-static fundamental equations.

    Parameters
    ----------
    r : sequence of (N, N) arrays
        Gram matrices ``R_k = H_k H_k^H``.
    p : sequence of 1-D arrays
        Diagonal power loadings; ``len(p[k])`` is ``n_k``.
    n_antennas : sequence of int
        Transmit antenna counts ``N_k``.
    sigma2 : float
        Noise variance.
    init : array_like, optional
        Starting value of ``a``; defaults to zeros.
    allow_full_stream : bool
        Accept ``n_k == N_k`` (with ``P_k = p_k I``) by fixing
        ``a_bar_k = p_k``. When False such users raise `InvalidLoadFactor`.

    Returns
    -------
    QuasiStaticSolution
    """
    _check_noise(sigma2)
    p = _power_vectors(p)
    r_stack = _matrix_stack(r)
    if r_stack.ndim != 3 or r_stack.shape[0] != len(p) or r_stack.shape[1] != r_stack.shape[2]:
        raise DimensionMismatch("r must be a list of K square matrices of equal size")
    n = r_stack.shape[1]
    dims, fixed = _dims(n, n_antennas, p, allow_full_stream)
    _check_full_stream_rank(r_stack, dims)
    cb = dims.c_bar
    eqs = [_PowerEquation(pk, n, cb[k]) for k, pk in enumerate(p)]
    n_users = len(p)

    def a_bar_of(a):
        out = np.empty(n_users)
        for k in range(n_users):
            if k in fixed:
                out[k] = fixed[k]
            else:
                out[k], _ = eqs[k].solve(a[k], cfg.tol, cfg.max_inner)
        return out

    a = np.zeros(n_users) if init is None else np.array(init, dtype=float)
    a_bar = a_bar_of(a)
    for t in range(1, cfg.max_outer + 1):
        a_new = _qs_a_update(r_stack, a_bar, sigma2)
        a_bar_new = a_bar_of(a_new)
        done = _converged(np.r_[a_new, a_bar_new], np.r_[a, a_bar], cfg.tol)
        a, a_bar = a_new, a_bar_new
        if done:
            break
    else:
        raise NonConvergence(f"quasi-static system did not converge in {cfg.max_outer} outer iterations")

    a_rhs, ab_rhs = quasi_static_equations(r_stack, p, a, a_bar, sigma2, dims.n_antennas)
    residual = max(_scaled_residual(a, a_rhs), _scaled_residual(a_bar, ab_rhs))
    _check_range(a * a_bar, dims, "quasi-static")
    return QuasiStaticSolution(
        dims.n_rx, dims.n_antennas, dims.n_streams, dims.full_stream,
        a=a, a_bar=a_bar, residual=residual, outer_iters=t, sigma2=float(sigma2),
    )


def solve_quasi_static_iid(r, p, n_antennas, sigma2, cfg=DEFAULT_CONFIG, init=None):
    """Fundamental equations for precoders with i.i.d. entries of variance ``1/N``.

    Same structure as `solve_quasi_static` without the ``-a_k a_bar_k``
    correction: ``a_bar_k = (1/N) sum_l p_kl / (a_k p_kl + 1)``, with the
    power vectors implicitly zero-padded to length ``N``.
    """
    _check_noise(sigma2)
    p = _power_vectors(p)
    r_stack = _matrix_stack(r)
    if r_stack.ndim != 3 or r_stack.shape[0] != len(p):
        raise DimensionMismatch("r must be a list of K square matrices")
    n = r_stack.shape[1]
    dims = _Dims(n, tuple(int(m) for m in n_antennas), tuple(pk.size for pk in p),
                 (False,) * len(p))

    def a_bar_of(a):
        return np.array([np.sum(pk / (a[k] * pk + 1.0)) / n for k, pk in enumerate(p)])

    a = np.zeros(len(p)) if init is None else np.array(init, dtype=float)
    a_bar = a_bar_of(a)
    for t in range(1, cfg.max_outer + 1):
        a_new = _qs_a_update(r_stack, a_bar, sigma2)
        a_bar_new = a_bar_of(a_new)
        done = _converged(np.r_[a_new, a_bar_new], np.r_[a, a_bar], cfg.tol)
        a, a_bar = a_new, a_bar_new
        if done:
            break
    else:
        raise NonConvergence(f"i.i.d. system did not converge in {cfg.max_outer} outer iterations")
    a_rhs = _qs_a_update(r_stack, a_bar, sigma2)
    residual = max(_scaled_residual(a, a_rhs), _scaled_residual(a_bar, a_bar_of(a)))
    return QuasiStaticSolution(
        dims.n_rx, dims.n_antennas, dims.n_streams, dims.full_stream,
        a=a, a_bar=a_bar, residual=residual, outer_iters=t, sigma2=float(sigma2),
    )


# ---------------------------------------------------------------------------
# variance-profile and fading systems
# ---------------------------------------------------------------------------

class _Profile:
    """Stack of ``R_m`` laid out for the variance-profile iteration.

    ``tr(R_m T)`` for all ``m`` is one matrix-vector product against the
    flattened stack, which keeps the per-step cost low for the small
    matrices used here.
    """

    def __init__(self, stack, sigma2):
        self.n = stack.shape[1]
        self.flat = stack.reshape(stack.shape[0], -1)
        self.shift = sigma2 * np.eye(self.n)

    def resolvent(self, weights, zeta):
        coef = weights / (1.0 + weights * zeta) / self.n
        m = (coef @ self.flat).reshape(self.n, self.n) + self.shift
        t_mat = np.linalg.inv(m)
        return 0.5 * (t_mat + t_mat.conj().T)

    def traces(self, t_mat):
        return (self.flat @ t_mat.T.ravel()).real / self.n

    def iterate(self, weights, tol, max_iter, zeta0):
        """Iterate ``zeta_m = (1/N) tr R_m (sum_m' w_m' R_m' / (N (1 + w_m' zeta_m')) + sigma2 I)^-1``."""
        zeta = zeta0
        for it in range(1, max_iter + 1):
            t_mat = self.resolvent(weights, zeta)
            zeta_new = self.traces(t_mat)
            if np.all(np.abs(zeta_new - zeta) <= tol * np.maximum(1.0, np.abs(zeta_new))):
                return zeta_new, t_mat, it
            zeta = zeta_new
        raise NonConvergence(f"variance-profile iteration did not converge in {max_iter} iterations")


def solve_variance_profile(r, sigma2, cfg=DEFAULT_CONFIG):
    """Deterministic equivalent for ``X X^H`` with column covariances ``R_j / N``.

    Solves ``delta_j = (1/N) tr R_j T`` with
    ``T = ((1/N) sum_j R_j / (1 + delta_j) + sigma2 I)^-1``, starting from
    ``delta_j = 1 / sigma2``.

    Parameters
    ----------
    r : sequence of n (N, N) arrays
    sigma2 : float

    Returns
    -------
    VarianceProfileSolution
    """
    _check_noise(sigma2)
    stack = _matrix_stack(r)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise DimensionMismatch("r must be a list of square matrices of equal size")
    prof = _Profile(stack, sigma2)
    ones = np.ones(stack.shape[0])
    delta, _, iters = prof.iterate(ones, cfg.tol, cfg.max_inner,
                                   np.full(stack.shape[0], 1.0 / sigma2))
    # report T and the residual at the returned delta
    t_mat = prof.resolvent(ones, delta)
    rhs = prof.traces(t_mat)
    return VarianceProfileSolution(delta=delta, t_matrix=t_mat,
                                   residual=_scaled_residual(delta, rhs), iters=iters,
                                   sigma2=float(sigma2))


def _flatten_correlations(r):
    users = [np.asarray(rk, dtype=complex).reshape(-1, *np.shape(rk)[-2:]) if len(rk) else None
             for rk in r]
    shapes = {u.shape[1:] for u in users if u is not None}
    if len(shapes) != 1:
        raise DimensionMismatch("all R_kj must be square matrices of the same size")
    (n, n2), = shapes
    if n != n2:
        raise DimensionMismatch("R_kj must be square")
    stack = np.concatenate([u for u in users if u is not None])
    owner = np.concatenate([np.full(len(u), k) for k, u in enumerate(users) if u is not None])
    return stack, owner.astype(int), n


def fading_equations(r, p, b, b_bar, zeta, sigma2):
    """Right-hand sides ``(b_rhs, b_bar_rhs, zeta_rhs)`` of the fading system."""
    p = _power_vectors(p)
    stack, owner, n = _flatten_correlations(r)
    b = np.asarray(b, dtype=float)
    b_bar = np.asarray(b_bar, dtype=float)
    zflat = np.concatenate([np.asarray(z, dtype=float) for z in zeta])
    n_ant = np.bincount(owner, minlength=len(p))
    cb = n_ant / n
    w = b_bar[owner]
    prof = _Profile(stack, sigma2)
    z_rhs = prof.traces(prof.resolvent(w, zflat))
    b_rhs = np.bincount(owner, weights=zflat / (1.0 + w * zflat), minlength=len(p)) / n
    bb_rhs = np.array([np.sum(pk / (cb[k] - b[k] * b_bar[k] + b[k] * pk)) / n
                       for k, pk in enumerate(p)])
    return b_rhs, bb_rhs, np.split(z_rhs, np.cumsum(n_ant)[:-1])


def solve_fading(r, p, sigma2, cfg=DEFAULT_CONFIG, init=None, init_bar=None,
                 allow_full_stream=True):
    """Solve the fading-channel fundamental equations.

    Parameters
    ----------
    r : ragged sequence
        ``r[k]`` holds the ``N_k`` column correlations ``R_kj`` of user ``k``.
    p : sequence of 1-D arrays
        Diagonal power loadings.
    sigma2 : float
    init, init_bar : array_like, optional
        Starting values of ``b`` and ``b_bar`` (zeros by default).

    Notes
    -----
    The outer step follows the printed lag structure: ``b_bar^(t)`` is
    computed from ``b^(t-1)``, while ``zeta^(t)`` and ``b^(t)`` use
    ``b_bar^(t-1)``. With ``b^(0) = 0`` and ``b_bar^(0) = 0`` this
    interleaves an increasing and a decreasing sequence that bracket the
    fixed point, so the successive-change test is a two-sided guarantee.
    Each inner loop restarts from the printed value (``1 / sigma2`` for
    ``zeta``, 0 for ``b_bar``) when ``cfg.warm_start`` is False. By default
    it starts from the previous outer iterate instead; the inner maps have a
    unique fixed point for fixed outer values, so only the inner iteration
    count changes.

    Returns
    -------
    FadingSolution
    """
    _check_noise(sigma2)
    p = _power_vectors(p)
    if len(r) != len(p):
        raise DimensionMismatch("one correlation list per user is required")
    stack, owner, n = _flatten_correlations(r)
    n_ant = np.bincount(owner, minlength=len(p))
    dims, fixed = _dims(n, n_ant, p, allow_full_stream)
    cb = dims.c_bar
    eqs = [_PowerEquation(pk, n, cb[k]) for k, pk in enumerate(p)]
    n_users = len(p)
    zeta_start = np.full(stack.shape[0], 1.0 / sigma2)
    prof = _Profile(stack, sigma2)

    def b_bar_of(b, start):
        out = np.empty(n_users)
        for k in range(n_users):
            if k in fixed:
                out[k] = fixed[k]
            else:
                x0 = start[k] if cfg.warm_start else 0.0
                out[k], _ = eqs[k].solve(b[k], cfg.tol, cfg.max_inner, x0)
        return out

    b = np.zeros(n_users) if init is None else np.array(init, dtype=float)
    b_bar = np.zeros(n_users) if init_bar is None else np.array(init_bar, dtype=float)
    for k, v in fixed.items():
        b_bar[k] = v
    zeta = zeta_start
    for t in range(1, cfg.max_outer + 1):
        b_bar_new = b_bar_of(b, b_bar)
        w = b_bar[owner]
        z0 = zeta if cfg.warm_start else zeta_start
        zeta_new, _, _ = prof.iterate(w, cfg.tol, cfg.max_inner, z0)
        b_new = np.bincount(owner, weights=zeta_new / (1.0 + w * zeta_new), minlength=n_users) / n
        done = t > 1 and _converged(np.r_[b_new, b_bar_new, zeta_new],
                                    np.r_[b, b_bar, zeta], cfg.tol)
        b, b_bar, zeta = b_new, b_bar_new, zeta_new
        if done:
            break
    else:
        raise NonConvergence(f"fading system did not converge in {cfg.max_outer} outer iterations")

    zeta_list = np.split(zeta, np.cumsum(n_ant)[:-1])
    b_rhs, bb_rhs, z_rhs = fading_equations(r, p, b, b_bar, zeta_list, sigma2)
    residual = max(_scaled_residual(b, b_rhs), _scaled_residual(b_bar, bb_rhs),
                   _scaled_residual(zeta, np.concatenate(z_rhs)))
    if np.any(zeta < 0):
        raise NonConvergence("negative zeta at the fixed point")
    _check_range(b * b_bar, dims, "fading")
    return FadingSolution(
        dims.n_rx, dims.n_antennas, dims.n_streams, dims.full_stream,
        b=b, b_bar=b_bar, zeta=zeta_list, residual=residual, outer_iters=t,
        sigma2=float(sigma2),
    )
