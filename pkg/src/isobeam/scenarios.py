"""Scenario descriptions, their realization, and the composite metrics.

A `ScenarioSpec` is a plain, comparable description (what a scenario file
holds). `realize` turns it into a `Scenario` carrying the matrices the
solvers and the Monte Carlo engine need. The interference channel is
described separately by `InterferenceChannelSpec` and expands into one
`ScenarioSpec` per receiver.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .correlation import JakesSpec, build_linear_array, jakes_correlation
from .ensembles import RngStream, kronecker_reduction, sample_gaussian_matrix
from .errors import (
    DimensionMismatch,
    InputError,
    InvalidLoadFactor,
    IsobeamError,
    NumericalError,
)
from .fixed_point import DEFAULT_CONFIG, solve_fading, solve_quasi_static
from .metrics import det_mmse_sum_rate, det_mutual_info
from .numerics import as_hermitian, hermitian_sqrt

QUASI_STATIC = "quasi_static"
FADING = "fading"


def snr_db_to_sigma2(snr_db):
    return 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0)


# ---------------------------------------------------------------------------
# declarative description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JakesRecord:
    """Uniform angular spread over ``[theta_min, theta_max]`` on a linear array."""

    theta_min: float
    theta_max: float
    spacing: float


@dataclass(frozen=True)
class GaussianChannel:
    """i.i.d. CN(0, variance) channel drawn once from ``RngStream(seed, stream)``.

    ``variance=None`` means ``1 / N_k``.
    """

    seed: int
    stream: int = 0
    variance: float = None


@dataclass(frozen=True)
class UserSpec:
    """One transmitter.

    Exactly one channel description is used, depending on the scenario
    kind: ``h``, ``gram`` or ``gaussian`` for quasi-static scenarios;
    ``correlations`` or the ``receive``/``transmit`` Kronecker pair for
    fading ones. Matrices are tuples of rows; a Kronecker side is a
    `JakesRecord`, a matrix, or ``"identity"``.
    """

    n_antennas: int
    powers: tuple
    role: str = "signal"
    path_loss: float = 1.0
    h: tuple = None
    gram: tuple = None
    gaussian: GaussianChannel = None
    correlations: tuple = None
    receive: object = None
    transmit: object = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    kind: str
    n_rx: int
    users: tuple
    snr_db: tuple = ()

    def __post_init__(self):
        validate_spec(self)


def _check_user_dims(k, u, n_rx):
    if u.n_antennas < 1:
        raise InvalidLoadFactor(f"user {k}: n_antennas must be >= 1")
    n = len(u.powers)
    if n < 1 or n > u.n_antennas:
        raise InvalidLoadFactor(f"user {k}: need 1 <= n_k <= N_k, got n_k={n}, N_k={u.n_antennas}")
    if any(p < 0 for p in u.powers):
        raise InputError(f"user {k}: powers must be nonnegative")
    if n == u.n_antennas and max(u.powers) - min(u.powers) > 1e-12 * max(1.0, max(u.powers)):
        raise InvalidLoadFactor(
            f"user {k}: n_k = N_k requires equal powers (P_k = p I); other loadings "
            "have no deterministic equivalent"
        )
    if u.role not in ("signal", "interference"):
        raise InputError(f"user {k}: role must be 'signal' or 'interference'")
    if not u.path_loss >= 0:
        raise InputError(f"user {k}: path_loss must be nonnegative")


def validate_user(k, u, kind, n_rx):
    """Check one user of a ``kind`` scenario with ``n_rx`` receive antennas."""
    _check_user_dims(k, u, n_rx)
    if kind == QUASI_STATIC:
        given = [x is not None for x in (u.h, u.gram, u.gaussian)]
        if sum(given) != 1:
            raise InputError(f"user {k}: give exactly one of h, gram, gaussian")
        if u.h is not None and np.shape(u.h) != (n_rx, u.n_antennas):
            raise DimensionMismatch(f"user {k}: h must be {n_rx} x {u.n_antennas}")
        if u.gram is not None and np.shape(u.gram) != (n_rx, n_rx):
            raise DimensionMismatch(f"user {k}: gram must be {n_rx} x {n_rx}")
        return
    kron = u.receive is not None or u.transmit is not None
    if (u.correlations is not None) == kron:
        raise InputError(f"user {k}: give either correlations or receive/transmit")
    if u.correlations is not None and (
            len(u.correlations) != u.n_antennas
            or any(np.shape(c) != (n_rx, n_rx) for c in u.correlations)):
        raise DimensionMismatch(f"user {k}: need {u.n_antennas} correlations of size {n_rx} x {n_rx}")
    for side, val, size in (("receive", u.receive, n_rx), ("transmit", u.transmit, u.n_antennas)):
        if kron and not (val is None or val == "identity" or isinstance(val, JakesRecord)
                         or np.shape(val) == (size, size)):
            raise DimensionMismatch(f"user {k}: {side} matrix must be {size} x {size}")


def validate_spec(spec):
    if spec.kind not in (QUASI_STATIC, FADING):
        raise InputError(f"unknown scenario kind {spec.kind!r}")
    if spec.n_rx < 1:
        raise InputError("n_rx must be >= 1")
    if not spec.users:
        raise InputError("a scenario needs at least one user")
    for k, u in enumerate(spec.users):
        validate_user(k, u, spec.kind, spec.n_rx)
    if not any(u.role == "signal" for u in spec.users):
        raise InputError("at least one user must have role 'signal'")


# ---------------------------------------------------------------------------
# realized scenario
# ---------------------------------------------------------------------------

def _matrix(rows):
    return np.array(rows, dtype=complex)


def _side_matrix(val, size):
    if val is None or val == "identity":
        return np.eye(size, dtype=complex)
    if isinstance(val, JakesRecord):
        return jakes_correlation(JakesSpec(val.theta_min, val.theta_max,
                                           build_linear_array(size, val.spacing)))
    return as_hermitian(_matrix(val), psd=True)


def _gram_factor(gram, n_antennas):
    """An ``N x N_k`` matrix ``H`` with ``H H^H = gram``.

    Under a Haar precoder only ``H H^H`` matters, so this stands in for the
    channel when a quasi-static user is given by its Gram matrix.
    """
    g = as_hermitian(gram, psd=True)
    w, v = np.linalg.eigh(g)
    w = np.clip(w, 0.0, None)
    n = g.shape[0]
    keep = min(n, n_antennas)
    if n_antennas < n and np.any(w[: n - n_antennas] > 1e-10 * max(1.0, w[-1])):
        raise DimensionMismatch(f"gram has rank above N_k={n_antennas}")
    h = np.zeros((n, n_antennas), dtype=complex)
    h[:, :keep] = v[:, n - keep:] * np.sqrt(w[n - keep:])
    return h


@dataclass
class Scenario:
    """Matrices of a scenario, ready for the solvers and the sampler."""

    name: str
    kind: str
    n_rx: int
    n_antennas: tuple
    powers: list
    signal: tuple
    interference: tuple
    sigma2_grid: list
    snr_db: tuple
    h: list = None                 # quasi-static channels
    correlations: list = None      # fading: list of (N_k, N, N) stacks
    _kron: list = field(default=None, repr=False)   # fading: (R^1/2 scaled, T^1/2) or None

    @cached_property
    def grams(self):
        return [hk @ hk.conj().T for hk in self.h]

    @cached_property
    def _column_roots(self):
        return [None if kr is not None else np.array([hermitian_sqrt(c) for c in corr])
                for kr, corr in zip(self._kron, self.correlations)]

    def sample_channels(self, g):
        """Channels of one replication (fixed for quasi-static scenarios)."""
        if self.kind == QUASI_STATIC:
            return self.h
        out = []
        for k, m in enumerate(self.n_antennas):
            z = sample_gaussian_matrix(self.n_rx, m, 1.0 / self.n_rx, g)
            if self._kron[k] is not None:
                r_half, t_half = self._kron[k]
                out.append(r_half @ z @ t_half)
            else:
                out.append(np.einsum("jab,bj->aj", self._column_roots[k], z))
        return out

    def channel_inputs(self, users=None):
        """Solver inputs ``(r, p, n_antennas)`` restricted to ``users``."""
        users = range(len(self.powers)) if users is None else list(users)
        if self.kind == QUASI_STATIC:
            r = [self.grams[k] for k in users]
        else:
            r = [self.correlations[k] for k in users]
        return r, [self.powers[k] for k in users], [self.n_antennas[k] for k in users]

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_column_roots", None)
        state.pop("grams", None)
        return state


def realize(spec):
    """Build the matrices of ``spec``; a `Scenario` is returned unchanged."""
    if isinstance(spec, Scenario):
        return spec
    n = spec.n_rx
    powers = [np.array(u.powers, dtype=float) for u in spec.users]
    n_ant = tuple(int(u.n_antennas) for u in spec.users)
    signal = tuple(k for k, u in enumerate(spec.users) if u.role == "signal")
    interference = tuple(k for k, u in enumerate(spec.users) if u.role == "interference")
    scn = Scenario(spec.name, spec.kind, n, n_ant, powers, signal, interference,
                   [float(s) for s in snr_db_to_sigma2(spec.snr_db)], tuple(spec.snr_db))
    scale = [np.sqrt(u.path_loss) for u in spec.users]
    if spec.kind == QUASI_STATIC:
        h = []
        for k, u in enumerate(spec.users):
            if u.h is not None:
                hk = _matrix(u.h)
            elif u.gram is not None:
                hk = _gram_factor(_matrix(u.gram), u.n_antennas)
            else:
                gc = u.gaussian
                var = 1.0 / u.n_antennas if gc.variance is None else gc.variance
                hk = sample_gaussian_matrix(n, u.n_antennas, var, RngStream(gc.seed, gc.stream))
            h.append(scale[k] * hk)
        scn.h = h
    else:
        corr, kron = [], []
        for k, u in enumerate(spec.users):
            if u.correlations is not None:
                corr.append(u.path_loss * np.array([as_hermitian(_matrix(c), psd=True)
                                                    for c in u.correlations]))
                kron.append(None)
            else:
                r = _side_matrix(u.receive, n)
                t = _side_matrix(u.transmit, u.n_antennas)
                corr.append(u.path_loss * np.array(kronecker_reduction(r, t)))
                kron.append((scale[k] * hermitian_sqrt(r), hermitian_sqrt(t)))
        scn.correlations, scn._kron = corr, kron
    return scn


# ---------------------------------------------------------------------------
# deterministic evaluation
# ---------------------------------------------------------------------------

def solve(scenario, sigma2, users=None, cfg=DEFAULT_CONFIG):
    """Fixed point of the scenario restricted to ``users`` (default: all)."""
    scn = realize(scenario)
    r, p, n_ant = scn.channel_inputs(users)
    if scn.kind == QUASI_STATIC:
        return solve_quasi_static(r, p, n_ant, sigma2, cfg)
    return solve_fading(r, p, sigma2, cfg)


@dataclass(frozen=True)
class DetResult:
    mutual_info: float
    mmse_sum_rate: float
    solution: object
    interference_solution: object = None


def rate_with_interference_det(scenario, sigma2, cfg=DEFAULT_CONFIG):
    """Deterministic rates of the signal users with interference treated as noise.

    ``mutual_info`` is ``I(all users) - I(interferers only)``; the second
    term is zero without interferers. ``mmse_sum_rate`` sums the MMSE rates
    of the signal users in the presence of all users.
    """
    scn = realize(scenario)
    sol = solve(scn, sigma2, cfg=cfg)
    r, p, _ = scn.channel_inputs()
    mi = det_mutual_info(sol, r, p)
    sol_int = None
    if scn.interference:
        sol_int = solve(scn, sigma2, users=scn.interference, cfg=cfg)
        ri, pi_, _ = scn.channel_inputs(scn.interference)
        mi -= det_mutual_info(sol_int, ri, pi_)
    rate = det_mmse_sum_rate(sol, p, users=scn.signal)
    return DetResult(mi, rate, sol, sol_int)


def _per_user_defaults(value, count, name):
    if np.ndim(value) == 0:
        return [value] * count
    if len(value) != count:
        raise DimensionMismatch(f"{name} needs {count} entries")
    return list(value)


def build_three_cell_sdma(alpha=0.5, n_streams=4, n_rx=16, n_antennas=8, seed=2011,
                          snr_db=tuple(range(-5, 31, 5))):
    """Central cell (user index 1) between two interfering cells.

    Every channel is i.i.d. CN(0, 1/N_i), drawn once from ``seed`` (streams
    0, 1, 2). The neighbouring cells are attenuated by ``alpha`` in power.
    Each base station sends ``n_streams`` unit-power streams.
    """
    if not 1 <= n_streams <= n_antennas:
        raise InvalidLoadFactor("need 1 <= n_streams <= n_antennas")
    users = tuple(
        UserSpec(n_antennas=n_antennas, powers=(1.0,) * n_streams,
                 role="signal" if k == 1 else "interference",
                 path_loss=1.0 if k == 1 else float(alpha),
                 gaussian=GaussianChannel(seed=int(seed), stream=k))
        for k in range(3)
    )
    return ScenarioSpec(f"three_cell_n{n_streams}", QUASI_STATIC, n_rx, users, tuple(snr_db))


@dataclass(frozen=True)
class MacUser:
    n_antennas: int
    n_streams: int
    transmit: JakesRecord
    receive: JakesRecord
    path_loss: float


def table1_users():
    pi = np.pi
    return (
        MacUser(10, 8, JakesRecord(0.0, pi / 2, 4.0), JakesRecord(-pi / 4, 0.0, 8.0), 1.0),
        MacUser(5, 4, JakesRecord(-pi / 4, pi / 4, 4.0), JakesRecord(0.0, pi / 3, 8.0), 0.5),
        MacUser(5, 4, JakesRecord(-pi / 2, 0.0, 4.0), JakesRecord(-pi / 3, pi / 3, 8.0), 0.5),
    )


def build_mac_scenario(params=None, n_rx=10, snr_db=tuple(range(-5, 31, 5)), name="mac_table1"):
    """Multiple-access channel with Kronecker Jakes correlation and ``P_k = I / n_k``."""
    params = table1_users() if params is None else params
    users = tuple(
        UserSpec(n_antennas=u.n_antennas, powers=(1.0 / u.n_streams,) * u.n_streams,
                 path_loss=u.path_loss, receive=u.receive, transmit=u.transmit)
        for u in params
    )
    return ScenarioSpec(name, FADING, n_rx, users, tuple(snr_db))


@dataclass(frozen=True)
class InterferenceChannelSpec:
    """Two transmitter-receiver pairs; ``receive[q][k]`` is the link from k to q."""

    name: str
    n_rx: int
    n_antennas: tuple
    transmit: tuple
    receive: tuple
    snr_db: tuple = ()

    def __post_init__(self):
        if len(self.n_antennas) != 2 or len(self.transmit) != 2:
            raise InputError("the interference channel has exactly two transmitters")
        if len(self.receive) != 2 or any(len(row) != 2 for row in self.receive):
            raise InputError("receive correlations must form a 2 x 2 table")
        if any(m < 1 for m in self.n_antennas):
            raise InvalidLoadFactor("transmit antenna counts must be >= 1")


def table2_params(snr_db=(0.0, 40.0)):
    pi = np.pi
    return InterferenceChannelSpec(
        name="ic_table2",
        n_rx=10,
        n_antennas=(10, 10),
        transmit=(JakesRecord(0.0, pi / 2, 4.0), JakesRecord(-pi / 2, 0.0, 4.0)),
        receive=((JakesRecord(-pi / 4, 0.0, 4.0), JakesRecord(0.0, pi / 4, 4.0)),
                 (JakesRecord(-pi / 3, 0.0, 4.0), JakesRecord(0.0, pi / 3, 4.0))),
        snr_db=tuple(snr_db),
    )


def stream_powers(n_antennas, n_streams):
    """``N_k / n_k`` on each of the ``n_k`` active streams."""
    if not 1 <= n_streams <= n_antennas:
        raise InvalidLoadFactor(f"need 1 <= n <= {n_antennas}, got {n_streams}")
    return (n_antennas / n_streams,) * n_streams


def build_interference_channel(params, n1, n2):
    """The two receiver-side scenarios for stream counts ``(n1, n2)``."""
    counts = (n1, n2)
    out = []
    for q in range(2):
        users = tuple(
            UserSpec(n_antennas=params.n_antennas[k],
                     powers=stream_powers(params.n_antennas[k], counts[k]),
                     role="signal" if k == q else "interference",
                     receive=params.receive[q][k], transmit=params.transmit[k])
            for k in range(2)
        )
        out.append(ScenarioSpec(f"{params.name}_rx{q + 1}", FADING, params.n_rx, users,
                                params.snr_db))
    return tuple(out)


@dataclass(frozen=True)
class StreamSearchResult:
    best: tuple
    objective: float
    table: np.ndarray
    failures: tuple = ()


class _ICModel:
    """Cached matrices of an interference channel for repeated grid solves."""

    def __init__(self, params):
        self.params = params
        self.t = [_side_matrix(params.transmit[k], params.n_antennas[k]) for k in range(2)]
        self.r = [[_side_matrix(params.receive[q][k], params.n_rx) for k in range(2)]
                  for q in range(2)]
        self.corr = [[np.array(kronecker_reduction(self.r[q][k], self.t[k])) for k in range(2)]
                     for q in range(2)]

    def mutual_info(self, q, users, counts, sigma2, cfg):
        r = [self.corr[q][k] for k in users]
        p = [np.array(stream_powers(self.params.n_antennas[k], counts[k])) for k in users]
        sol = solve_fading(r, p, sigma2, cfg)
        return det_mutual_info(sol, r, p)


def _grid_cell(args):
    model, n1, n2, sigma2, cfg, interf = args
    total = 0.0
    for q in range(2):
        other = 1 - q
        total += model.mutual_info(q, (0, 1), (n1, n2), sigma2, cfg) - interf[q][(n1, n2)[other]]
    return total


def stream_control_search(params, sigma2, cfg=DEFAULT_CONFIG, workers=1):
    """Exhaustive search of ``I_1 + I_2`` over all stream pairs.

    ``table[n1 - 1, n2 - 1]`` holds the deterministic sum rate (NaN where a
    cell failed). The best pair is the lexicographically smallest maximizer.
    """
    model = _ICModel(params)
    m1, m2 = params.n_antennas
    failures = []
    # interference-only terms depend on a single stream count
    interf = [{}, {}]
    for q in range(2):
        other = 1 - q
        for n in range(1, params.n_antennas[other] + 1):
            counts = [1, 1]
            counts[other] = n
            try:
                interf[q][n] = model.mutual_info(q, (other,), counts, sigma2, cfg)
            except IsobeamError as exc:
                interf[q][n] = float("nan")
                failures.append(((q + 1, n), str(exc)))
    cells = [(n1, n2) for n1 in range(1, m1 + 1) for n2 in range(1, m2 + 1)]
    jobs = [(model, n1, n2, sigma2, cfg, interf) for n1, n2 in cells]
    table = np.full((m1, m2), np.nan)

    def record(cell, fn):
        try:
            table[cell[0] - 1, cell[1] - 1] = fn()
        except IsobeamError as exc:
            failures.append((cell, str(exc)))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_grid_cell, j) for j in jobs]
            for cell, fut in zip(cells, futures):
                record(cell, fut.result)
    else:
        for cell, job in zip(cells, jobs):
            record(cell, lambda job=job: _grid_cell(job))
    if np.all(np.isnan(table)):
        raise NumericalError(f"every grid cell failed; first: {failures[0][1]}")
    best_val = np.nanmax(table)
    # row-major scan gives the lexicographically smallest maximizer
    flat = int(np.flatnonzero(table == best_val)[0])
    best = (flat // m2 + 1, flat % m2 + 1)
    return StreamSearchResult(best, float(best_val), table, tuple(failures))
