"""Deterministic equivalents for isometrically precoded MIMO channels.

The solvers compute the fixed points that parameterize large-system
approximations of mutual information and MMSE SINR; `montecarlo` evaluates
the same quantities on sampled channels for comparison.
"""

__version__ = "0.1.0"

from .correlation import JakesSpec, build_linear_array, jakes_correlation
from .errors import InputError, IsobeamError, NumericalError
from .fixed_point import (
    FadingSolution,
    QuasiStaticSolution,
    SolverConfig,
    VarianceProfileSolution,
    solve_fading,
    solve_full_stream,
    solve_quasi_static,
    solve_quasi_static_iid,
    solve_variance_profile,
)
from .metrics import (
    det_mmse_sum_rate,
    det_mutual_info,
    det_mutual_info_fading,
    det_mutual_info_quasi_static,
    det_sinr,
    det_stieltjes,
    det_vn_variance_profile,
)
from .montecarlo import ReplicationStats, run_replications
from .scenarios import (
    ScenarioSpec,
    build_interference_channel,
    build_mac_scenario,
    build_three_cell_sdma,
    rate_with_interference_det,
    realize,
    stream_control_search,
)
