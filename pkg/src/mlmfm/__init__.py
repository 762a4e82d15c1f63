"""Global/local matrix factor model for grouped matrix time series: estimation, simulation and evaluation."""

from .errors import (
    ConditioningWarning,
    ConfigError,
    DegenerateSeriesError,
    DegenerateSpectrumError,
    IngestError,
    MLMFMError,
    NonFiniteError,
    PanelError,
    RankDeficientError,
)
from .global_est import compute_W1, compute_W2, estimate_rank, fit_global
from .local_est import compute_M, fit_local, project
from .metrics import (
    correlation_summary,
    matrix_factor_parameter_count,
    parameter_count,
    rss_tss,
    signal_distance,
    subspace_distance,
)
from .model import apply_loadings, fit
from .numerics import sym_eig, thin_qr, varimax
from .signal import recover_signals
from .simulate import SimConfig, simulate
from .types import FactorDims, FitResult, GroupedPanel, GroupSeries, LoadingSet, validate_panel

__version__ = "0.1.0"
