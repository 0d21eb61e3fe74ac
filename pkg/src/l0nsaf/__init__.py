"""Sparse-system subband adaptive filtering with variable step sizes."""

from ._jit import BACKEND
from .engine import (
    FIXED,
    VSS_KNOWN,
    VSS_UNKNOWN,
    AlgoConfig,
    FilterState,
    ResetConfig,
    adapt_step,
)
from .config import load_config, preset
from .filterbank import FilterBank, design_prototype, make_bank, modulate
from .harness import (
    ExperimentResult,
    SignalSpec,
    TrialSpec,
    misalignment_db,
    run_monte_carlo,
    run_trial,
)
from .stream import prepare, run_filter, run_reference

__version__ = "0.1.0"
