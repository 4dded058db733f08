"""Decomposition of transport-dominated snapshot data into low-rank co-moving frames."""

import os as _os

# SHIFTPOD_THREADS caps the BLAS pools; it only takes effect when set before
# numpy is first imported, which holds for the command-line entry point.
_threads = _os.environ.get("SHIFTPOD_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .core import (
    Decomposition,
    FramePath,
    GridSpec,
    ObjectiveReport,
    SnapshotField,
    WeightMask,
    constraint_violation,
    enforce_constraint,
    extend_domain,
    initial_guess,
    project_constraint,
    reconstruct,
    residual,
)
from .shift import ShiftConfig, ShiftError, Transport, shift_apply, shift_roundtrip_error

__version__ = "0.1.0"
