"""Spatiotemporally contextualized MLP-Mixer forecasting engine."""

import os

# BLAS thread count must be fixed before numpy loads its backend.
_threads = os.environ.get("NEXUS_THREADS", "1")
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
    os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
