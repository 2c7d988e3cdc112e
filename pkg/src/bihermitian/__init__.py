"""Bi-Hermitian structures on Hopf surfaces from lcK forms and holomorphic Poisson bivectors."""
import os as _os

__version__ = "0.1.0"

# BIHERMITIAN_THREADS caps the BLAS/OpenMP pools; it must be read before numpy loads.
_threads = _os.environ.get("BIHERMITIAN_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
