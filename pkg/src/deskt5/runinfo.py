"""Reproducibility metadata recorded in run manifests."""
from __future__ import annotations

import os
import platform

import numpy as np


def blas_threads() -> int:
    try:
        from threadpoolctl import threadpool_info
    except ImportError:  # pragma: no cover
        return int(os.environ.get("OMP_NUM_THREADS", os.cpu_count() or 1))
    counts = [p.get("num_threads", 1) for p in threadpool_info() if p.get("user_api") == "blas"]
    return max(counts) if counts else 1


def environment() -> dict:
    return {
        "threads": blas_threads(),
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
