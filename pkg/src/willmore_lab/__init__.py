"""Willmore-type energies, conservation laws and flows for sampled surfaces.

Set ``WILLMORE_LAB_THREADS`` before the first import to cap the number of BLAS
and FFT worker threads.
"""

from __future__ import annotations

import os as _os

__version__ = "0.1.0"

_threads = _os.environ.get("WILLMORE_LAB_THREADS")
if _threads is not None and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .ambient import AmbientManifold, make_ambient  # noqa: E402
from .immersion import Immersion, builtin, energies, load_immersion  # noqa: E402

__all__ = ["AmbientManifold", "Immersion", "builtin", "energies", "load_immersion", "make_ambient", "__version__"]
