"""Pick the compiled composition core if it was built, else the numpy fallback.

Set ``KP_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

NAME = "python"
lag_convolve = _pykernels.lag_convolve
dense_compose = _pykernels.dense_compose

if os.environ.get("KP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        NAME = "cython"
        lag_convolve = _ckernels.lag_convolve
        dense_compose = _ckernels.dense_compose
