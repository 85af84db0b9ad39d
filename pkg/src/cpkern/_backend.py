"""Pick the compiled kernels when available.

Set ``CPKERN_PURE_PYTHON=1`` to force the numpy implementation.
"""

import os

from . import _pykernels

if os.environ.get("CPKERN_PURE_PYTHON") == "1":
    kernels = _pykernels
    NAME = "python"
else:
    try:
        from . import _ckernels as kernels
        NAME = "cython"
    except ImportError:
        kernels = _pykernels
        NAME = "python"
