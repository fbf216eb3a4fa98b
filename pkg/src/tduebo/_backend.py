"""Select the compiled kernel backend when available.

Set ``TDUEBO_BACKEND=python`` to force the pure-Python fallback, or
``TDUEBO_BACKEND=compiled`` to make a missing extension an import error.
"""

import os

from . import _pykernels

_choice = os.environ.get("TDUEBO_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        if _choice == "compiled":
            raise
        kernels = _pykernels

BACKEND = "compiled" if kernels is not _pykernels else "python"

MATERN52 = _pykernels.MATERN52
SQEXP = _pykernels.SQEXP
