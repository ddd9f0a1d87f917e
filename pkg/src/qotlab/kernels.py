"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``QOTLAB_PURE=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels as pure

compiled = None
if os.environ.get("QOTLAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else pure
BACKEND = "cython" if compiled is not None else "numpy"

philox_blocks = active.philox_blocks
toeplitz_hash = active.toeplitz_hash
toeplitz_table = active.toeplitz_table
bb84_measure = active.bb84_measure
first_check_failure = active.first_check_failure
apply_1q = active.apply_1q
apply_2q = active.apply_2q
pick_rows = active.pick_rows
