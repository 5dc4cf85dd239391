"""Kernel back-end selection.

The compiled extension is preferred; the pure numpy twin is used when the
extension is unavailable or when POMH_PURE=1 is set in the environment.
Both expose the same functions with bit-identical results.
"""

from __future__ import annotations

import os

if os.environ.get("POMH_PURE") == "1":
    from pomh._kernels import _pure as _impl

    HAVE_FAST = False
else:
    try:
        from pomh._kernels import _fast as _impl  # type: ignore[no-redef]

        HAVE_FAST = True
    except ImportError:
        from pomh._kernels import _pure as _impl  # type: ignore[no-redef]

        HAVE_FAST = False

IMPL = _impl.IMPL
closing = _impl.closing
close_run_counts = _impl.close_run_counts
grow_forest = _impl.grow_forest
forest_apply = _impl.forest_apply
tree_seed = _impl.tree_seed
