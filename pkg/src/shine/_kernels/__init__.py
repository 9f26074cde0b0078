"""Hot geometry kernels with a compiled core and a pure-Python fallback.

The pairwise-IoU and greedy-matching loops dominate evaluation runtime on
large detection sets, so they exist twice: ``_fast`` (Cython, built by
setup.py when a compiler is available) and ``pure`` (no dependencies).
The backend is picked once at import; set ``SHINE_PURE_KERNELS=1`` to
force the fallback.  Both backends produce bit-identical results - the
test suite asserts exact float equality between them.

See ``benchmarks/bench_kernels.py`` for a side-by-side timing comparison.
"""

from __future__ import annotations

import os

if os.environ.get("SHINE_PURE_KERNELS"):
    from . import pure as _impl
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import pure as _impl  # type: ignore[no-redef]

BACKEND: str = _impl.BACKEND
iou_matrix = _impl.iou_matrix
greedy_match = _impl.greedy_match

__all__ = ["BACKEND", "iou_matrix", "greedy_match"]
