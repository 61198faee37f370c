"""Hot-loop kernels with backend selection at import time.

The compiled Cython module is preferred when present; the NumPy fallback is
behaviourally identical. Set COVERLAB_FORCE_FALLBACK=1 to skip the compiled
module (used by the benchmark and the backend-equality tests).
"""

import os

from . import _fallback

if os.environ.get("COVERLAB_FORCE_FALLBACK"):
    _impl = _fallback
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

BACKEND = _impl.BACKEND
mark_intervals = _impl.mark_intervals
runs_from_mask = _impl.runs_from_mask
window_counts = _impl.window_counts

__all__ = ["BACKEND", "mark_intervals", "runs_from_mask", "window_counts"]
