"""Hot-loop kernels with a compiled core and a pure fallback.

Two operations dominate pipeline runtime at corpus scale: scanning node
class/ancestor strings for rule keywords (detector inner loop) and
area-average downsampling of crops to the classifier input size. Both exist
twice — a Cython extension (``_native``) and a numpy/plain-Python fallback
(``fallback``) with identical semantics. The extension is preferred at
import; set ``PATTERNSCOPE_PURE=1`` to force the fallback. Equivalence is
covered by tests, relative speed by ``benchmarks/bench_kernels.py``.
"""

import os

from . import fallback

if os.environ.get("PATTERNSCOPE_PURE"):
    _impl = fallback
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = fallback

BACKEND = _impl.BACKEND
find_keyword = _impl.find_keyword
match_strings = _impl.match_strings
resize_area_mean = _impl.resize_area_mean


def available_backends():
    """Importable kernel implementations, keyed by backend name."""
    impls = {fallback.BACKEND: fallback}
    try:
        from . import _native
        impls[_native.BACKEND] = _native
    except ImportError:
        pass
    return impls
