"""Select the compiled kernel module when importable, else the numpy fallback.

Set ``MCVL_BACKEND=python`` to force the fallback.
"""

import os

from mcvl import _fallback

if os.environ.get("MCVL_BACKEND", "").lower() == "python":
    _impl = _fallback
else:
    try:
        from mcvl import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "compiled" if _impl is not _fallback else "python"

sift_bin = _impl.sift_bin
vlad_aggregate = _impl.vlad_aggregate
sus_indices = _impl.sus_indices
