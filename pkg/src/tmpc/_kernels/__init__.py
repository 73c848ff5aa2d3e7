"""Hot kernels with a compiled implementation and a pure-Python fallback.

The compiled module is used when importable. Setting ``TMPC_PURE_PYTHON=1``
forces the fallback, which is what the kernel benchmark and the
cross-implementation tests rely on.
"""

import os

from . import _pykernels

if os.environ.get("TMPC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef, attr-defined]
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

fnv1a64 = _impl.fnv1a64
repeat_count = _impl.repeat_count
find_bad_bool = _impl.find_bad_bool
pack_header = _impl.pack_header
unpack_header = _impl.unpack_header
HEADER_SIZE = _impl.HEADER_SIZE
copy_into = _impl.copy_into
ReceiveStatus = _impl.ReceiveStatus
CommunicatorCore = _impl.CommunicatorCore


def implementations():
    """Return ``{name: module}`` for every kernel implementation available."""
    impls = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        impls["cython"] = _ckernels
    return impls
