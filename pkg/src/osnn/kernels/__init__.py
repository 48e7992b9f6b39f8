"""Hot kernels: fused shared-unit block product and im2col/col2im.

The compiled extension is used when it imports; otherwise the numpy
versions are used.  Set ``OSNN_KERNELS=python`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("OSNN_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _pykernels

bsp_forward = _impl.bsp_forward
bsp_backward = _impl.bsp_backward
im2col = _impl.im2col
col2im = _impl.col2im
conv_out_size = _pykernels.conv_out_size

__all__ = ["BACKEND", "bsp_forward", "bsp_backward", "im2col", "col2im", "conv_out_size"]
