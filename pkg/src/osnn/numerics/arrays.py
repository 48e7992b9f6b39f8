"""Validated dense containers.

Real tensors are float64 ndarrays and complex matrices are complex128 2-D
ndarrays; the helpers here only enforce the invariants (finite, right rank,
consistent shapes) so the rest of the package can use plain numpy.
"""

import numpy as np

from ..errors import NonFiniteError, ShapeError


def real_tensor(data, shape=None):
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"data length {arr.size} does not match shape {shape}")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("real tensor contains NaN or Inf")
    return arr


def complex_matrix(data, rows=None, cols=None):
    arr = np.array(data, dtype=np.complex128)
    if rows is not None or cols is not None:
        if rows is None or cols is None or rows < 1 or cols < 1:
            raise ShapeError("rows and cols must both be positive")
        if arr.size != rows * cols:
            raise ShapeError(f"{arr.size} entries cannot form a {rows}x{cols} matrix")
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2 or 0 in arr.shape:
        raise ShapeError(f"complex matrix must be non-empty 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("complex matrix contains NaN or Inf")
    return arr


def matmul(a, b):
    """Matrix product with an explicit dimension check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def is_unitary(u, tol=1e-10):
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)
