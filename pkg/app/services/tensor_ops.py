"""
Dense third-order tensor arithmetic.

Tensors are C-ordered ``numpy`` arrays (row-major, last index fastest).
Modes are numbered 1, 2, 3. The mode-n unfolding has I_n rows; its columns
run over the remaining modes in increasing mode order with the first
remaining mode varying slowest. ``mode_n_product`` takes a matrix whose
column count equals the current mode size and whose row count is the new
mode size.
"""

from typing import Sequence

import numpy as np

from app.core.exceptions import InvalidArgumentError

MODES = (1, 2, 3)


def as_tensor3(values, name: str = "tensor") -> np.ndarray:
    t = np.ascontiguousarray(values, dtype=np.float64)
    if t.ndim != 3 or 0 in t.shape:
        raise InvalidArgumentError(f"{name} must be a nonempty 3rd-order array, got shape {t.shape}")
    return t


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim != 2 or 0 in m.shape:
        raise InvalidArgumentError(f"{name} must be a nonempty 2-d array, got shape {m.shape}")
    return m


def _check_mode(mode: int) -> int:
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    return mode - 1


def outer_product3(a, b, c) -> np.ndarray:
    """
    * rank-1 tensor a o b o c, entry (i, j, k) = a_i * b_j * c_k
    """
    vectors = []
    for name, v in (("a", a), ("b", b), ("c", c)):
        arr = np.asarray(v, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidArgumentError(f"vector {name} must be 1-d and nonempty, got shape {arr.shape}")
        vectors.append(arr)
    a, b, c = vectors
    return np.ascontiguousarray(a[:, None, None] * b[None, :, None] * c[None, None, :])


def frobenius_norm(t) -> float:
    t = np.asarray(t, dtype=np.float64)
    return float(np.sqrt(np.sum(t * t)))


def unfold(t, mode: int) -> np.ndarray:
    axis = _check_mode(mode)
    t = as_tensor3(t)
    return np.ascontiguousarray(np.moveaxis(t, axis, 0).reshape(t.shape[axis], -1))


def fold(m, mode: int, dims: Sequence[int]) -> np.ndarray:
    axis = _check_mode(mode)
    m = as_matrix(m)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise InvalidArgumentError(f"dims must be three positive sizes, got {dims}")

    rest = [d for i, d in enumerate(dims) if i != axis]
    expected = (dims[axis], rest[0] * rest[1])
    if m.shape != expected:
        raise InvalidArgumentError(
            f"cannot fold a {m.shape} matrix along mode {mode} into {dims}, expected {expected}"
        )
    return np.ascontiguousarray(np.moveaxis(m.reshape(dims[axis], *rest), 0, axis))


def mode_n_product(t, m, mode: int) -> np.ndarray:
    """
    * n-mode product t x_n m, m has shape (new size, current size)
    """
    axis = _check_mode(mode)
    t = as_tensor3(t)
    m = as_matrix(m, "factor")
    if m.shape[1] != t.shape[axis]:
        raise InvalidArgumentError(
            f"mode-{mode} product needs {t.shape[axis]} matrix columns, got {m.shape}"
        )
    dims = list(t.shape)
    dims[axis] = m.shape[0]
    return fold(m @ unfold(t, mode), mode, dims)


def multi_mode_product(t, matrices: Sequence[np.ndarray], skip: int | None = None) -> np.ndarray:
    """
    * apply one matrix per mode in mode order, optionally skipping one mode
    """
    out = as_tensor3(t)
    for mode, m in zip(MODES, matrices):
        if mode != skip:
            out = mode_n_product(out, m, mode)
    return out
