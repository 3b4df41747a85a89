"""Subset-mask arithmetic and fast transforms on the Boolean lattice.

A subset ``S`` of ``n`` variables is encoded as an integer mask where bit ``i``
(LSB first) is set iff variable ``i`` belongs to ``S``.  A lattice vector is a
float64 array whose last axis has length ``2**n`` and is indexed by mask.
All transforms accept a single vector or a stack of vectors (shape
``(..., 2**n)``) and return a new array; inputs are never modified.
"""

import numpy as np

from . import _accel
from ._accel import njit

MAX_VARIABLES = 24


class LatticeShapeError(ValueError):
    """Raised when an array is not a valid lattice vector."""


def n_variables(values):
    """Return ``n`` for an array whose last axis has length ``2**n``."""
    size = np.shape(values)[-1] if np.ndim(values) else 0
    if size < 2 or size & (size - 1):
        raise LatticeShapeError(f"lattice vector length must be 2**n with n >= 1, got {size}")
    n = size.bit_length() - 1
    if n > MAX_VARIABLES:
        raise LatticeShapeError(f"n={n} exceeds the supported maximum of {MAX_VARIABLES}")
    return n


def as_lattice(values):
    arr = np.array(values, dtype=np.float64)
    n_variables(arr)
    if not np.all(np.isfinite(arr)):
        raise LatticeShapeError("lattice vector contains non-finite entries")
    return arr


def popcounts(n):
    """Order ``|S|`` of every mask ``0 .. 2**n - 1``."""
    masks = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        counts += (masks >> i) & 1
    return counts


def order(mask):
    return int(mask).bit_count()


def mask_from_vars(variables):
    m = 0
    for i in variables:
        m |= 1 << int(i)
    return m


def vars_from_mask(mask):
    mask = int(mask)
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def masks_of_order(n, k):
    """All k-subset masks in ascending integer order."""
    pc = popcounts(n)
    return np.flatnonzero(pc == k)


# --- kernels ---------------------------------------------------------------
# Each kernel works in place on a C-contiguous (rows, 2**n) float64 array.
# ``sign`` is +1 for the zeta direction and -1 for the Mobius direction.


@njit(cache=True, nogil=True)
def _subset_sum_numba(x, sign):
    rows, size = x.shape
    bit = 1
    while bit < size:
        for r in range(rows):
            for m in range(size):
                if m & bit:
                    x[r, m] += sign * x[r, m ^ bit]
        bit <<= 1


@njit(cache=True, nogil=True)
def _superset_sum_numba(x, sign):
    rows, size = x.shape
    bit = 1
    while bit < size:
        for r in range(rows):
            for m in range(size):
                if not m & bit:
                    x[r, m] += sign * x[r, m | bit]
        bit <<= 1


def _subset_sum_numpy(x, sign):
    rows, size = x.shape
    bit = 1
    while bit < size:
        v = x.reshape(rows, -1, 2, bit)
        v[:, :, 1, :] += sign * v[:, :, 0, :]
        bit <<= 1


def _superset_sum_numpy(x, sign):
    rows, size = x.shape
    bit = 1
    while bit < size:
        v = x.reshape(rows, -1, 2, bit)
        v[:, :, 0, :] += sign * v[:, :, 1, :]
        bit <<= 1


def _apply(kernel_name, values, sign):
    arr = np.array(values, dtype=np.float64, copy=True)
    n_variables(arr)
    shape = arr.shape
    work = np.ascontiguousarray(arr.reshape(-1, shape[-1]))
    if _accel.use_numba():
        kernel = _subset_sum_numba if kernel_name == "subset" else _superset_sum_numba
    else:
        kernel = _subset_sum_numpy if kernel_name == "subset" else _superset_sum_numpy
    kernel(work, float(sign))
    return work.reshape(shape)


# --- public transforms -----------------------------------------------------


def mobius_transform(f):
    """g(S) = sum_{T subset S} (-1)^{|S|-|T|} f(T), for every S including the empty set."""
    return _apply("subset", f, -1.0)


def zeta_transform(g):
    """f(T) = sum_{S subset T} g(S); the inverse of :func:`mobius_transform`."""
    return _apply("subset", g, 1.0)


def superset_mobius_transform(y):
    """g(T) = sum_{S superset T} (-1)^{|S|-|T|} y(S).

    This is the transpose of :func:`mobius_transform` as a linear map.
    """
    return _apply("superset", y, -1.0)


def superset_zeta_transform(y):
    """g(T) = sum_{S superset T} y(S)."""
    return _apply("superset", y, 1.0)


def complement(h):
    """Reindex by set complement: out[m] = h[N \\ m]."""
    return np.asarray(h)[..., ::-1]


def superset_complement_transform(h):
    """g(S) = -sum_{T subset S} (-1)^{|S|-|T|} h(N \\ T).

    Applied to an OR component table this yields the OR interactions.  The
    entry at the empty set equals ``-h(N)``; callers that follow the
    convention I(empty) = 0 overwrite it.
    """
    return -mobius_transform(np.ascontiguousarray(complement(as_lattice(h))))
