"""Dense 3-D tensor algebra: Kronecker products, block unfolding, inner products.

Conventions used throughout the package:

* A third-order tensor is a float64 ``numpy`` array of shape ``(D1, D2, D3)``.
* Vectorization is column-major (first index fastest), i.e. ``ravel(order="F")``;
  the linear offset of element ``(i, j, k)`` (0-based) is ``i + j*D1 + k*D1*D2``.
* ``unfold`` maps a ``(p1*d1, p2*d2, p3*d3)`` tensor to a ``(p1*p2*p3, d1*d2*d3)``
  matrix: row ``r`` is the vectorized ``(d1, d2, d3)`` block at block position
  ``(k, l, m)``, with blocks enumerated first-index-fastest as well.  Under this
  convention ``unfold(kron3(a, b)) == vec3(a) @ vec3(b).T`` holds exactly.

2-D problems are represented as ``D3 == 1`` tensors; there are no special-case
code paths for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FactorizationError, ShapeError

__all__ = [
    "BlockShape",
    "vec3",
    "unvec3",
    "kron3",
    "unfold",
    "refold",
    "bilinear_inner",
]


def _as_tensor3(t: np.ndarray, name: str) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"{name} must be a 3-D array, got ndim={t.ndim}")
    return t


@dataclass(frozen=True)
class BlockShape:
    """Per-mode split ``D_l = p_l * d_l`` of a tensor into a grid of blocks.

    ``p`` holds the number of blocks along each mode, ``d`` the block extents.
    """

    p: tuple[int, int, int]
    d: tuple[int, int, int]
    p_size: int = field(init=False)
    d_size: int = field(init=False)

    def __post_init__(self):
        p = tuple(int(v) for v in self.p)
        d = tuple(int(v) for v in self.d)
        if len(p) != 3 or len(d) != 3:
            raise ShapeError("p and d must each have three entries")
        for mode, v in enumerate(p + d):
            if v < 1:
                raise ShapeError(f"block split entries must be >= 1, got {v}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "p_size", p[0] * p[1] * p[2])
        object.__setattr__(self, "d_size", d[0] * d[1] * d[2])

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.p[i] * self.d[i] for i in range(3))

    def check_dims(self, dims: tuple[int, int, int]) -> None:
        """Raise FactorizationError unless ``dims[l] == p[l]*d[l]`` for all modes."""
        for mode in range(3):
            want = self.p[mode] * self.d[mode]
            if dims[mode] != want:
                splits = ", ".join(
                    f"({a},{dims[mode] // a})"
                    for a in range(1, dims[mode] + 1)
                    if dims[mode] % a == 0
                )
                raise FactorizationError(
                    f"mode {mode + 1}: D={dims[mode]} != p*d={self.p[mode]}*{self.d[mode]}"
                    f"={want}; valid (p,d) splits of {dims[mode]}: {splits}"
                )


def vec3(t: np.ndarray) -> np.ndarray:
    """Vectorize a 3-D tensor, first index fastest."""
    return _as_tensor3(t, "t").ravel(order="F")


def unvec3(v: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`vec3` for the given dims."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size != dims[0] * dims[1] * dims[2]:
        raise ShapeError(f"vector of length {v.size} cannot fill dims {dims}")
    return v.reshape(dims, order="F")


def kron3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor Kronecker product of a ``(p1,p2,p3)`` and a ``(d1,d2,d3)`` tensor.

    Element ``(i1*d1+j1, i2*d2+j2, i3*d3+j3)`` of the result equals
    ``a[i1,i2,i3] * b[j1,j2,j3]``; frontal slice ``k`` is the 2-D Kronecker
    product of slice ``(k // d3)`` of ``a`` with slice ``(k % d3)`` of ``b``.
    """
    a = _as_tensor3(a, "a")
    b = _as_tensor3(b, "b")
    return np.kron(a, b)


def unfold(c: np.ndarray, shape: BlockShape) -> np.ndarray:
    """Rearrange a ``(p1*d1, p2*d2, p3*d3)`` tensor into a ``(p, d)`` matrix.

    Row ``r`` holds ``vec3`` of the block at block index ``r`` (blocks
    enumerated first-mode-fastest).  Satisfies
    ``unfold(kron3(a, b), s) == np.outer(vec3(a), vec3(b))`` exactly.
    """
    c = _as_tensor3(c, "c")
    shape.check_dims(c.shape)
    p1, p2, p3 = shape.p
    d1, d2, d3 = shape.d
    # Axes after the F-order reshape: (j1, k, j2, l, j3, m) where (k,l,m) is
    # the block index and (j1,j2,j3) the within-block index.
    c6 = c.reshape((d1, p1, d2, p2, d3, p3), order="F")
    return c6.transpose(1, 3, 5, 0, 2, 4).reshape(
        (shape.p_size, shape.d_size), order="F"
    )


def refold(m: np.ndarray, shape: BlockShape) -> np.ndarray:
    """Exact inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"unfolded matrix must be 2-D, got ndim={m.ndim}")
    if m.shape != (shape.p_size, shape.d_size):
        raise ShapeError(
            f"unfolded matrix is {m.shape}, expected ({shape.p_size}, {shape.d_size})"
        )
    p1, p2, p3 = shape.p
    d1, d2, d3 = shape.d
    c6 = m.reshape((p1, p2, p3, d1, d2, d3), order="F")
    return np.ascontiguousarray(
        c6.transpose(3, 0, 4, 1, 5, 2).reshape(shape.dims, order="F")
    )


def bilinear_inner(xu: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """``trace(a.T @ xu @ b)``, the rank-R bilinear form of an unfolded tensor.

    Equals the Frobenius inner product of the original tensor with
    ``sum_r kron3(A_r, B_r)`` where ``A_r``/``B_r`` refold the r-th columns.
    """
    xu = np.asarray(xu, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if xu.ndim != 2 or a.shape[0] != xu.shape[0] or b.shape[0] != xu.shape[1]:
        raise ShapeError(
            f"bilinear_inner: X is {xu.shape}, A has {a.shape[0]} rows, "
            f"B has {b.shape[0]} rows"
        )
    if a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"bilinear_inner: rank mismatch, A has {a.shape[1]} columns, "
            f"B has {b.shape[1]}"
        )
    return float(np.sum(a * (xu @ b)))
