"""Scalar positive-definite kernels and Gram matrix construction.

Three families are supported:

* ``gaussian``          exp(-||a - b||^2 / (2 sigma2))
* ``linear``            <a, b>
* ``gaussian_tanimoto`` exp(-(1 - T(a, b)) / sigma2), T the Tanimoto coefficient
  on binary vectors (T := 1 when both vectors are all-zero)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

FAMILIES = ("gaussian", "linear", "gaussian_tanimoto")


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    family: str
    sigma2: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.family == "linear":
            if self.sigma2 is not None:
                raise KernelError("linear kernel takes no width")
        else:
            if self.sigma2 is None or not np.isfinite(self.sigma2) or self.sigma2 <= 0:
                raise KernelError(f"{self.family} kernel needs sigma2 > 0, got {self.sigma2}")
            object.__setattr__(self, "sigma2", float(self.sigma2))

    @classmethod
    def gaussian(cls, sigma2):
        return cls("gaussian", sigma2)

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def gaussian_tanimoto(cls, sigma2=1.0):
        return cls("gaussian_tanimoto", sigma2)

    def to_dict(self):
        d = {"family": self.family}
        if self.sigma2 is not None:
            d["sigma2"] = self.sigma2
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], d.get("sigma2"))


@dataclass
class GramMatrix:
    """Pairwise kernel evaluations; behaves like an ndarray via ``__array__``."""

    entries: np.ndarray
    row_kernel: KernelSpec
    symmetric: bool

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def T(self):
        return GramMatrix(self.entries.T, self.row_kernel, self.symmetric)


def _as_rows(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise KernelError(f"{name} must be a nonempty list of vectors")
    if not np.all(np.isfinite(arr)):
        raise KernelError(f"{name} contains non-finite values")
    return arr


def _check_binary(arr, name):
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise KernelError(f"gaussian_tanimoto needs binary (0/1) vectors in {name}")


def _cross(spec, A, B, same):
    """Kernel block between the rows of A and B."""
    # einsum keeps a fixed summation order per pair: gram(A, B).T == gram(B, A)
    # bit for bit, independent of BLAS threading
    inner = np.einsum("ik,jk->ij", A, B)
    if spec.family == "linear":
        return inner
    na = np.einsum("ij,ij->i", A, A)
    nb = na if same else np.einsum("ij,ij->i", B, B)
    if spec.family == "gaussian":
        sq = na[:, None] + nb[None, :] - 2.0 * inner
        np.maximum(sq, 0.0, out=sq)
        if same:
            np.fill_diagonal(sq, 0.0)
        return np.exp(-sq / (2.0 * spec.sigma2))
    # tanimoto: union = |a| + |b| - |a & b|, zero only when both vectors are empty
    union = na[:, None] + nb[None, :] - inner
    both_empty = union == 0.0
    tani = np.divide(inner, union, out=np.ones_like(inner), where=~both_empty)
    if same:
        np.fill_diagonal(tani, 1.0)
    return np.exp(-(1.0 - tani) / spec.sigma2)


def eval_kernel(spec: KernelSpec, a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise KernelError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if spec.family == "gaussian_tanimoto":
        _check_binary(a, "a")
        _check_binary(b, "b")
    return float(_cross(spec, a[None, :], b[None, :], same=False)[0, 0])


def gram(spec: KernelSpec, rows, cols=None) -> GramMatrix:
    """Gram matrix ``entries[i, j] = k(rows[i], cols[j])``.

    With ``cols=None`` the matrix is symmetric: the upper triangle is kept and
    mirrored so symmetry holds bit for bit.
    """
    A = _as_rows(rows, "rows")
    same = cols is None
    B = A if same else _as_rows(cols, "cols")
    if A.shape[1] != B.shape[1]:
        raise KernelError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.family == "gaussian_tanimoto":
        _check_binary(A, "rows")
        if not same:
            _check_binary(B, "cols")
    K = _cross(spec, A, B, same)
    if same:
        upper = np.triu(K)
        K = upper + np.triu(K, 1).T
    return GramMatrix(np.ascontiguousarray(K), spec, same)


def kernel_diag(spec: KernelSpec, rows) -> np.ndarray:
    """Self-similarities k(z, z) for every row, without building the full Gram."""
    A = _as_rows(rows, "rows")
    if spec.family == "linear":
        return np.einsum("ij,ij->i", A, A)
    if spec.family == "gaussian_tanimoto":
        _check_binary(A, "rows")
    return np.ones(A.shape[0])
