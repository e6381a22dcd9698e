"""Symmetric sparse matrices with reusable factorizations and delta products.

Matrices share one sparsity pattern per mesh; assembly rewrites values in
place.  Factorizations are computed once and reused across many solves.
The backend is SuperLU with a symmetric-friendly fill-reducing ordering,
which handles the indefinite tangent matrices that arise here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularMatrixError

_ORDERINGS = {"amd": "MMD_AT_PLUS_A", "natural": "NATURAL"}


@dataclass
class SparseSym:
    """Symmetric matrix in CSR form with a fixed, sorted pattern.

    ``indptr``/``indices`` are shared between matrices on the same pattern;
    only ``data`` differs.  Symmetry is by construction (both triangles are
    stored).
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != self.indices.shape:
            raise ValueError("data and indices must have matching length")

    @classmethod
    def from_csr(cls, A: sp.csr_matrix) -> "SparseSym":
        A = A.tocsr().sorted_indices()
        A.sum_duplicates()
        return cls(A.shape[0], A.indptr, A.indices, np.asarray(A.data, dtype=float))

    @classmethod
    def from_dense(cls, A: np.ndarray) -> "SparseSym":
        return cls.from_csr(sp.csr_matrix(np.asarray(A, dtype=float)))

    def to_csr(self) -> sp.csr_matrix:
        # cached view sharing the data buffer; values edited in place show up
        csr = getattr(self, "_csr", None)
        if csr is None:
            csr = sp.csr_matrix((self.data, self.indices, self.indptr),
                                shape=(self.n, self.n))
            self._csr = csr
        return csr

    def copy(self) -> "SparseSym":
        """Value copy; the pattern arrays stay shared."""
        return SparseSym(self.n, self.indptr, self.indices, self.data.copy())

    def same_pattern(self, other: "SparseSym") -> bool:
        if self.indices is other.indices and self.indptr is other.indptr:
            return True
        return (self.n == other.n
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {v.shape}")
        return self.to_csr() @ v

    def norm_inf(self) -> float:
        return float(np.abs(self.to_csr()).sum(axis=1).max()) if self.n else 0.0


@dataclass
class Factorization:
    """Held factorization of a SparseSym, reusable for many solves."""

    n: int
    _lu: object
    ordering: str = "amd"
    stamp: tuple = field(default=None)  # (outer iteration, newton counter)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.n,):
            raise ValueError(f"expected right-hand side of length {self.n}, got {b.shape}")
        return self._lu.solve(b)


def ldlt_factor(K: SparseSym, ordering: str = "amd") -> Factorization:
    """Factor a symmetric (possibly indefinite) matrix for repeated solves.

    Raises SingularMatrixError on an exactly singular pivot.
    """
    if ordering not in _ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}")
    csc = K.to_csr().tocsc()
    try:
        lu = spla.splu(csc, permc_spec=_ORDERINGS[ordering])
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    return Factorization(K.n, lu, ordering)


def solve(F: Factorization, b: np.ndarray) -> np.ndarray:
    return F.solve(b)


def delta_apply(K_new: SparseSym, K_old: SparseSym, v: np.ndarray) -> np.ndarray:
    """(K_new - K_old) @ v without materializing the difference matrix.

    Both operands must live on the same pattern; the product uses a single
    sparse matvec over the value difference.
    """
    if not K_new.same_pattern(K_old):
        raise ValueError("matrices do not share a sparsity pattern")
    v = np.asarray(v, dtype=float)
    if v.shape != (K_new.n,):
        raise ValueError(f"expected vector of length {K_new.n}, got {v.shape}")
    diff = sp.csr_matrix((K_new.data - K_old.data, K_new.indices, K_new.indptr),
                         shape=(K_new.n, K_new.n))
    return diff @ v


def write_matrix_market(K: SparseSym, path) -> None:
    """Write the lower triangle in coordinate Matrix Market format.

    ASCII, 1-based indices, header
    '%%MatrixMarket matrix coordinate real symmetric'.
    """
    lower = sp.tril(K.to_csr()).tocoo()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        fh.write(f"{K.n} {K.n} {lower.nnz}\n")
        for i, j, val in zip(lower.row, lower.col, lower.data):
            fh.write(f"{i + 1} {j + 1} {val:.17g}\n")
