"""Minimal complex linear algebra kernel.

CSR sparse matrices, a reusable sparse LU handle, a dense generalized
eigensolver and Krylov methods (GMRES, CG) with pluggable preconditioners.

Conventions:
  * dense matrices are plain numpy arrays in C (row-major) order,
  * ``symmetric`` always means A = A^T (plain transpose, no conjugation),
  * operators passed to the Krylov driver may be matrices or callables,
  * GMRES is right-preconditioned, so the reported residual history is the
    history of true (unpreconditioned) relative residuals.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericError, SingularityError, StructuralError

__all__ = [
    "ComplexSparseMatrix",
    "Factorization",
    "KrylovConfig",
    "KrylovReport",
    "EigenPair",
    "csr_from_triplets",
    "lu_factorize",
    "krylov_solve",
    "dense_generalized_eig",
    "eigenpair_residual",
    "orthonormalize",
]


class ComplexSparseMatrix:
    """Compressed sparse row storage for complex symmetric (or general) operators.

    Real-valued matrices are the imaginary-part-zero special case and are kept
    in float64 so downstream factorizations stay in real arithmetic.
    """

    __slots__ = ("_csr", "symmetric")

    def __init__(self, matrix: sp.spmatrix, symmetric: bool = False):
        csr = sp.csr_matrix(matrix)
        if not np.issubdtype(csr.dtype, np.floating) and not np.issubdtype(
            csr.dtype, np.complexfloating
        ):
            csr = csr.astype(np.float64)
        csr.sort_indices()
        self._csr = csr
        self.symmetric = symmetric
        if symmetric and not self.is_symmetric():
            raise StructuralError("matrix flagged symmetric is not symmetric")

    @property
    def nrows(self) -> int:
        return self._csr.shape[0]

    @property
    def ncols(self) -> int:
        return self._csr.shape[1]

    @property
    def row_offsets(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def values(self) -> np.ndarray:
        return self._csr.data

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def dtype(self):
        return self._csr.dtype

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._csr @ x

    def __matmul__(self, x):
        return self._csr @ x

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def submatrix(self, rows: np.ndarray, cols: np.ndarray | None = None) -> "ComplexSparseMatrix":
        """Exact submatrix extraction R A R^T (rows == cols by default)."""
        cols = rows if cols is None else cols
        return ComplexSparseMatrix(self._csr[np.ix_(rows, cols)])

    def is_symmetric(self, rel_tol: float = 1e-13) -> bool:
        """Check A = A^T entrywise on the stored pattern."""
        if self.nrows != self.ncols:
            return False
        scale = np.abs(self._csr.data).max() if self.nnz else 0.0
        if scale == 0.0:
            return True
        diff = self._csr - self._csr.T
        if diff.nnz == 0:
            return True
        return np.abs(diff.data).max() <= rel_tol * scale

    def max_abs(self) -> float:
        return float(np.abs(self._csr.data).max()) if self.nnz else 0.0

    def __repr__(self):
        return (
            f"ComplexSparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}, "
            f"dtype={self.dtype})"
        )


def csr_from_triplets(nrows, ncols, triplets, symmetric: bool = False) -> ComplexSparseMatrix:
    """Build a CSR matrix from (row, col, value) triplets.

    Duplicate entries are summed, explicit zeros are retained and rows come
    out with strictly increasing column indices.  ``triplets`` is either an
    iterable of 3-tuples or a ``(rows, cols, values)`` triple of arrays.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3:
        rows, cols, vals = (np.asarray(a) for a in triplets)
    else:
        seq = list(triplets)
        if seq:
            rows = np.array([t[0] for t in seq])
            cols = np.array([t[1] for t in seq])
            vals = np.array([t[2] for t in seq])
        else:
            rows = np.empty(0, dtype=np.int64)
            cols = np.empty(0, dtype=np.int64)
            vals = np.empty(0)
    if rows.size:
        if rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols:
            raise StructuralError("triplet index out of range")
    dtype = np.complex128 if np.iscomplexobj(vals) else np.float64
    coo = sp.coo_matrix((vals.astype(dtype), (rows, cols)), shape=(nrows, ncols))
    return ComplexSparseMatrix(coo.tocsr(), symmetric=symmetric)


class Factorization:
    """Reusable sparse LU handle; safe for concurrent solves."""

    def __init__(self, superlu, n: int):
        self._lu = superlu
        self.n = n

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b)
        if np.iscomplexobj(b) and not np.issubdtype(self._lu.U.dtype, np.complexfloating):
            return self._lu.solve(b.real) + 1j * self._lu.solve(b.imag)
        return self._lu.solve(b)

    def __call__(self, b):
        return self.solve(b)


def _as_scipy(A):
    if isinstance(A, ComplexSparseMatrix):
        return A.to_scipy()
    if sp.issparse(A):
        return A.tocsr()
    return sp.csr_matrix(np.asarray(A))


def lu_factorize(A) -> Factorization:
    """Sparse LU with partial pivoting for square, structurally nonsingular A.

    Raises SingularityError when SuperLU hits an exact zero pivot or when the
    factorization leaves a pivot below 1e-14 * max|A|.
    """
    csr = _as_scipy(A)
    if csr.shape[0] != csr.shape[1]:
        raise StructuralError("lu_factorize requires a square matrix")
    scale = np.abs(csr.data).max() if csr.nnz else 0.0
    if scale == 0.0:
        raise SingularityError("zero matrix is singular")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spla.MatrixRankWarning)
            lu = spla.splu(csr.tocsc())
    except RuntimeError as exc:
        raise SingularityError(f"sparse LU failed: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() <= 1e-14 * scale:
        raise SingularityError(
            f"pivot {piv.min():.3e} below threshold {1e-14 * scale:.3e}"
        )
    return Factorization(lu, csr.shape[0])


@dataclass(frozen=True)
class KrylovConfig:
    """Krylov driver settings; tol is on the true relative residual."""

    tol: float = 1e-6
    max_iter: int = 500
    restart: int | None = None
    variant: str = "gmres"

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise StructuralError("tol must lie in (0, 1)")
        if self.restart is not None and self.restart < 1:
            raise StructuralError("restart must be >= 1 when present")
        if self.variant not in ("gmres", "cg"):
            raise StructuralError(f"unknown variant {self.variant!r}")


@dataclass
class KrylovReport:
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)
    final_residual: float = 0.0


def _as_operator(op) -> Callable[[np.ndarray], np.ndarray]:
    if op is None:
        return None
    if callable(op) and not isinstance(op, np.ndarray):
        return op
    if isinstance(op, ComplexSparseMatrix):
        return op.matvec
    if sp.issparse(op):
        return lambda x, _m=op.tocsr(): _m @ x
    arr = np.asarray(op)
    return lambda x, _m=arr: _m @ x


def krylov_solve(A, M_inv, b, cfg: KrylovConfig = KrylovConfig()):
    """Solve A x = b with an optional preconditioner M_inv.

    ``A`` and ``M_inv`` may be matrices or matvec callables.  GMRES applies
    the preconditioner on the right (solve A M^-1 y = b, x = M^-1 y) so the
    convergence test is on the true residual; the CG variant assumes an SPD
    pair and is meant for the real symmetric case.
    """
    apply_A = _as_operator(A)
    apply_M = _as_operator(M_inv)
    b = np.asarray(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), KrylovReport(0, True, [], 0.0)
    if cfg.variant == "cg":
        return _pcg(apply_A, apply_M, b, cfg)
    return _gmres(apply_A, apply_M, b, cfg)


def _check_finite(w, what):
    if not np.all(np.isfinite(w)):
        raise NumericError(f"{what} produced non-finite values")


def _gmres(apply_A, apply_M, b, cfg: KrylovConfig):
    n = b.shape[0]
    dtype = np.promote_types(b.dtype, np.complex128)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n, dtype=dtype)
    residuals: list[float] = []
    iters = 0

    while True:
        r = b - apply_A(x) if iters else b.astype(dtype)
        beta = np.linalg.norm(r)
        if beta / bnorm <= cfg.tol or iters >= cfg.max_iter:
            break
        m = min(cfg.restart or cfg.max_iter, cfg.max_iter - iters)
        V = np.empty((n, m + 1), dtype=dtype)
        V[:, 0] = r / beta
        H = np.zeros((m + 1, m), dtype=dtype)
        cs = np.zeros(m, dtype=dtype)
        sn = np.zeros(m, dtype=dtype)
        g = np.zeros(m + 1, dtype=dtype)
        g[0] = beta
        k_used = 0
        inner_done = False
        for k in range(m):
            z = apply_M(V[:, k]) if apply_M is not None else V[:, k]
            _check_finite(z, "preconditioner")
            w = apply_A(z)
            _check_finite(w, "operator")
            w = w.astype(dtype, copy=True)
            # modified Gram-Schmidt with one reorthogonalization pass
            h = V[:, : k + 1].conj().T @ w
            w -= V[:, : k + 1] @ h
            h2 = V[:, : k + 1].conj().T @ w
            w -= V[:, : k + 1] @ h2
            h += h2
            hk1 = np.linalg.norm(w)
            H[: k + 1, k] = h
            H[k + 1, k] = hk1
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -np.conj(sn[i]) * H[i, k] + np.conj(cs[i]) * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(abs(H[k, k]), abs(H[k + 1, k]))
            if denom == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            elif H[k, k] == 0:
                cs[k], sn[k] = 0.0, 1.0
            else:
                phase = H[k, k] / abs(H[k, k])
                cs[k] = abs(H[k, k]) / denom
                sn[k] = phase * np.conj(H[k + 1, k]) / denom
            t = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            H[k, k] = t
            g[k + 1] = -np.conj(sn[k]) * g[k]
            g[k] = cs[k] * g[k]
            iters += 1
            k_used = k + 1
            rel = abs(g[k + 1]) / bnorm
            residuals.append(float(rel))
            lucky = hk1 <= 1e-14 * max(beta, 1.0)
            if rel <= cfg.tol or lucky or iters >= cfg.max_iter:
                inner_done = True
            else:
                V[:, k + 1] = w / hk1
            if inner_done:
                break
        y = sla.solve_triangular(H[:k_used, :k_used], g[:k_used], lower=False)
        u = V[:, :k_used] @ y
        x = x + (apply_M(u) if apply_M is not None else u)

    final = float(np.linalg.norm(b - apply_A(x)) / bnorm)
    return x, KrylovReport(iters, final <= cfg.tol, residuals, final)


def _pcg(apply_A, apply_M, b, cfg: KrylovConfig):
    dtype = b.dtype if np.iscomplexobj(b) else np.float64
    bnorm = np.linalg.norm(b)
    x = np.zeros(b.shape[0], dtype=dtype)
    r = b.astype(dtype, copy=True)
    z = apply_M(r) if apply_M is not None else r
    _check_finite(z, "preconditioner")
    p = z.copy()
    rz = np.vdot(r, z)
    residuals: list[float] = []
    iters = 0
    while iters < cfg.max_iter:
        Ap = apply_A(p)
        _check_finite(Ap, "operator")
        pAp = np.vdot(p, Ap)
        if pAp == 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        iters += 1
        rel = float(np.linalg.norm(r) / bnorm)
        residuals.append(rel)
        if rel <= cfg.tol:
            # recurrence residuals drift on ill-conditioned systems: confirm
            # against the true residual and restart the recursion if needed
            r_true = b - apply_A(x)
            if np.linalg.norm(r_true) / bnorm <= cfg.tol:
                break
            r = r_true.astype(dtype, copy=False)
            z = apply_M(r) if apply_M is not None else r
            _check_finite(z, "preconditioner")
            p = z.copy()
            rz = np.vdot(r, z)
            continue
        z = apply_M(r) if apply_M is not None else r
        _check_finite(z, "preconditioner")
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    final = float(np.linalg.norm(b - apply_A(x)) / bnorm)
    return x, KrylovReport(iters, final <= cfg.tol, residuals, final)


@dataclass(frozen=True)
class EigenPair:
    """One generalized eigenpair; the vector is normalized to unit 2-norm."""

    value: complex
    vector: np.ndarray


def eigenpair_residual(A, B, pair: EigenPair) -> float:
    """||A v - lambda B v||_2 for a pair of the pencil (A, B)."""
    A = np.asarray(A)
    B = np.asarray(B)
    return float(np.linalg.norm(A @ pair.vector - pair.value * (B @ pair.vector)))


def _is_hermitian(M: np.ndarray) -> bool:
    return np.allclose(M, M.conj().T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(M).max()))


def _select_pairs(values, vectors, which):
    """Order and filter eigenpairs.

    ``which`` is None (all, ascending real part) or a tuple:
      ("re_below", t)    -- Re < t, ascending real part
      ("re_above", t)    -- Re > t, descending real part
      ("k_largest", k)   -- k largest by real part
      ("abs_largest", k) -- k largest by magnitude
    Ties are broken by descending magnitude; the sort is stable.
    """
    idx = np.arange(len(values))
    order = sorted(idx, key=lambda i: (values[i].real, -abs(values[i])))
    if which is None:
        keep = order
    else:
        rule, arg = which
        if rule == "re_below":
            keep = [i for i in order if values[i].real < arg]
        elif rule == "re_above":
            keep = [i for i in reversed(order) if values[i].real > arg]
        elif rule == "k_largest":
            keep = list(reversed(order))[: int(arg)]
        elif rule == "abs_largest":
            keep = sorted(idx, key=lambda i: (-abs(values[i]), -values[i].real))[: int(arg)]
        else:
            raise StructuralError(f"unknown selection rule {rule!r}")
    out = []
    for i in keep:
        v = vectors[:, i]
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            continue
        out.append(EigenPair(complex(values[i]), v / nrm))
    return out


def dense_generalized_eig(A, B, which=None) -> list[EigenPair]:
    """Solve the dense generalized eigenproblem A v = lambda B v.

    Hermitian A with Hermitian positive definite B goes through the fast
    symmetric path; otherwise the pencil is reduced to a standard problem by
    factorizing B (QZ is the fallback when B is singular, dropping the
    infinite eigenvalues).  Returned vectors have unit 2-norm.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise StructuralError("A, B must be square and of equal size")
    n = A.shape[0]
    if n == 0:
        return []
    try:
        w = v = None
        if _is_hermitian(A) and _is_hermitian(B):
            try:
                w, v = sla.eigh(A, B)
                w = w.astype(np.complex128)
            except (np.linalg.LinAlgError, sla.LinAlgError):
                w = v = None  # B not definite; fall through to the general path
        if w is None:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    lu, piv = sla.lu_factor(B)
                dg = np.abs(np.diagonal(lu))
                if dg.min() <= 1e-13 * max(dg.max(), 1e-300):
                    raise np.linalg.LinAlgError("B numerically singular")
                T = sla.lu_solve((lu, piv), A)
                w, v = sla.eig(T)
            except (np.linalg.LinAlgError, sla.LinAlgError):
                w, v = sla.eig(A, B)  # QZ; may produce inf for singular B
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NumericError(f"generalized eigensolve failed: {exc}") from exc
    # enforce the residual contract; singular B pollutes every solver path
    finite = np.isfinite(w)
    w, v = w[finite], v[:, finite]
    nrm = np.linalg.norm(v, axis=0)
    ok = nrm > 0
    w, v = w[ok], v[:, ok] / nrm[ok]
    res = np.linalg.norm(A @ v - (B @ v) * w[None, :], axis=0)
    bound = 1e-8 * (np.linalg.norm(A, "fro") + np.abs(w) * np.linalg.norm(B, "fro"))
    keep = res <= np.maximum(bound, 1e-300)
    return _select_pairs(w[keep], v[:, keep], which)


def orthonormalize(vectors, drop_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (columns) of the span of the given vectors.

    Rank revealing: a vector whose projection residual has relative norm
    below ``drop_tol`` is dropped.  Small sets go through modified
    Gram-Schmidt with reorthogonalization (order preserving); large sets use
    column-pivoted QR for speed.  All-zero input yields an (n, 0) basis.
    """
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        V = vectors
    else:
        cols = [np.asarray(v).ravel() for v in vectors]
        if not cols:
            raise StructuralError("orthonormalize requires a nonempty input")
        V = np.column_stack(cols)
    n, m = V.shape
    if m == 0:
        return np.empty((n, 0), dtype=V.dtype)

    if m > 512:
        norms = np.linalg.norm(V, axis=0)
        Q, R, perm = sla.qr(V, mode="economic", pivoting=True)
        diag = np.abs(np.diagonal(R))
        ref = norms[perm]
        keep = diag >= drop_tol * np.maximum(ref, 1e-300)
        rank = int(np.count_nonzero(np.cumprod(keep))) if keep.size else 0
        return np.ascontiguousarray(Q[:, :rank])

    dtype = np.promote_types(V.dtype, np.float64)
    basis = np.empty((n, m), dtype=dtype)
    r = 0
    for j in range(m):
        v = V[:, j].astype(dtype, copy=True)
        nrm0 = np.linalg.norm(v)
        if nrm0 == 0.0:
            continue
        for _ in range(2):
            if r:
                v -= basis[:, :r] @ (basis[:, :r].conj().T @ v)
        nrm = np.linalg.norm(v)
        if nrm < drop_tol * nrm0:
            continue
        basis[:, r] = v / nrm
        r += 1
    return np.ascontiguousarray(basis[:, :r])
