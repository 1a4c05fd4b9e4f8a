"""Lowest-order edge elements for the 2D positive curl-curl problem

    curl(mu_r^-1 curl u) + alpha eps_r u = f,   u x n = 0 on the boundary,

plus its preconditioners: the nodal auxiliary space preconditioner (ASP),
one- and two-level additive Schwarz with the gradient ("free") coarse space,
and the GenEO enrichment built in the orthogonal complement of that space.

DOFs are tangential circulations on interior edges, every edge directed from
its lower- to its higher-numbered vertex; boundary edges are eliminated by
the essential condition.  The gradient matrix C (signed node-to-edge
incidence over interior nodes) spans the near-kernel of the curl-curl term:
K C = 0 holds exactly up to roundoff.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .decomposition import Decomposition, decompose
from .errors import SingularityError, StructuralError
from .linalg import (
    ComplexSparseMatrix,
    dense_generalized_eig,
    lu_factorize,
    orthonormalize,
)
from .mesh import Mesh
from .schwarz import CoarseSpace

__all__ = [
    "MaxwellProblem",
    "MaxwellSystem",
    "assemble_maxwell",
    "AspPreconditioner",
    "OneLevelAdditiveSchwarz",
    "TwoLevelAdditiveSchwarz",
    "build_edge_decomposition",
    "build_free_cs",
    "build_geneo_complement_cs",
    "FslCheck",
    "fsl_bounds_check",
    "channel_field",
]

_MID_BARY = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
_LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))


def _per_element(field, mesh: Mesh) -> np.ndarray:
    """Coefficient per element: scalar, array of length nt, or callable."""
    if callable(field):
        c = mesh.centroids()
        return np.asarray(field(c[:, 0], c[:, 1]), dtype=float)
    arr = np.asarray(field, dtype=float)
    if arr.ndim == 0:
        return np.full(mesh.n_triangles, float(arr))
    if arr.shape[0] != mesh.n_triangles:
        raise StructuralError("per-element field length mismatch")
    return arr


@dataclass(frozen=True)
class MaxwellProblem:
    mesh: Mesh                      # order-1 geometry
    mu_r: object = 1.0              # scalar | per-element array | callable
    eps_r: object = 1.0
    alpha: float = 1.0
    source: np.ndarray | None = None  # load on free-edge DOFs
    bc: str = "tangential_zero"       # or "natural" (analysis only)

    def __post_init__(self):
        if self.alpha <= 0:
            raise StructuralError("alpha must be positive")
        if self.bc not in ("tangential_zero", "natural"):
            raise StructuralError(f"unknown bc {self.bc!r}")
        if self.mesh.order != 1:
            raise StructuralError("edge elements use order-1 mesh geometry")


@dataclass
class MaxwellSystem:
    mesh: Mesh
    alpha: float
    edge_dof: np.ndarray     # (n_edges,) free-edge dof id or -1
    free_edges: np.ndarray   # edge ids of the dofs, in dof order
    node_dof: np.ndarray     # (n_vertices,) interior-node dof id or -1
    free_nodes: np.ndarray
    K: ComplexSparseMatrix   # curl-curl part (real)
    Mw: ComplexSparseMatrix  # eps_r-weighted edge mass
    A: ComplexSparseMatrix   # K + alpha * Mw
    C: sp.csr_matrix         # gradient matrix, n_edges_free x n_nodes_free
    Ltilde: sp.csr_matrix    # mu_r^-1-weighted vector nodal Laplacian (2 blocks)
    Qtilde: sp.csr_matrix    # eps_r-weighted vector nodal mass (2 blocks)
    Pinterp: sp.csr_matrix   # edge <- vector-nodal interpolation
    L: sp.csr_matrix         # eps_r-weighted scalar nodal Laplacian
    b: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.free_edges.size

    def element_edge_dofs(self) -> np.ndarray:
        """(nt, 3) free-edge dof per element, -1 where eliminated."""
        return self.edge_dof[self.mesh.tri_edges]


def _barycentric_gradients(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise StructuralError("degenerate element in edge assembly")
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv[:, 1, 1] = J[:, 0, 0]
    inv /= det[:, None, None]
    g = np.empty((mesh.n_triangles, 3, 2))
    g[:, 1] = inv[:, 0]
    g[:, 2] = inv[:, 1]
    g[:, 0] = -g[:, 1] - g[:, 2]
    return g, 0.5 * det


def _edge_element_matrices(mesh: Mesh, mu_e: np.ndarray, eps_e: np.ndarray):
    """Whitney edge stiffness/mass per element, plus the (tail, head) local
    vertex indices (ordered by global vertex id) per local edge."""
    g, area = _barycentric_gradients(mesh)
    tri = mesh.triangles
    nt = mesh.n_triangles
    ia = np.empty((nt, 3), dtype=np.int64)  # local tail (lower global id)
    ib = np.empty((nt, 3), dtype=np.int64)
    for k, (k1, k2) in enumerate(_LOCAL_EDGES):
        lo_first = tri[:, k1] < tri[:, k2]
        ia[:, k] = np.where(lo_first, k1, k2)
        ib[:, k] = np.where(lo_first, k2, k1)
    rows = np.arange(nt)[:, None]
    ga = g[rows, ia]  # (nt, 3, 2) gradient of tail barycentric
    gb = g[rows, ib]
    curl = 2.0 * (ga[:, :, 0] * gb[:, :, 1] - ga[:, :, 1] * gb[:, :, 0])  # (nt, 3)
    Ke = (curl[:, :, None] * curl[:, None, :]) * (area / mu_e)[:, None, None]

    # W_k at the 3 edge midpoints: lam_a grad(lam_b) - lam_b grad(lam_a)
    W = np.empty((nt, 3, 3, 2))  # (elem, basis k, quad q, component)
    for q in range(3):
        bc = _MID_BARY[q]
        la = bc[ia]  # (nt, 3)
        lb = bc[ib]
        W[:, :, q, :] = la[:, :, None] * gb - lb[:, :, None] * ga
    Me = np.einsum("mkqd,mlqd->mkl", W, W) * (area * eps_e / 3.0)[:, None, None]
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    Me = 0.5 * (Me + Me.transpose(0, 2, 1))
    return Ke, Me


def _scalar_p1_matrices(mesh: Mesh, weights: np.ndarray):
    """Weighted P1 stiffness and mass element matrices."""
    g, area = _barycentric_gradients(mesh)
    Ke = np.einsum("mid,mjd->mij", g, g) * (area * weights)[:, None, None]
    ref_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    Me = ref_mass[None, :, :] * (area * weights)[:, None, None]
    return Ke, Me


def _assemble(rows, cols, vals, n, m=None):
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, m or n)).tocsr()


def _scatter_square(dofmap, Ae, n):
    """Sum element matrices into a sparse n x n matrix, skipping -1 dofs."""
    nd = dofmap.shape[1]
    rows = np.repeat(dofmap, nd, axis=1).ravel()
    cols = np.tile(dofmap, (1, nd)).ravel()
    vals = Ae.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    return _assemble(rows[keep], cols[keep], vals[keep], n)


def assemble_maxwell(problem: MaxwellProblem) -> MaxwellSystem:
    """Assemble the edge-element system and the nodal auxiliary operators."""
    mesh = problem.mesh
    mu_e = _per_element(problem.mu_r, mesh)
    eps_e = _per_element(problem.eps_r, mesh)
    if np.any(mu_e <= 0) or np.any(eps_e <= 0):
        raise StructuralError("mu_r and eps_r must be strictly positive")

    if problem.bc == "tangential_zero":
        bnd_edges = mesh.boundary_edges
        bnd_nodes = np.unique(mesh.edges[bnd_edges].ravel())
    else:
        bnd_edges = np.empty(0, dtype=np.int64)
        bnd_nodes = np.empty(0, dtype=np.int64)
    edge_dof = np.full(mesh.n_edges, -1, dtype=np.int64)
    free_edges = np.setdiff1d(np.arange(mesh.n_edges), bnd_edges)
    edge_dof[free_edges] = np.arange(free_edges.size)
    node_dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
    free_nodes = np.setdiff1d(np.arange(mesh.n_vertices), bnd_nodes)
    node_dof[free_nodes] = np.arange(free_nodes.size)
    ne, nn = free_edges.size, free_nodes.size

    Ke, Me = _edge_element_matrices(mesh, mu_e, eps_e)
    dofmap = edge_dof[mesh.tri_edges]
    K = _scatter_square(dofmap, Ke, ne)
    Mw = _scatter_square(dofmap, Me, ne)
    A = K + problem.alpha * Mw

    # gradient matrix: grad(phi_v) has circulation phi(head) - phi(tail)
    tails = mesh.edges[free_edges, 0]
    heads = mesh.edges[free_edges, 1]
    rows, cols, vals = [], [], []
    for sign, nodes in ((-1.0, tails), (1.0, heads)):
        nd = node_dof[nodes]
        keep = nd >= 0
        rows.append(np.flatnonzero(np.ones(ne, dtype=bool))[keep])
        cols.append(nd[keep])
        vals.append(np.full(int(keep.sum()), sign))
    C = _assemble(np.concatenate(rows), np.concatenate(cols),
                  np.concatenate(vals), ne, nn)

    # nodal auxiliary operators on interior nodes
    Kmu, _ = _scalar_p1_matrices(mesh, 1.0 / mu_e)
    Kplain, _ = _scalar_p1_matrices(mesh, np.ones(mesh.n_triangles))
    _, Meps = _scalar_p1_matrices(mesh, eps_e)
    ndofmap = node_dof[mesh.triangles]
    Lmu = _scatter_square(ndofmap, Kmu, nn)
    Lplain = _scatter_square(ndofmap, Kplain, nn)
    Mass = _scatter_square(ndofmap, Meps, nn)
    if nn and bnd_nodes.size == 0:
        # pure Neumann auxiliary problems are singular: ground one node
        ground = sp.coo_matrix(([1.0], ([0], [0])), shape=(nn, nn)).tocsr()
        Lmu = Lmu + ground
        Lplain = Lplain + ground
    Ltilde = sp.block_diag([Lmu, Lmu]).tocsr()
    Qtilde = sp.block_diag([Mass, Mass]).tocsr()

    # Nedelec interpolation of a vector nodal field: trapezoid circulation
    d = mesh.vertices[heads] - mesh.vertices[tails]
    prow, pcol, pval = [], [], []
    for comp in range(2):
        for nodes in (tails, heads):
            nd = node_dof[nodes]
            keep = nd >= 0
            prow.append(np.flatnonzero(keep))
            pcol.append(nd[keep] + comp * nn)
            pval.append(0.5 * d[keep, comp])
    Pinterp = _assemble(np.concatenate(prow), np.concatenate(pcol),
                        np.concatenate(pval), ne, 2 * nn)

    b = problem.source
    if b is None:
        b = np.zeros(ne)
        if ne:
            mids = 0.5 * (mesh.vertices[tails] + mesh.vertices[heads])
            ctr = np.array([(mesh.bbox()[0] + mesh.bbox()[1]) / 2,
                            (mesh.bbox()[2] + mesh.bbox()[3]) / 2])
            b[int(np.argmin(((mids - ctr) ** 2).sum(axis=1)))] = 1.0
    else:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != ne:
            raise StructuralError("source length does not match free-edge count")

    return MaxwellSystem(
        mesh=mesh, alpha=problem.alpha,
        edge_dof=edge_dof, free_edges=free_edges,
        node_dof=node_dof, free_nodes=free_nodes,
        K=ComplexSparseMatrix(K, symmetric=True),
        Mw=ComplexSparseMatrix(Mw, symmetric=True),
        A=ComplexSparseMatrix(A, symmetric=True),
        C=C, Ltilde=Ltilde, Qtilde=Qtilde, Pinterp=Pinterp, L=Lplain, b=b,
    )


def assemble_maxwell_subset(problem: MaxwellProblem, sys: MaxwellSystem,
                            elements: np.ndarray, dofs: np.ndarray
                            ) -> ComplexSparseMatrix:
    """Local Neumann matrix K + alpha*Mw assembled from a subset of elements,
    natural conditions on internal interfaces."""
    mesh = problem.mesh
    mu_e = _per_element(problem.mu_r, mesh)[elements]
    eps_e = _per_element(problem.eps_r, mesh)[elements]
    sub = mesh.triangles[elements]
    # reuse the global routine on the gathered arrays
    g, area = _barycentric_gradients(mesh)
    g = g[elements]
    area = area[elements]
    nt = elements.size
    ia = np.empty((nt, 3), dtype=np.int64)
    ib = np.empty((nt, 3), dtype=np.int64)
    for k, (k1, k2) in enumerate(_LOCAL_EDGES):
        lo_first = sub[:, k1] < sub[:, k2]
        ia[:, k] = np.where(lo_first, k1, k2)
        ib[:, k] = np.where(lo_first, k2, k1)
    rows = np.arange(nt)[:, None]
    ga = g[rows, ia]
    gb = g[rows, ib]
    curl = 2.0 * (ga[:, :, 0] * gb[:, :, 1] - ga[:, :, 1] * gb[:, :, 0])
    Ke = (curl[:, :, None] * curl[:, None, :]) * (area / mu_e)[:, None, None]
    W = np.empty((nt, 3, 3, 2))
    for q in range(3):
        bc = _MID_BARY[q]
        W[:, :, q, :] = bc[ia][:, :, None] * gb - bc[ib][:, :, None] * ga
    Me = np.einsum("mkqd,mlqd->mkl", W, W) * (area * eps_e / 3.0)[:, None, None]
    Ae = Ke + problem.alpha * Me
    Ae = 0.5 * (Ae + Ae.transpose(0, 2, 1))

    gdof = sys.edge_dof[mesh.tri_edges[elements]]
    loc = np.where(gdof >= 0, np.searchsorted(dofs, gdof), -1)
    nd = 3
    r = np.repeat(loc, nd, axis=1).ravel()
    c = np.tile(loc, (1, nd)).ravel()
    v = Ae.reshape(-1)
    keep = (r >= 0) & (c >= 0)
    return ComplexSparseMatrix(_assemble(r[keep], c[keep], v[keep], dofs.size))


# ------------------------------------------------------------------ ASP


class AspPreconditioner:
    """Nodal auxiliary space preconditioner:
    diag(A)^-1 + P (L~ + alpha Q~)^-1 P^T + alpha^-1 C L^-1 C^T."""

    def __init__(self, sys: MaxwellSystem):
        d = sys.A.diagonal().real
        if np.any(d <= 0):
            raise SingularityError("A has non-positive diagonal entries")
        self._dinv = 1.0 / d
        self._P = sys.Pinterp
        self._C = sys.C
        self._alpha = sys.alpha
        aux = (sys.Ltilde + sys.alpha * sys.Qtilde).tocsc()
        self._aux_fact = lu_factorize(ComplexSparseMatrix(aux))
        self._l_fact = lu_factorize(ComplexSparseMatrix(sys.L.tocsc()))

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self._dinv * v
        out = out + self._P @ self._aux_fact.solve(self._P.T @ v)
        out = out + (self._C @ self._l_fact.solve(self._C.T @ v)) / self._alpha
        return out

    __call__ = apply


# ------------------------------------------------------------------ Schwarz


def build_edge_decomposition(problem: MaxwellProblem, sys: MaxwellSystem, N: int,
                             shape: str = "grid", grid=None, layers: int = 1,
                             mode: str = "minimum", factorize: bool = True
                             ) -> Decomposition:
    """Overlapping decomposition of the free-edge DOFs, with local Dirichlet
    factorizations and local Neumann matrices attached."""
    dec = decompose(problem.mesh, N, shape=shape, grid=grid, layers=layers,
                    mode=mode, element_dofs=sys.element_edge_dofs(),
                    n_dofs=sys.n_dofs)
    A = sys.A.to_scipy()
    for sd in dec.subdomains:
        sd.A_loc = ComplexSparseMatrix(A[np.ix_(sd.dofs, sd.dofs)])
        if factorize:
            sd.a_fact = lu_factorize(sd.A_loc)
        sd.neumann = assemble_maxwell_subset(problem, sys, sd.elements, sd.dofs)
    return dec


class OneLevelAdditiveSchwarz:
    """Plain additive Schwarz with local Dirichlet solves (SPD setting)."""

    def __init__(self, dec: Decomposition):
        for sd in dec.subdomains:
            if sd.a_fact is None:
                raise StructuralError("local Dirichlet factorizations missing")
        self.dec = dec

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dec.n_dofs)
        for sd in self.dec.subdomains:
            out[sd.dofs] += sd.a_fact.solve(v[sd.dofs])
        return out

    __call__ = apply


class TwoLevelAdditiveSchwarz:
    """Coarse-deflated additive Schwarz: H + (I - HA) AS (I - AH), or the
    plain additive combination.  Symmetric, so usable inside CG."""

    def __init__(self, one_level: OneLevelAdditiveSchwarz, coarse: CoarseSpace,
                 A, mode: str = "hybrid"):
        if mode not in ("additive", "hybrid"):
            raise StructuralError(f"unknown mode {mode!r}")
        self.one_level = one_level
        self.coarse = coarse
        self.A = A.to_scipy() if isinstance(A, ComplexSparseMatrix) else A
        self.mode = mode

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.coarse.n0 == 0:
            return self.one_level.apply(v)
        Hv = self.coarse.apply(v).real
        if self.mode == "additive":
            return self.one_level.apply(v) + Hv
        r = v - self.A @ Hv
        w = self.one_level.apply(r)
        w = w - self.coarse.apply(self.A @ w).real
        return w + Hv

    __call__ = apply


def build_free_cs(dec: Decomposition, sys: MaxwellSystem) -> CoarseSpace:
    """The gradient ("free") coarse space V_G = span{R_j^T D_j R_j C e_m}:
    partition-of-unity-localized near-kernel vectors, no eigensolves."""
    C = sys.C.tocsc()
    cols = []
    for sd in dec.subdomains:
        Gl = C[sd.dofs, :]
        touching = np.unique(Gl.nonzero()[1])
        if touching.size == 0:
            continue
        block = Gl[:, touching].toarray() * sd.weights[:, None]
        full = np.zeros((dec.n_dofs, touching.size))
        full[sd.dofs] = block
        cols.append(full)
    if not cols:
        Z = np.empty((dec.n_dofs, 0))
    else:
        Z = orthonormalize(np.hstack(cols))
    cs = CoarseSpace(Z, sys.A, provenance="maxwell-free")
    cs.dim_gradient_space = int(sys.C.shape[1])
    cs.dim_vg = int(Z.shape[1])
    return cs


def _bj_projector(sd, Gq: np.ndarray, A_loc: np.ndarray) -> np.ndarray:
    """b_j-orthogonal projector onto span(Gq), b_j(u, v) = (A_loc u, v)."""
    W = A_loc @ Gq
    M0 = Gq.T @ W
    cf = sla.cho_factor(0.5 * (M0 + M0.T))
    return Gq @ sla.cho_solve(cf, W.T)


def build_geneo_complement_cs(dec: Decomposition, sys: MaxwellSystem, tau: float = 10.0,
                              m_max: int = 20, free_cs: CoarseSpace | None = None
                              ) -> CoarseSpace:
    """GenEO modes in the b_j-orthogonal complement of the local gradient
    space: (I - xi^T) D A_j D (I - xi) V = lambda A~_j V, keep lambda > tau,
    lift by R_j^T D_j (I - xi) V, and append to the free coarse space."""
    if free_cs is None:
        free_cs = build_free_cs(dec, sys)
    C = sys.C.tocsc()
    new_cols = []
    counts = []
    flags = []
    for sd in dec.subdomains:
        A_loc = sd.A_loc.to_dense().real
        Gl = C[sd.dofs, :]
        touching = np.unique(Gl.nonzero()[1])
        n_loc = sd.n_local
        if touching.size:
            Gq = orthonormalize(Gl[:, touching].toarray())
            xi = _bj_projector(sd, Gq, A_loc)
        else:
            xi = np.zeros((n_loc, n_loc))
        P = np.eye(n_loc) - xi
        D = sd.weights
        lhs = P.T @ ((D[:, None] * A_loc) * D[None, :]) @ P
        lhs = 0.5 * (lhs + lhs.T)
        rhs = sd.neumann.to_dense().real
        try:
            np.linalg.cholesky(rhs)
        except np.linalg.LinAlgError:
            rhs = rhs + (1e-12 * np.trace(rhs) / n_loc) * np.eye(n_loc)
            flags.append(sd.index)
            warnings.warn(f"subdomain {sd.index}: Neumann matrix shift-regularized")
        pairs = dense_generalized_eig(lhs, rhs, which=("re_above", tau))
        pairs = pairs[:m_max]
        counts.append(len(pairs))
        for p in pairs:
            col = np.zeros(dec.n_dofs)
            col[sd.dofs] = D * (P @ p.vector.real)
            new_cols.append(col)
    if new_cols:
        Z = orthonormalize(np.hstack([free_cs.Z, np.column_stack(new_cols)]))
    else:
        Z = free_cs.Z
    cs = CoarseSpace(Z, sys.A, provenance="maxwell-geneo", flags=flags,
                     per_subdomain=counts)
    cs.dim_gradient_space = free_cs.dim_gradient_space
    cs.dim_vg = free_cs.dim_vg
    return cs


# ------------------------------------------------------------------ spectra


@dataclass
class FslCheck:
    c_lower: float
    c_upper: float
    eigenvalues: np.ndarray
    max_imag: float

    @property
    def ratio(self) -> float:
        return self.c_upper / self.c_lower


def fsl_bounds_check(A, preconditioner, max_dofs: int = 500) -> FslCheck:
    """Empirical spectral bounds of M^-1 A on a small instance: densify the
    preconditioned operator column by column and report the extreme real
    parts (SPD pairs must give a real positive spectrum)."""
    Ad = A.to_dense() if isinstance(A, ComplexSparseMatrix) else np.asarray(A)
    n = Ad.shape[0]
    if n > max_dofs:
        raise StructuralError(f"instance too large for the dense check ({n} > {max_dofs})")
    apply_M = preconditioner.apply if hasattr(preconditioner, "apply") else preconditioner
    M = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        M[:, i] = np.real(apply_M(e))
        e[i] = 0.0
    w = sla.eigvals(M @ Ad.real)
    return FslCheck(
        c_lower=float(w.real.min()),
        c_upper=float(w.real.max()),
        eigenvalues=w,
        max_imag=float(np.abs(w.imag).max()),
    )


def channel_field(mesh: Mesh, contrast: float, n_channels: int = 3,
                  base: float = 1.0, width_frac: float = 0.08) -> np.ndarray:
    """Per-element coefficient with `n_channels` horizontal high-value bands,
    positioned so they cross vertical subdomain interfaces."""
    c = mesh.centroids()
    _, _, ymin, ymax = mesh.bbox()
    height = ymax - ymin
    vals = np.full(mesh.n_triangles, base)
    for i in range(n_channels):
        y0 = ymin + height * (i + 0.75) / (n_channels + 0.5)
        band = np.abs(c[:, 1] - y0) < width_frac * height
        vals[band] = base * contrast
    return vals
