"""Schwarz preconditioners for the Helmholtz system.

One-level ORAS:

    M^-1 = sum_j R_j^T D_j B_j^-1 R_j,

with B_j the local Robin (impedance) matrices.  A two-level method adds the
coarse correction H = Z E^-1 Z* with E = Z* A Z, combined either additively
(M2^-1 = M^-1 + H) or in hybrid form

    M2^-1 = (I - HA) M^-1 (I - AH) + H.

Coarse space builders:
  grid         nodal interpolation from a nested coarse mesh,
  dtn          interface Dirichlet-to-Neumann modes (Schur complement vs
               interface mass), lifted by the discrete Helmholtz extension,
  hgeneo       eigenproblem D_j L_j D_j u = lambda A~_j u (Laplacian left
               side, Helmholtz Neumann right side),
  deltageneo   plain GenEO on the nearby positive operator -lap + k^2.

Spectral coarse bases are orthonormalized before forming E to guard against
redundant modes across overlapping subdomains.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .decomposition import Decomposition
from .errors import SingularityError, StructuralError
from .helmholtz import AssembledSystem, HelmholtzProblem, assemble_helmholtz_subset
from .linalg import (
    ComplexSparseMatrix,
    dense_generalized_eig,
    lu_factorize,
    orthonormalize,
)
from .mesh import Mesh

__all__ = [
    "EigenSelection",
    "OneLevelOras",
    "CoarseSpace",
    "TwoLevel",
    "build_grid_cs",
    "build_dtn_cs",
    "build_hgeneo_cs",
    "build_deltageneo_cs",
    "dtn_interface_eigenpairs",
]


@dataclass(frozen=True)
class EigenSelection:
    """Mode selection for spectral coarse spaces.

    rule "re_below" keeps Re(lambda) < threshold (None means the subdomain
    wavenumber k_j, the DtN heuristic); "re_above" keeps Re(lambda) >
    threshold; "k_largest" keeps the m_max largest by real part;
    "abs_largest" keeps the m_max largest by magnitude (for indefinite
    pencils, whose troublesome quasi-resonant modes carry large |lambda| of
    arbitrary phase).  At most m_max modes per subdomain are kept either way.
    """

    rule: str = "re_above"
    threshold: float | None = 0.5
    m_max: int = 20

    def __post_init__(self):
        if self.rule not in ("re_below", "re_above", "k_largest", "abs_largest"):
            raise StructuralError(f"unknown selection rule {self.rule!r}")
        if self.m_max < 0:
            raise StructuralError("m_max must be nonnegative")

    def which(self, k_j: float):
        if self.rule == "re_below":
            thr = self.threshold if self.threshold is not None else k_j
            return ("re_below", thr)
        if self.rule == "re_above":
            return ("re_above", self.threshold)
        if self.rule == "abs_largest":
            return ("abs_largest", self.m_max)
        return ("k_largest", self.m_max)


class OneLevelOras:
    """Optimized restricted additive Schwarz: local Robin solves weighted by
    the partition of unity."""

    def __init__(self, dec: Decomposition):
        for sd in dec.subdomains:
            if sd.robin_fact is None:
                raise StructuralError("subdomain Robin factorizations missing")
        self.dec = dec

    @property
    def n_dofs(self) -> int:
        return self.dec.n_dofs

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dec.n_dofs, dtype=np.complex128)
        for sd in self.dec.subdomains:
            out[sd.dofs] += sd.weights * sd.robin_fact.solve(v[sd.dofs])
        return out

    __call__ = apply


class CoarseSpace:
    """Coarse basis Z with factorized coarse matrix E = Z* A Z.

    Z is dense (spectral modes) or sparse (grid interpolation); the coarse
    correction is H v = Z E^-1 Z* v.  n0 = 0 is a legal empty coarse space.
    """

    def __init__(self, Z, A, provenance: str, flags=None, per_subdomain=None):
        self.provenance = provenance
        self.flags = list(flags or [])
        self.per_subdomain = per_subdomain or []
        self._sparse = sp.issparse(Z)
        self.Z = Z
        if self.n0 == 0:
            self._solver = None
            return
        Aop = A.to_scipy() if isinstance(A, ComplexSparseMatrix) else A
        if self._sparse:
            E = (Z.conj().T @ (Aop @ Z)).tocsc()
            fact = lu_factorize(ComplexSparseMatrix(E))
            self.E = E
            self._solver = fact.solve
        else:
            AZ = Aop @ Z
            E = Z.conj().T @ AZ
            lu, piv = sla.lu_factor(E)
            self.E = E
            self._solver = lambda r, _f=(lu, piv): sla.lu_solve(_f, r)

    @property
    def n0(self) -> int:
        return self.Z.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Coarse correction H v = Z E^-1 Z* v."""
        if self.n0 == 0:
            return np.zeros_like(np.asarray(v, dtype=np.complex128))
        r = self.Z.conj().T @ v
        return self.Z @ self._solver(r)

    __call__ = apply


class TwoLevel:
    """Two-level combination of a one-level method and a coarse correction."""

    def __init__(self, one_level, coarse: CoarseSpace, A, mode: str = "hybrid"):
        if mode not in ("additive", "hybrid"):
            raise StructuralError(f"unknown two-level mode {mode!r}")
        self.one_level = one_level
        self.coarse = coarse
        self.A = A.to_scipy() if isinstance(A, ComplexSparseMatrix) else A
        self.mode = mode

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.coarse.n0 == 0:
            return self.one_level.apply(v)
        Hv = self.coarse.apply(v)
        if self.mode == "additive":
            return self.one_level.apply(v) + Hv
        r = v - self.A @ Hv
        w = self.one_level.apply(r)
        w = w - self.coarse.apply(self.A @ w)
        return w + Hv

    __call__ = apply


# ------------------------------------------------------------------ grid CS


def _p2_basis_at(order, bary):
    from .helmholtz import _shape_values

    return _shape_values(order, bary)


def _fine_to_coarse_elements(fine: Mesh, coarse: Mesh) -> np.ndarray:
    if fine is coarse:
        return np.arange(fine.n_triangles)
    chain = [fine]
    while chain[-1] is not coarse:
        parent = chain[-1].parent
        if parent is None:
            raise StructuralError("grid coarse space requires a nested (refined) mesh pair")
        chain.append(parent)
    mapping = np.arange(fine.n_triangles)
    for m in chain[:-1]:
        mapping = m.parent_triangle[mapping]
    return mapping


def build_grid_cs(problem: HelmholtzProblem, coarse_mesh: Mesh,
                  system: AssembledSystem) -> CoarseSpace:
    """Nodal interpolation coarse space from a nested coarse mesh.

    Z interpolates every coarse basis function to the fine Lagrange DOFs
    (exact on nested meshes), so coarse == fine gives Z = I.
    """
    fine = problem.mesh
    if coarse_mesh.order != fine.order:
        raise StructuralError("coarse and fine meshes must share the element order")
    f2c = _fine_to_coarse_elements(fine, coarse_mesh)

    # one incident fine element per fine DOF
    eldofs = fine.element_dofs()
    dof_elem = np.full(fine.n_dofs, -1, dtype=np.int64)
    for local in range(eldofs.shape[1]):
        dof_elem[eldofs[:, local]] = np.arange(fine.n_triangles)
    coords = fine.dof_coords()
    celem = f2c[dof_elem]

    tri = coarse_mesh.triangles[celem]
    p0 = coarse_mesh.vertices[tri[:, 0]]
    J = np.stack(
        [coarse_mesh.vertices[tri[:, 1]] - p0, coarse_mesh.vertices[tri[:, 2]] - p0],
        axis=-1,
    )
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    rhs = coords - p0
    xi = (J[:, 1, 1] * rhs[:, 0] - J[:, 0, 1] * rhs[:, 1]) / det
    eta = (-J[:, 1, 0] * rhs[:, 0] + J[:, 0, 0] * rhs[:, 1]) / det
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    vals = _p2_basis_at(coarse_mesh.order, bary)  # (n_fine, nd)

    cdofs = coarse_mesh.element_dofs()[celem]  # (n_fine, nd)
    rows = np.repeat(np.arange(fine.n_dofs), cdofs.shape[1])
    Z = sp.coo_matrix(
        (vals.ravel(), (rows, cdofs.ravel())),
        shape=(fine.n_dofs, coarse_mesh.n_dofs),
    ).tocsr()

    if system.dirichlet_dofs.size:
        mask = np.ones(fine.n_dofs)
        mask[system.dirichlet_dofs] = 0.0
        Z = sp.diags(mask) @ Z
        colnorm = np.sqrt(np.asarray(Z.multiply(Z.conj()).sum(axis=0)).ravel().real)
        Z = Z[:, colnorm > 1e-12]
    return CoarseSpace(Z, system.A, provenance="grid")


# ------------------------------------------------------------------ DtN CS


def _interior_interface_split(sd):
    gam = sd.interface_dofs
    all_idx = np.arange(sd.n_local)
    interior = np.setdiff1d(all_idx, gam, assume_unique=False)
    return interior, gam


def _schur_factor(sd):
    """Interior factorization and the interface Schur complement of the local
    Neumann matrix; shift-regularizes a singular interior block."""
    interior, gam = _interior_interface_split(sd)
    At = sd.neumann.to_scipy()
    A_II = At[np.ix_(interior, interior)].tocsc()
    A_IG = At[np.ix_(interior, gam)].toarray()
    A_GI = At[np.ix_(gam, interior)].toarray()
    A_GG = At[np.ix_(gam, gam)].toarray()
    flagged = False
    try:
        fact = lu_factorize(ComplexSparseMatrix(A_II))
    except SingularityError:
        eps = 1e-10 * max(np.abs(A_II.data).max(), 1.0)
        fact = lu_factorize(ComplexSparseMatrix(A_II + eps * sp.eye(A_II.shape[0])))
        flagged = True
        warnings.warn(f"subdomain {sd.index}: interior block shift-regularized")
    X = fact.solve(A_IG)  # A_II^-1 A_IG
    S = A_GG - A_GI @ X
    return interior, gam, X, S, flagged


def dtn_interface_eigenpairs(sd):
    """Unselected DtN eigenpairs of one subdomain: S u = lambda M_Gamma u."""
    if sd.interface_dofs is None or sd.interface_dofs.size == 0:
        return [], None
    interior, gam, X, S, _ = _schur_factor(sd)
    M_G = sd.interface_mass[np.ix_(gam, gam)].toarray()
    pairs = dense_generalized_eig(S, M_G, which=None)
    return pairs, (interior, gam, X)


def build_dtn_cs(dec: Decomposition, system: AssembledSystem,
                 selection: EigenSelection = EigenSelection("re_below", None, 20)
                 ) -> CoarseSpace:
    """DtN coarse space: interface modes with Re(lambda) below the local
    wavenumber, lifted into the subdomain by the discrete Helmholtz extension
    and weighted with the partition of unity."""
    cols = []
    flags = []
    counts = []
    for sd in dec.subdomains:
        if sd.interface_dofs is None or sd.interface_dofs.size == 0:
            warnings.warn(f"subdomain {sd.index} has an empty interface; skipped")
            counts.append(0)
            continue
        if selection.rule == "re_below" and selection.threshold is None and sd.k_max <= 0:
            counts.append(0)  # Laplace limit: Re(lambda) < k_j = 0 selects nothing
            continue
        interior, gam, X, S, flagged = _schur_factor(sd)
        if flagged:
            flags.append(sd.index)
        M_G = sd.interface_mass[np.ix_(gam, gam)].toarray()
        pairs = dense_generalized_eig(S, M_G, which=selection.which(sd.k_max))
        pairs = pairs[: selection.m_max]
        counts.append(len(pairs))
        for p in pairs:
            v = np.zeros(sd.n_local, dtype=np.complex128)
            v[gam] = p.vector
            v[interior] = -X @ p.vector
            col = np.zeros(dec.n_dofs, dtype=np.complex128)
            col[sd.dofs] = sd.weights * v
            cols.append(col)
    if not cols:
        Z = np.empty((dec.n_dofs, 0), dtype=np.complex128)
    else:
        Z = orthonormalize(np.column_stack(cols))
    return CoarseSpace(Z, system.A, provenance="dtn", flags=flags,
                       per_subdomain=counts)


# ------------------------------------------------------------------ GenEO-style


def _lift_selected(dec, sd, pairs, cols, weighted=True):
    for p in pairs:
        col = np.zeros(dec.n_dofs, dtype=np.complex128)
        col[sd.dofs] = (sd.weights * p.vector) if weighted else p.vector
        cols.append(col)


def build_hgeneo_cs(dec: Decomposition, system: AssembledSystem,
                    selection: EigenSelection = EigenSelection("abs_largest", None, 20),
                    pu_weighted_lift: bool = False) -> CoarseSpace:
    """H-GenEO: subdomain eigenproblems D_j L_j D_j u = lambda A~_j u with the
    Laplacian left-hand side and the Helmholtz Neumann matrix on the right.

    Default selection keeps the m_max modes of largest |lambda| per
    subdomain: these are the local quasi-resonances (small Helmholtz energy
    against Laplacian energy), which measurably capture the slow error of the
    one-level method, whereas a real-part threshold mostly picks bulk modes
    clustered near lambda = 1.  The modes are lifted by plain zero extension;
    the partition-of-unity-weighted lift is available but consistently needs
    noticeably more modes for the same iteration counts on wave problems.
    """
    L = system.L.to_scipy()
    cols = []
    counts = []
    for sd in dec.subdomains:
        Ld = L[np.ix_(sd.dofs, sd.dofs)].toarray()
        D = sd.weights
        lhs = (D[:, None] * Ld) * D[None, :]
        rhs = sd.neumann.to_dense()
        pairs = dense_generalized_eig(lhs, rhs, which=selection.which(sd.k_max))
        pairs = pairs[: selection.m_max]
        counts.append(len(pairs))
        _lift_selected(dec, sd, pairs, cols, weighted=pu_weighted_lift)
    if not cols:
        Z = np.empty((dec.n_dofs, 0), dtype=np.complex128)
    else:
        Z = orthonormalize(np.column_stack(cols))
    return CoarseSpace(Z, system.A, provenance="hgeneo", per_subdomain=counts)


def build_deltageneo_cs(dec: Decomposition, problem: HelmholtzProblem,
                        system: AssembledSystem,
                        selection: EigenSelection = EigenSelection("re_above", 0.5, 20)
                        ) -> CoarseSpace:
    """GenEO on the nearby positive operator -lap + k^2 (zeroth-order sign
    flipped, impedance dropped): D_j A+_j D_j u = lambda A~+_j u."""
    Apos = (system.L.to_scipy() + system.weighted_mass.to_scipy()).real.tocsr()
    cols = []
    counts = []
    flags = []
    for sd in dec.subdomains:
        Ad = Apos[np.ix_(sd.dofs, sd.dofs)].toarray()
        D = sd.weights
        lhs = (D[:, None] * Ad) * D[None, :]
        rhs = assemble_helmholtz_subset(
            problem, sd.elements, sd.dofs, sign_w=+1.0, impedance=False,
            dirichlet_dofs=system.dirichlet_dofs,
        ).to_dense().real
        try:
            np.linalg.cholesky(rhs)
        except np.linalg.LinAlgError:
            rhs = rhs + (1e-12 * np.trace(rhs).real / rhs.shape[0]) * np.eye(rhs.shape[0])
            flags.append(sd.index)
        pairs = dense_generalized_eig(lhs, rhs, which=selection.which(sd.k_max))
        pairs = pairs[: selection.m_max]
        counts.append(len(pairs))
        _lift_selected(dec, sd, pairs, cols)
    if not cols:
        Z = np.empty((dec.n_dofs, 0), dtype=np.complex128)
    else:
        Z = orthonormalize(np.column_stack(cols))
    return CoarseSpace(Z, system.A, provenance="deltageneo", per_subdomain=counts,
                       flags=flags)
