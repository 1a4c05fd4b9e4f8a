"""1D Bloch dispersion analysis for Lagrange and spectral elements.

For a uniform periodic mesh of order-p elements, impose the Bloch phase
exp(i*theta) across one macro-element (theta = k*h = 2*pi/G for G points per
wavelength, h the element size) and solve the reduced p-by-p generalized
eigenproblem K(theta) v = w_h^2 M(theta) v.  The acoustic branch is the
smallest eigenvalue (continuous with w_h -> 0 as theta -> 0); the normalized
phase velocity is c_h / c = w_h / k.

Finite elements use equispaced nodes with the consistent mass matrix;
spectral elements use Gauss-Lobatto-Legendre nodes with the GLL-collocated
(diagonal) mass.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import StructuralError

__all__ = ["DispersionSpec", "phase_velocity", "dispersion_curve"]


@dataclass(frozen=True)
class DispersionSpec:
    """Sweep description: order p, scheme, and the coarsest resolution G
    (curves are sampled for 1/G' in (0, 1/G])."""

    p: int
    scheme: str = "fe"   # fe: consistent mass; se: GLL lumped mass
    G: float = 2.0

    def __post_init__(self):
        if self.p < 1:
            raise StructuralError("order p must be >= 1")
        if self.scheme not in ("fe", "se"):
            raise StructuralError(f"unknown scheme {self.scheme!r}")
        if self.G <= 2.0 - 1e-12:
            raise StructuralError("G must satisfy the Nyquist bound G > 2")


def _gll_nodes(p: int) -> tuple[np.ndarray, np.ndarray]:
    """GLL nodes and weights on [0, 1]: endpoints plus roots of P_p'."""
    if p == 1:
        x = np.array([-1.0, 1.0])
    else:
        legc = np.zeros(p + 1)
        legc[p] = 1.0
        dleg = np.polynomial.legendre.legder(legc)
        interior = np.sort(np.polynomial.legendre.legroots(dleg))
        x = np.concatenate([[-1.0], interior, [1.0]])
    Pp = np.polynomial.legendre.legval(x, np.eye(p + 1)[p])
    w = 2.0 / (p * (p + 1) * Pp**2)
    return 0.5 * (x + 1.0), 0.5 * w


def _lagrange_polys(nodes: np.ndarray):
    polys = []
    for i, xi in enumerate(nodes):
        c = np.poly1d([1.0])
        for j, xj in enumerate(nodes):
            if j != i:
                c *= np.poly1d([1.0, -xj]) / (xi - xj)
        polys.append(c)
    return polys


@lru_cache(maxsize=None)
def _element_matrices(p: int, scheme: str):
    """Stiffness and mass on the reference element [0, 1] (h = 1)."""
    if scheme == "se":
        nodes, gll_w = _gll_nodes(p)
    else:
        nodes = np.linspace(0.0, 1.0, p + 1)
        gll_w = None
    polys = _lagrange_polys(nodes)
    derivs = [c.deriv() for c in polys]
    gx, gw = np.polynomial.legendre.leggauss(p + 3)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    nd = p + 1
    K = np.empty((nd, nd))
    for i in range(nd):
        for j in range(nd):
            K[i, j] = np.sum(gw * derivs[i](gx) * derivs[j](gx))
    K = 0.5 * (K + K.T)
    if scheme == "se":
        M = np.diag(gll_w)  # GLL collocation: diagonal by construction
    else:
        M = np.empty((nd, nd))
        for i in range(nd):
            for j in range(nd):
                M[i, j] = np.sum(gw * polys[i](gx) * polys[j](gx))
        M = 0.5 * (M + M.T)
    return K, M


def phase_velocity(p: int, scheme: str, G: float) -> float:
    """Normalized phase velocity c_h/c at G points per wavelength."""
    theta = 2.0 * np.pi / G
    if theta > np.pi + 1e-12:
        raise StructuralError("G < 2 is beyond the Nyquist limit (theta > pi)")
    K, M = _element_matrices(p, scheme)
    # Bloch reduction: local dofs (u_0 .. u_{p-1}, e^{i theta} u_0)
    Q = np.zeros((p + 1, p), dtype=complex)
    Q[:p, :p] = np.eye(p)
    Q[p, 0] = np.exp(1j * theta)
    Kq = Q.conj().T @ K @ Q
    Mq = Q.conj().T @ M @ Q
    w = sla.eigh(Kq, Mq, eigvals_only=True)
    lam = max(float(w[0]), 0.0)  # acoustic branch: smallest, goes to 0 with theta
    return float(np.sqrt(lam) / theta)


def dispersion_curve(spec: DispersionSpec, samples: int = 50):
    """Sampled (1/G, normalized phase velocity) pairs, finest resolution first."""
    if samples < 1:
        raise StructuralError("samples must be >= 1")
    inv_max = 1.0 / spec.G
    out = []
    for i in range(1, samples + 1):
        inv_g = inv_max * i / samples
        out.append((inv_g, phase_velocity(spec.p, spec.scheme, 1.0 / inv_g)))
    return out
