"""Orthonormal polynomial bases and quadrature rules on reference cells.

Reference cells are the unit triangle {x, y >= 0, x + y <= 1}, the unit
square [0, 1]^2, and the unit tetrahedron {x, y, z >= 0, x + y + z <= 1}.
Bases span the full total-degree space P_p on every cell kind (including
quads) and are orthonormal in the reference L2 inner product, so affine
cell maps keep local mass matrices diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import roots_jacobi

CELL_KINDS = ("triangle", "quad", "tetrahedron")

CELL_DIM = {"triangle": 2, "quad": 2, "tetrahedron": 3}

REF_MEASURE = {"triangle": 0.5, "quad": 1.0, "tetrahedron": 1.0 / 6.0}

REF_CENTROID = {
    "triangle": (1.0 / 3.0, 1.0 / 3.0),
    "quad": (0.5, 0.5),
    "tetrahedron": (0.25, 0.25, 0.25),
}


@dataclass(frozen=True)
class QuadRule:
    """Quadrature points and weights on a reference cell.

    Integrates all polynomials up to the requested total degree exactly;
    weights sum to the reference-cell measure.
    """

    points: np.ndarray   # (nq, dim)
    weights: np.ndarray  # (nq,)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def _gauss_legendre_01(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1.0) / 2.0, w / 2.0


def _gauss_jacobi_01(n, alpha):
    # nodes/weights for int_0^1 (1-u)^alpha f(u) du
    t, w = roots_jacobi(n, alpha, 0.0)
    return (t + 1.0) / 2.0, w / 2.0 ** (alpha + 1.0)


def _npoints(exactness: int) -> int:
    # n-point Gauss is exact to degree 2n - 1
    return exactness // 2 + 1


@lru_cache(maxsize=None)
def tensor_gauss(dim: int, exactness: int) -> QuadRule:
    """Tensor-product Gauss rule on [0,1]^dim, exact to `exactness` per axis."""
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    x, w = _gauss_legendre_01(_npoints(exactness))
    axes = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=-1)
    wts = np.ones(pts.shape[0])
    for a in np.meshgrid(*([w] * dim), indexing="ij"):
        wts *= a.ravel()
    return _freeze_rule(pts, wts)


@lru_cache(maxsize=None)
def simplex_quadrature(dim: int, exactness: int) -> QuadRule:
    """Quadrature on the unit simplex, exact for all total degrees <= `exactness`.

    Built by the collapsed-coordinate (Duffy) construction with Gauss-Jacobi
    weights absorbing the map Jacobian, so any exactness is available and all
    weights stay positive.
    """
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    n = _npoints(exactness)
    if dim == 1:
        x, w = _gauss_legendre_01(n)
        return _freeze_rule(x[:, None], w)
    if dim == 2:
        a, wa = _gauss_jacobi_01(n, 1.0)
        b, wb = _gauss_legendre_01(n)
        A, B = np.meshgrid(a, b, indexing="ij")
        x = A.ravel()
        y = (B * (1.0 - A)).ravel()
        wts = np.outer(wa, wb).ravel()
        return _freeze_rule(np.stack([x, y], axis=-1), wts)
    if dim == 3:
        a, wa = _gauss_jacobi_01(n, 2.0)
        b, wb = _gauss_jacobi_01(n, 1.0)
        c, wc = _gauss_legendre_01(n)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        x = A.ravel()
        y = (B * (1.0 - A)).ravel()
        z = (C * (1.0 - A) * (1.0 - B)).ravel()
        wts = (wa[:, None, None] * wb[None, :, None] * wc[None, None, :]).ravel()
        return _freeze_rule(np.stack([x, y, z], axis=-1), wts)
    raise ValueError(f"unsupported dimension {dim}")


def cell_quadrature(cell_kind: str, exactness: int) -> QuadRule:
    """Rule on the reference cell of the given kind."""
    if cell_kind == "quad":
        return tensor_gauss(2, exactness)
    if cell_kind == "triangle":
        return simplex_quadrature(2, exactness)
    if cell_kind == "tetrahedron":
        return simplex_quadrature(3, exactness)
    raise ValueError(f"unknown cell kind {cell_kind!r}")


def _freeze_rule(pts, wts):
    pts = np.ascontiguousarray(pts, dtype=float)
    wts = np.ascontiguousarray(wts, dtype=float)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts)


def space_dimension(dim: int, p: int) -> int:
    """dim P_p = C(p + d, d)."""
    return math.comb(p + dim, dim)


def total_degree_exponents(dim: int, p: int) -> np.ndarray:
    """Monomial exponents of P_p in graded order, constant first."""
    exps = []
    if dim == 2:
        for total in range(p + 1):
            for i in range(total, -1, -1):
                exps.append((i, total - i))
    elif dim == 3:
        for total in range(p + 1):
            for i in range(total, -1, -1):
                for j in range(total - i, -1, -1):
                    exps.append((i, j, total - i - j))
    else:
        raise ValueError(f"unsupported dimension {dim}")
    return np.array(exps, dtype=int)


def _power_table(shifted, max_exp):
    # pows[d, e, q] = shifted[q, d] ** e
    nq, dim = shifted.shape
    pows = np.ones((dim, max_exp + 1, nq))
    for d in range(dim):
        for e in range(1, max_exp + 1):
            pows[d, e] = pows[d, e - 1] * shifted[:, d]
    return pows


@dataclass(frozen=True)
class BasisSet:
    """L2-orthonormal polynomial basis of total degree `degree` on a reference cell.

    Basis functions are linear combinations of monomials in coordinates
    centered at the reference centroid: basis_i = sum_j coeffs[i, j] * mono_j.
    """

    cell_kind: str
    degree: int
    size: int
    exponents: np.ndarray  # (size, dim)
    coeffs: np.ndarray     # (size, size)

    @property
    def dim(self) -> int:
        return CELL_DIM[self.cell_kind]

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Basis values at reference points; shape (size, nq)."""
        points = np.asarray(points, dtype=float)
        shifted = points - np.asarray(REF_CENTROID[self.cell_kind])
        max_exp = int(self.exponents.max(initial=0))
        pows = _power_table(shifted, max_exp)
        mono = np.ones((self.size, points.shape[0]))
        for d in range(self.dim):
            mono *= pows[d, self.exponents[:, d]]
        return self.coeffs @ mono

    def eval_grad(self, points: np.ndarray) -> np.ndarray:
        """Reference-coordinate gradients at points; shape (size, nq, dim)."""
        points = np.asarray(points, dtype=float)
        shifted = points - np.asarray(REF_CENTROID[self.cell_kind])
        nq = points.shape[0]
        max_exp = int(self.exponents.max(initial=0))
        pows = _power_table(shifted, max_exp)
        grad_mono = np.zeros((self.size, nq, self.dim))
        for r in range(self.dim):
            term = np.ones((self.size, nq))
            for d in range(self.dim):
                e = self.exponents[:, d].copy()
                if d == r:
                    e = np.maximum(e - 1, 0)
                term *= pows[d, e]
            grad_mono[:, :, r] = self.exponents[:, r, None] * term
        return np.einsum("ij,jqr->iqr", self.coeffs, grad_mono)


@lru_cache(maxsize=None)
def orthonormal_basis(cell_kind: str, p: int) -> BasisSet:
    """Orthonormalized monomial basis spanning exactly P_p on the reference cell."""
    if cell_kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {cell_kind!r}")
    if p < 0:
        raise ValueError("degree must be >= 0")
    dim = CELL_DIM[cell_kind]
    exps = total_degree_exponents(dim, p)
    m = exps.shape[0]

    raw = BasisSet(cell_kind, p, m, exps, np.eye(m))
    rule = cell_quadrature(cell_kind, 2 * p)
    vals = raw.eval(rule.points)                     # (m, nq)
    sw = np.sqrt(rule.weights)
    # QR with one re-orthogonalization pass keeps the Gram matrix at
    # machine-precision identity through p = 7 despite monomial conditioning.
    q1, r1 = np.linalg.qr(vals.T * sw[:, None])
    q2, r2 = np.linalg.qr(q1)
    r = r2 @ r1
    sign = np.sign(np.diag(r))
    sign[sign == 0] = 1.0
    r = sign[:, None] * r
    coeffs = solve_triangular(r, np.eye(m)).T
    coeffs.setflags(write=False)
    exps.setflags(write=False)
    return BasisSet(cell_kind, p, m, exps, coeffs)


def eval_basis_on_cell(basis: BasisSet, mesh, cell: int, ref_points: np.ndarray):
    """Values and physical gradients of `basis` on a mesh cell.

    Values are unchanged under the affine cell map; gradients transform by
    the inverse Jacobian transpose.
    """
    vals = basis.eval(ref_points)
    jinv = mesh.jac_inv[cell]
    grads = np.einsum("iqr,rs->iqs", basis.eval_grad(ref_points), jinv)
    return vals, grads
