"""Raviart-Thomas and discontinuous tensor-product spaces on uniform meshes.

The RT_k element on a rectangle is built as a tensor product. For the
x-component we take ``a_i(x) L_j(y)``, where ``L_j`` (``j <= k``) are the
Legendre polynomials orthonormal on [0, 1] and ``a_i`` is the basis of
P_{k+1} dual to the functionals {value at 0, value at 1, moments against
L_0 .. L_{k-1}}. The y-component is the mirror image. The basis is then
dual to the canonical RT degrees of freedom (face moments against P_k and
interior moments against Q_{k-1,k} x Q_{k,k-1}), so the interpolant is
computed functional by functional.

Every face degree of freedom refers to the face's global normal (+e_x for
vertical, +e_y for horizontal faces). Both neighbours use the same
coefficient, which makes normal continuity structural.

Pressure uses ``L_i(x) L_j(y)``; the local mass matrix is ``h**2 * I``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre as npleg
from numpy.polynomial import Legendre

from .mesh import Mesh, parent_cell


def legendre_01(j: int) -> Legendre:
    """Legendre polynomial of degree ``j`` orthonormal on [0, 1]."""
    c = np.zeros(j + 1)
    c[j] = np.sqrt(2 * j + 1)
    return Legendre(c, domain=[0.0, 1.0])


def gauss_01(npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = npleg.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class Quadrature:
    """Tensor Gauss rule on the reference square plus the matching edge rule."""

    points: np.ndarray  # (nq, 2)
    weights: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray

    @classmethod
    def gauss(cls, npts: int) -> "Quadrature":
        t, w = gauss_01(npts)
        X, Y = np.meshgrid(t, t, indexing="ij")
        W = np.outer(w, w)
        return cls(np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel(), t, w)

    @classmethod
    def for_degree(cls, k: int) -> "Quadrature":
        # k + 2 points integrate degree 2k + 3 exactly
        return cls.gauss(k + 2)


def _dual_p_kplus1(k: int) -> list[Legendre]:
    """Basis of P_{k+1} dual to {f(0), f(1), int f L_0, ..., int f L_{k-1}}."""
    m = k + 2
    t, w = gauss_01(k + 3)
    cand = [legendre_01(b) for b in range(m)]
    F = np.empty((m, m))
    for b, p in enumerate(cand):
        F[0, b] = p(0.0)
        F[1, b] = p(1.0)
        for i in range(k):
            F[2 + i, b] = np.sum(w * p(t) * legendre_01(i)(t))
    C = np.linalg.inv(F)  # column i: coefficients of the dual function i
    return [sum((C[b, i] * cand[b] for b in range(m)), Legendre([0.0], domain=[0, 1]))
            for i in range(m)]


class ReferenceElement:
    """RT_k x Q_k on the unit reference square."""

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("degree must be non-negative")
        self.k = k
        self.normal_basis = _dual_p_kplus1(k)
        self.tangent_basis = [legendre_01(j) for j in range(k + 1)]
        self.n_rt = 2 * (k + 1) * (k + 2)
        self.n_q = (k + 1) ** 2
        self.n_face = k + 1
        self.n_interior = self.n_rt - 4 * self.n_face
        half = (k + 2) * (k + 1)
        j = np.arange(k + 1)
        self.face_dofs = {
            "left": j,
            "right": (k + 1) + j,
            "bottom": half + j,
            "top": half + (k + 1) + j,
        }
        on_face = np.concatenate(list(self.face_dofs.values()))
        self.interior_dofs = np.setdiff1d(np.arange(self.n_rt), on_face)

    def _rt_index(self):
        """Yield ``(local, component, normal_index, tangent_index)``."""
        k = self.k
        for comp in (0, 1):
            for i in range(k + 2):
                for j in range(k + 1):
                    yield comp * (k + 2) * (k + 1) + i * (k + 1) + j, comp, i, j

    def tabulate_rt(self, points: np.ndarray):
        """Values ``(n_rt, npts, 2)``, reference gradients ``(n_rt, npts, 2, 2)``
        (``[..., component, derivative]``) and divergences ``(n_rt, npts)``."""
        points = np.atleast_2d(points)
        x, y = points[:, 0], points[:, 1]
        npts = len(x)
        val = np.zeros((self.n_rt, npts, 2))
        grad = np.zeros((self.n_rt, npts, 2, 2))
        for loc, comp, i, j in self._rt_index():
            a, da = self.normal_basis[i], self.normal_basis[i].deriv()
            L, dL = self.tangent_basis[j], self.tangent_basis[j].deriv()
            if comp == 0:
                val[loc, :, 0] = a(x) * L(y)
                grad[loc, :, 0, 0] = da(x) * L(y)
                grad[loc, :, 0, 1] = a(x) * dL(y)
            else:
                val[loc, :, 1] = L(x) * a(y)
                grad[loc, :, 1, 0] = dL(x) * a(y)
                grad[loc, :, 1, 1] = L(x) * da(y)
        div = grad[:, :, 0, 0] + grad[:, :, 1, 1]
        return val, grad, div

    def tabulate_q(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        x, y = points[:, 0], points[:, 1]
        k = self.k
        out = np.empty((self.n_q, len(x)))
        for i in range(k + 1):
            for j in range(k + 1):
                out[i * (k + 1) + j] = self.tangent_basis[i](x) * self.tangent_basis[j](y)
        return out

    def rt_dofs(self, field_ref, quad: Quadrature | None = None) -> np.ndarray:
        """Canonical RT degrees of freedom of a field given on the reference square.

        ``field_ref(points) -> (..., npts, 2)``; leading axes are kept, so a
        batch of cells can be handled at once. Returns ``(..., n_rt)``.
        """
        k = self.k
        quad = quad or Quadrature.gauss(k + 4)
        t, w = quad.edge_points, quad.edge_weights
        Lt = np.array([L(t) for L in self.tangent_basis])  # (k+1, nt)
        zero, one = np.zeros_like(t), np.ones_like(t)
        edges = {
            "left": (np.stack([zero, t], 1), 0),
            "right": (np.stack([one, t], 1), 0),
            "bottom": (np.stack([t, zero], 1), 1),
            "top": (np.stack([t, one], 1), 1),
        }
        first = field_ref(quad.points)
        out = np.zeros(first.shape[:-2] + (self.n_rt,))
        for name, (pts, comp) in edges.items():
            vals = field_ref(pts)[..., comp]  # (..., nt)
            out[..., self.face_dofs[name]] = np.einsum("...q,jq->...j", vals * w, Lt)
        if k > 0:
            P, W = quad.points, quad.weights
            half = (k + 2) * (k + 1)
            for comp in (0, 1):
                vals = first[..., comp] * W
                for i in range(2, k + 2):
                    for j in range(k + 1):
                        if comp == 0:
                            test = self.tangent_basis[i - 2](P[:, 0]) * self.tangent_basis[j](P[:, 1])
                        else:
                            test = self.tangent_basis[j](P[:, 0]) * self.tangent_basis[i - 2](P[:, 1])
                        out[..., comp * half + i * (k + 1) + j] = vals @ test
        return out

    def q_dofs(self, field_ref, quad: Quadrature | None = None) -> np.ndarray:
        quad = quad or Quadrature.gauss(self.k + 4)
        vals = field_ref(quad.points)  # (..., npts)
        return np.einsum("...q,aq->...a", vals * quad.weights, self.tabulate_q(quad.points))


def tabulate(element: ReferenceElement, points):
    """RT values and divergences at reference points."""
    val, _, div = element.tabulate_rt(points)
    return val, div


class SpaceTriple:
    """Global numbering of RT_k x RT_k x Q_k on a mesh.

    Both RT blocks carry the essential condition ``w . n = 0`` on the boundary
    (the tangential displacement trace is handled weakly by the form), so u
    and v share the free-dof numbering. Layout of a monolithic vector:
    ``[u (free RT dofs) | v (free RT dofs) | p]``.
    """

    def __init__(self, mesh: Mesh, k: int):
        self.mesh = mesh
        self.k = k
        self.element = ReferenceElement(k)
        el, n = self.element, mesh.n
        nf = k + 1
        nvf, nhf = mesh.n_vertical_faces, mesh.n_horizontal_faces
        self.n_rt = (nvf + nhf) * nf + mesh.n_cells * el.n_interior

        ij = mesh.cell_coords()
        ix, iy = ij[:, 0], ij[:, 1]
        j = np.arange(nf)
        rt_map = np.empty((mesh.n_cells, el.n_rt), dtype=np.int64)
        rt_map[:, el.face_dofs["left"]] = mesh.vertical_face(ix, iy)[:, None] * nf + j
        rt_map[:, el.face_dofs["right"]] = mesh.vertical_face(ix + 1, iy)[:, None] * nf + j
        off = nvf * nf
        rt_map[:, el.face_dofs["bottom"]] = off + mesh.horizontal_face(ix, iy)[:, None] * nf + j
        rt_map[:, el.face_dofs["top"]] = off + mesh.horizontal_face(ix, iy + 1)[:, None] * nf + j
        off = (nvf + nhf) * nf
        rt_map[:, el.interior_dofs] = (off + np.arange(mesh.n_cells)[:, None] * el.n_interior
                                       + np.arange(el.n_interior))
        self.rt_map = rt_map

        bnd = np.concatenate([
            mesh.vertical_face(0, np.arange(n)), mesh.vertical_face(n, np.arange(n)),
        ])[:, None] * nf + j
        bnd_h = nvf * nf + np.concatenate([
            mesh.horizontal_face(np.arange(n), 0), mesh.horizontal_face(np.arange(n), n),
        ])[:, None] * nf + j
        self.constrained_v = np.sort(np.concatenate([bnd.ravel(), bnd_h.ravel()]))
        free = np.ones(self.n_rt, dtype=bool)
        free[self.constrained_v] = False
        self.v_free = np.flatnonzero(free)
        self.v_full_to_free = -np.ones(self.n_rt, dtype=np.int64)
        self.v_full_to_free[self.v_free] = np.arange(self.v_free.size)

        self.p_map = np.arange(mesh.n_cells * el.n_q).reshape(mesh.n_cells, el.n_q)

        self.n_u = self.v_free.size
        self.n_v = self.v_free.size
        self.n_p = mesh.n_cells * el.n_q
        self.offsets = np.array([0, self.n_u, self.n_u + self.n_v, self.n_u + self.n_v + self.n_p])

    @cached_property
    def free_map(self) -> np.ndarray:
        """Cell map into the free RT numbering, ``-1`` on constrained dofs."""
        return self.v_full_to_free[self.rt_map]

    @property
    def u_map(self) -> np.ndarray:
        return self.free_map

    @property
    def v_map(self) -> np.ndarray:
        return self.free_map

    @property
    def constrained_u(self) -> np.ndarray:
        return self.constrained_v

    @property
    def n_free(self) -> int:
        return self.v_free.size

    @property
    def n_total(self) -> int:
        return int(self.offsets[-1])

    def split(self, x: np.ndarray):
        o = self.offsets
        return x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]]

    def expand(self, w_free: np.ndarray) -> np.ndarray:
        """Full RT coefficient vector of a free-dof vector (u or v block)."""
        full = np.zeros(self.n_rt)
        full[self.v_free] = w_free
        return full

    expand_v = expand
    expand_u = expand

    def constant_pressure(self) -> np.ndarray:
        """Monolithic vector of the discrete constant pressure 1."""
        z = np.zeros(self.n_total)
        z[self.offsets[2] + self.p_map[:, 0]] = 1.0
        return z

    # evaluation -------------------------------------------------------
    def physical_points(self, ref_points: np.ndarray) -> np.ndarray:
        """``(ncells, npts, 2)`` physical coordinates of reference points in every cell."""
        return (self.mesh.cell_origins()[:, None, :]
                + self.mesh.h * np.atleast_2d(ref_points)[None, :, :])

    def eval_rt(self, coeffs: np.ndarray, ref_points: np.ndarray, *, div: bool = False):
        """Cellwise values ``(ncells, npts, 2)`` of a full RT coefficient vector
        (physical divergence ``(ncells, npts)`` instead if ``div``)."""
        val, _, dv = self.element.tabulate_rt(ref_points)
        loc = coeffs[self.rt_map]
        if div:
            return loc @ dv / self.mesh.h
        return np.einsum("ca,aqd->cqd", loc, val)

    def eval_q(self, coeffs: np.ndarray, ref_points: np.ndarray) -> np.ndarray:
        return coeffs[self.p_map] @ self.element.tabulate_q(ref_points)

    def eval_rt_at(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """RT field at arbitrary physical points (each assigned to one containing cell)."""
        cells, ref = self._locate(points)
        val, _, _ = self.element.tabulate_rt(ref)
        return np.einsum("pa,apd->pd", coeffs[self.rt_map[cells]], val)

    def eval_q_at(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        cells, ref = self._locate(points)
        return np.einsum("pa,ap->p", coeffs[self.p_map[cells]], self.element.tabulate_q(ref))

    def _locate(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n, h = self.mesh.n, self.mesh.h
        ij = np.clip(np.floor(points / h).astype(int), 0, n - 1)
        ref = points / h - ij
        return self.mesh.cell_index(ij[:, 0], ij[:, 1]), ref


def build_spaces(mesh: Mesh, k: int) -> SpaceTriple:
    return SpaceTriple(mesh, k)


def _cellwise_field(space: SpaceTriple, f):
    """Wrap a physical field ``f(x, y)`` as a batched function of reference points."""
    origins, h = space.mesh.cell_origins(), space.mesh.h

    def field_ref(ref):
        X = origins[:, None, :] + h * ref[None, :, :]
        return np.asarray(f(X[..., 0], X[..., 1]))

    return field_ref


def _scatter_set(n: int, cell_map: np.ndarray, local: np.ndarray) -> np.ndarray:
    out = np.zeros(n)
    out[cell_map.ravel()] = local.ravel()
    return out


def interpolate_rt(space: SpaceTriple, f) -> np.ndarray:
    """Canonical RT interpolant of ``f(x, y) -> (..., 2)`` as a full RT vector."""
    field_ref = _cellwise_field(space, lambda x, y: np.moveaxis(np.asarray(f(x, y)), 0, -1))
    local = space.element.rt_dofs(field_ref)
    return _scatter_set(space.n_rt, space.rt_map, local)


def l2_project(space: SpaceTriple, g) -> np.ndarray:
    """L2 projection of a scalar ``g(x, y)`` onto Q_k (cellwise, orthonormal basis)."""
    local = space.element.q_dofs(_cellwise_field(space, g))
    return _scatter_set(space.n_p, space.p_map, local)


def interpolate(space: SpaceTriple, field, kind: str = "u") -> np.ndarray:
    """Canonical interpolant into the ``u`` or ``v`` block (free dofs) or the ``p`` block.

    The boundary normal moments are dropped; they vanish for admissible fields.
    """
    if kind == "p":
        return l2_project(space, field)
    return interpolate_rt(space, field)[space.v_free]


def _child_matrices(element: ReferenceElement):
    """Local coarse->fine matrices for the four children ``(a, b)`` of a cell."""
    rt, q = {}, {}
    for a in (0, 1):
        for b in (0, 1):
            def coarse_rt(ref, a=a, b=b):
                pts = np.stack([(a + ref[:, 0]) / 2, (b + ref[:, 1]) / 2], 1)
                return element.tabulate_rt(pts)[0]  # (n_rt, npts, 2)

            def coarse_q(ref, a=a, b=b):
                pts = np.stack([(a + ref[:, 0]) / 2, (b + ref[:, 1]) / 2], 1)
                return element.tabulate_q(pts)

            rt[2 * a + b] = element.rt_dofs(coarse_rt).T  # (fine, coarse)
            q[2 * a + b] = element.q_dofs(coarse_q).T
    return rt, q


def _embed(fine_map, coarse_map, parents, child, mats, n_fine, n_coarse):
    flat = fine_map.ravel()
    _, first = np.unique(flat, return_index=True)
    cell, loc = np.divmod(first, fine_map.shape[1])
    rows, cols, vals = [], [], []
    for key, M in mats.items():
        sel = child[cell] == key
        c, lo = cell[sel], loc[sel]
        rows.append(np.repeat(flat[first[sel]], M.shape[1]))
        cols.append(coarse_map[parents[c]].ravel())
        vals.append(M[lo].ravel())
    P = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_fine, n_coarse)).tocsr()
    P.data[np.abs(P.data) < 1e-14] = 0.0
    P.eliminate_zeros()
    return P


def prolongation(coarse: SpaceTriple, fine: SpaceTriple, *, blocks=("u", "v", "p")) -> sp.csr_matrix:
    """Exact embedding of the coarse space into the fine space (monolithic layout).

    ``blocks=("u", "v")`` gives the embedding of the velocity pair only.
    """
    if fine.mesh.parent is not coarse.mesh:
        raise ValueError("fine mesh is not a refinement of the coarse mesh")
    if fine.k != coarse.k:
        raise ValueError("degree mismatch between coarse and fine spaces")
    rt, q = _child_matrices(fine.element)
    parents = parent_cell(fine.mesh)
    ij = fine.mesh.cell_coords()
    child = 2 * (ij[:, 0] % 2) + ij[:, 1] % 2
    P_rt = _embed(fine.rt_map, coarse.rt_map, parents, child, rt, fine.n_rt, coarse.n_rt)
    P_free = P_rt[fine.v_free][:, coarse.v_free]
    out = [P_free for b in ("u", "v") if b in blocks]
    if "p" in blocks:
        out.append(_embed(fine.p_map, coarse.p_map, parents, child, q, fine.n_p, coarse.n_p))
    return sp.block_diag(out, format="csr")
