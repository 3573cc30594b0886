"""Bilinear forms, load vectors and discrete norms.

All cells of a uniform mesh are translates of each other, so every cell and
face contribution is one reference matrix scattered through the dof maps.
Scaling with the cell size ``h`` is applied analytically: strain and
divergence forms are h-independent in 2D, masses scale with ``h**2`` and
the divergence coupling with ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .spaces import Quadrature, ReferenceElement, SpaceTriple


def default_penalty(k: int) -> float:
    return 4.0 * (k + 1) ** 2


@dataclass(frozen=True)
class ScaledParameters:
    lambda_hat: float = 1.0
    kappa_hat_inv: float = 1.0
    cs_hat: float = 0.0
    eta: float | None = None

    def __post_init__(self):
        if not self.lambda_hat > 0:
            raise ValueError("lambda_hat must be positive")
        if not self.kappa_hat_inv > 0:
            raise ValueError("kappa_hat_inv must be positive")
        if not self.cs_hat >= 0:
            raise ValueError("cs_hat must be non-negative")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")

    def penalty(self, k: int) -> float:
        return default_penalty(k) if self.eta is None else float(self.eta)

    def with_(self, **kw) -> "ScaledParameters":
        return replace(self, **kw)


def rescale(mu, lam, alpha, K, cs, tau) -> ScaledParameters:
    """Map physical Biot parameters to the scaled ones (isotropic permeability ``K``)."""
    for name, val in (("mu", mu), ("alpha", alpha), ("K", K), ("tau", tau)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    if cs < 0:
        raise ValueError("cs must be non-negative")
    return ScaledParameters(
        lambda_hat=lam / (2 * mu),
        kappa_hat_inv=alpha**2 / (2 * mu * tau * K),
        cs_hat=2 * mu * cs / alpha**2,
    )


# ---------------------------------------------------------------------------
# reference matrices

def _strain(grad):
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def _cell_reference(el: ReferenceElement, quad: Quadrature):
    val, grad, div = el.tabulate_rt(quad.points)
    w = quad.weights
    eps = _strain(grad)
    return {
        "strain": np.einsum("aqij,bqij,q->ab", eps, eps, w),
        "gradgrad": np.einsum("aqij,bqij,q->ab", grad, grad, w),
        "divdiv": np.einsum("aq,bq,q->ab", div, div, w),
        "mass": np.einsum("aqi,bqi,q->ab", val, val, w),
        "qdiv": np.einsum("aq,bq,q->ab", el.tabulate_q(quad.points), div, w),
    }


_SIDES = {
    # side: (reference points as function of t, outward normal)
    "left": (lambda t: np.stack([np.zeros_like(t), t], 1), np.array([-1.0, 0.0])),
    "right": (lambda t: np.stack([np.ones_like(t), t], 1), np.array([1.0, 0.0])),
    "bottom": (lambda t: np.stack([t, np.zeros_like(t)], 1), np.array([0.0, -1.0])),
    "top": (lambda t: np.stack([t, np.ones_like(t)], 1), np.array([0.0, 1.0])),
}


def _trace(el, quad, side, normal):
    val, grad, _ = el.tabulate_rt(_SIDES[side][0](quad.edge_points))
    return val, _strain(grad) @ normal, grad


def _nitsche(J, S, w, penalty, consistency=True):
    """``penalty (J, J) - (S, J) - (J, S)`` for traces ``J`` and fluxes ``S`` of shape (n, nt, 2)."""
    F = penalty * np.einsum("aqi,bqi,q->ab", J, J, w)
    if consistency:
        C = np.einsum("aqi,bqi,q->ab", J, S, w)
        F -= C + C.T
    return F


def _face_reference(el, quad, penalty, *, consistency=True):
    """Interior face matrices on the combined (plus, minus) dof set, keyed by orientation."""
    w = quad.edge_weights
    out = {}
    for orient, (ps, ms, n) in {"vertical": ("right", "left", np.array([1.0, 0.0])),
                                "horizontal": ("top", "bottom", np.array([0.0, 1.0]))}.items():
        vp, sp_, _ = _trace(el, quad, ps, n)
        vm, sm, _ = _trace(el, quad, ms, n)
        J = np.concatenate([vp, -vm])
        S = 0.5 * np.concatenate([sp_, sm])
        out[orient] = _nitsche(J, S, w, penalty, consistency)
    return out


def _boundary_reference(el, quad, penalty, *, consistency=True):
    out = {}
    for side, (_, n) in _SIDES.items():
        v, s, _ = _trace(el, quad, side, n)
        out[side] = _nitsche(v, s, quad.edge_weights, penalty, consistency)
    return out


# ---------------------------------------------------------------------------
# scatter

def _scatter(row_map, col_map, local, shape, chunk=4096):
    """Sum of ``local`` (one shared reference matrix) over all rows of the maps.

    Entries whose row or column map is negative are dropped.
    """
    local = np.where(np.abs(local) > 1e-14 * max(np.abs(local).max(), 1e-300), local, 0.0)
    ii, jj = np.nonzero(local)
    vals = local[ii, jj]
    out = sp.csr_matrix(shape)
    for s in range(0, row_map.shape[0], chunk):
        r = row_map[s:s + chunk][:, ii].ravel()
        c = col_map[s:s + chunk][:, jj].ravel()
        v = np.broadcast_to(vals, (min(chunk, row_map.shape[0] - s), vals.size)).ravel()
        keep = (r >= 0) & (c >= 0)
        out = out + sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=shape).tocsr()
    out.sum_duplicates()
    return out


def _face_maps(space: SpaceTriple, rt_map):
    vert, horiz = space.mesh.interior_faces()
    return {
        "vertical": np.hstack([rt_map[vert.plus], rt_map[vert.minus]]),
        "horizontal": np.hstack([rt_map[horiz.plus], rt_map[horiz.minus]]),
    }


def _dg_matrix(space, cell_key, penalty, consistency, h_penalty=None):
    el, mesh = space.element, space.mesh
    quad = Quadrature.for_degree(space.k)
    h_penalty = mesh.h if h_penalty is None else h_penalty
    pen = penalty * mesh.h / h_penalty
    shape = (space.n_free, space.n_free)
    fm = space.free_map
    A = _scatter(fm, fm, _cell_reference(el, quad)[cell_key], shape)
    fmaps = _face_maps(space, fm)
    for orient, F in _face_reference(el, quad, pen, consistency=consistency).items():
        if fmaps[orient].size:
            A = A + _scatter(fmaps[orient], fmaps[orient], F, shape)
    bfaces = mesh.boundary_faces()
    for side, F in _boundary_reference(el, quad, pen, consistency=consistency).items():
        cmap = fm[bfaces[side].plus]
        A = A + _scatter(cmap, cmap, F, shape)
    return A.tocsr()


@lru_cache(maxsize=None)
def coercivity_margin(k: int, eta: float, n: int = 2) -> float:
    """Smallest generalized eigenvalue of ``e_h`` against the broken H1 norm
    on an ``n x n`` mesh; positive iff the penalty ``eta`` is large enough."""
    import scipy.linalg as sla

    from .mesh import build_uniform_mesh
    from .spaces import build_spaces

    space = build_spaces(build_uniform_mesh(n), k)
    E = _dg_matrix(space, "strain", eta, True).toarray()
    N = _dg_matrix(space, "gradgrad", 1.0, False).toarray()
    return float(sla.eigh(E, N, eigvals_only=True)[0])


def assemble_eeh(space: SpaceTriple, params: ScaledParameters, mesh_h_for_penalty=None):
    """Interior-penalty symmetric strain form on the displacement space.

    The penalty is checked once per ``(k, eta)`` for coercivity on a 2x2 mesh.
    """
    eta = params.penalty(space.k)
    if coercivity_margin(space.k, eta) <= 0:
        raise ValueError(f"penalty eta={eta} is below the coercivity threshold for k={space.k}")
    return _dg_matrix(space, "strain", eta, True, mesh_h_for_penalty)


def dg_norm_matrix(space: SpaceTriple) -> sp.csr_matrix:
    """Gram matrix of the broken H1 norm with 1/h jump and boundary terms."""
    return _dg_matrix(space, "gradgrad", 1.0, False)


def _cell_matrix(space, key, scale, row_map=None, col_map=None, shape=None):
    quad = Quadrature.for_degree(space.k)
    local = _cell_reference(space.element, quad)[key] * scale
    row_map = space.free_map if row_map is None else row_map
    col_map = space.free_map if col_map is None else col_map
    shape = shape or (space.n_free, space.n_free)
    return _scatter(row_map, col_map, local, shape)


def rt_mass(space: SpaceTriple) -> sp.csr_matrix:
    """RT mass matrix on the free dofs."""
    return _cell_matrix(space, "mass", space.mesh.h**2)


def assemble_kform(space: SpaceTriple, params: ScaledParameters) -> sp.csr_matrix:
    """Scaled velocity mass on the free V dofs."""
    return _cell_matrix(space, "mass", params.kappa_hat_inv * space.mesh.h**2)


def assemble_ddform(space: SpaceTriple) -> sp.csr_matrix:
    """(div u, div phi) on the free RT dofs."""
    return _cell_matrix(space, "divdiv", 1.0)


def assemble_div_coupling(space: SpaceTriple, which: str = "u") -> sp.csr_matrix:
    """``B[q, phi] = (q, div phi)`` with rows in Q_h and columns in the u or v block."""
    return _cell_matrix(space, "qdiv", space.mesh.h, space.p_map, space.free_map,
                        (space.n_p, space.n_free))


def pressure_mass(space: SpaceTriple) -> sp.csr_matrix:
    return sp.identity(space.n_p, format="csr") * space.mesh.h**2


# ---------------------------------------------------------------------------
# operators

@dataclass
class BlockOperator:
    """Monolithic saddle-point operator with its blocks."""

    space: SpaceTriple
    params: ScaledParameters
    A_uu: sp.csr_matrix
    A_vv: sp.csr_matrix
    B_u: sp.csr_matrix
    B_v: sp.csr_matrix
    M_p: sp.csr_matrix
    matrix: sp.csr_matrix

    @property
    def offsets(self):
        return self.space.offsets

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def singular(self) -> bool:
        """True when the constant pressure is in the kernel."""
        return self.params.cs_hat == 0

    def __matmul__(self, x):
        return self.matrix @ x


def assemble_mixed(space: SpaceTriple, params: ScaledParameters, *, h_penalty=None) -> BlockOperator:
    E = assemble_eeh(space, params, h_penalty)
    A_uu = (E + params.lambda_hat * assemble_ddform(space)).tocsr()
    A_vv = assemble_kform(space, params)
    B_u = assemble_div_coupling(space, "u")
    B_v = assemble_div_coupling(space, "v")
    M_p = pressure_mass(space)
    C = -params.cs_hat * M_p if params.cs_hat else None
    matrix = sp.bmat([[A_uu, None, -B_u.T],
                      [None, A_vv, -B_v.T],
                      [-B_u, -B_v, C]], format="csr")
    if C is None:
        matrix.resize(space.n_total, space.n_total)
    return BlockOperator(space, params, A_uu, A_vv, B_u, B_v, M_p, matrix)


@dataclass
class SpdOperator:
    """Pressure-eliminated operator ``E_h + D`` on U_h x V_h (free dofs)."""

    space: SpaceTriple
    params: ScaledParameters
    E: sp.csr_matrix
    D: sp.csr_matrix
    matrix: sp.csr_matrix

    @property
    def n_total(self):
        return self.space.n_u + self.space.n_v

    @property
    def singular(self) -> bool:
        return False

    def __matmul__(self, x):
        return self.matrix @ x


def assemble_spd(space: SpaceTriple, params: ScaledParameters, *, h_penalty=None) -> SpdOperator:
    if not params.cs_hat > 0:
        raise ValueError("pressure elimination needs cs_hat > 0")
    E = sp.block_diag([assemble_eeh(space, params, h_penalty), assemble_kform(space, params)],
                      format="csr")
    Drt = assemble_ddform(space)
    Dsum = sp.bmat([[Drt, Drt], [Drt, Drt]], format="csr")
    Dlam = sp.block_diag([params.lambda_hat * Drt, sp.csr_matrix((space.n_v, space.n_v))],
                         format="csr")
    D = (Dlam + Dsum / params.cs_hat).tocsr()
    return SpdOperator(space, params, E, D, (E + D).tocsr())


# ---------------------------------------------------------------------------
# load vectors

def _load_rt(space: SpaceTriple, f, npts):
    quad = Quadrature.gauss(npts)
    X = space.physical_points(quad.points)
    F = np.moveaxis(np.asarray(f(X[..., 0], X[..., 1])), 0, -1)  # (ncells, nq, 2)
    val, _, _ = space.element.tabulate_rt(quad.points)
    local = np.einsum("cqd,aqd,q->ca", F, val, quad.weights) * space.mesh.h**2
    full = np.bincount(space.rt_map.ravel(), local.ravel(), minlength=space.n_rt)
    return full[space.v_free]


def project_rhs_g(space: SpaceTriple, g) -> np.ndarray:
    """Coefficients of the L2 projection g_h (orthonormal cell basis)."""
    from .spaces import l2_project

    return l2_project(space, g)


def assemble_rhs(space: SpaceTriple, params: ScaledParameters, f=None, g=None, *, npts=None):
    """Load vector ``[(f, phi) | 0 | (g_h, q)]`` of the mixed system."""
    npts = npts or space.k + 6
    b = np.zeros(space.n_total)
    o = space.offsets
    if f is not None:
        b[o[0]:o[1]] = _load_rt(space, f, npts)
    if g is not None:
        b[o[2]:o[3]] = space.mesh.h**2 * project_rhs_g(space, g)
    return b


def assemble_spd_rhs(space: SpaceTriple, params: ScaledParameters, f=None, g=None, *, npts=None):
    """``(f, phi) - (g_h, div(phi + psi)) / cs_hat`` on U_h x V_h."""
    if not params.cs_hat > 0:
        raise ValueError("pressure elimination needs cs_hat > 0")
    npts = npts or space.k + 6
    b = np.zeros(space.n_u + space.n_v)
    if f is not None:
        b[:space.n_u] = _load_rt(space, f, npts)
    if g is not None:
        c = project_rhs_g(space, g)
        b[:space.n_u] -= assemble_div_coupling(space, "u").T @ c / params.cs_hat
        b[space.n_u:] -= assemble_div_coupling(space, "v").T @ c / params.cs_hat
    return b


def recover_pressure(space: SpaceTriple, params: ScaledParameters, uv: np.ndarray, g=None):
    """``p = -(div u + div v + g_h) / cs_hat`` as Q_h coefficients."""
    u, v = uv[:space.n_u], uv[space.n_u:]
    div = (assemble_div_coupling(space, "u") @ u + assemble_div_coupling(space, "v") @ v)
    div /= space.mesh.h**2
    if g is not None:
        div += project_rhs_g(space, g)
    return -div / params.cs_hat


# ---------------------------------------------------------------------------
# norms

def dg_norm_1(space: SpaceTriple, u: np.ndarray, N=None) -> float:
    N = dg_norm_matrix(space) if N is None else N
    return float(np.sqrt(max(u @ (N @ u), 0.0)))


def w_norm(space: SpaceTriple, w: np.ndarray, params: ScaledParameters) -> float:
    if not params.cs_hat > 0:
        raise ValueError("weighted norm needs cs_hat > 0")
    u, v = w[:space.n_u], w[space.n_u:]
    D = assemble_ddform(space)
    sq = (dg_norm_1(space, u) ** 2
          + params.lambda_hat * u @ (D @ u)
          + params.kappa_hat_inv * v @ (rt_mass(space) @ v)
          + (u + v) @ (D @ (u + v)) / params.cs_hat)
    return float(np.sqrt(sq))
