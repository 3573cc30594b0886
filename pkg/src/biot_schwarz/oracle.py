"""Brute-force reference computations on small problems.

Nothing here touches the Schwarz or Krylov code: only assembly and dense
linear algebra, so these results can check the iterative path.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .forms import (ScaledParameters, assemble_div_coupling, assemble_mixed, assemble_rhs,
                    assemble_spd, assemble_spd_rhs, dg_norm_matrix, pressure_mass, recover_pressure,
                    rt_mass, assemble_ddform)
from .linalg import MAX_DENSE, PseudoInverse, saddle_scaling
from .spaces import Quadrature, SpaceTriple


def _dense(A) -> np.ndarray:
    A = A.matrix if hasattr(A, "matrix") else A
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if max(A.shape) > MAX_DENSE:
        raise ValueError(f"oracle limited to {MAX_DENSE} dofs, got {A.shape[0]}")
    return A


def dense_solve(operator, rhs, *, rtol: float = 1e-12, p_mask=None, refine: int = 4) -> np.ndarray:
    """Minimum-norm solution by dense SVD (handles the constant-pressure kernel).

    The SVD is taken of the diagonally scaled matrix, and ``refine`` steps of
    iterative refinement with residuals in extended precision bring the
    result to the accuracy the stored matrix allows, even when its condition
    number approaches ``1 / eps``.
    """
    A = _dense(operator)
    b = np.asarray(rhs, dtype=float)
    solve = PseudoInverse(A, rtol, saddle_scaling(A, p_mask))
    x = solve(b)
    if refine:
        Al, bl = A.astype(np.longdouble), b.astype(np.longdouble)
        xl = x.astype(np.longdouble)
        for _ in range(refine):
            xl += solve((bl - Al @ xl).astype(float))
        x = xl.astype(float)
    return x


def _mixed_p_mask(space: SpaceTriple) -> np.ndarray:
    mask = np.zeros(space.n_total, dtype=bool)
    mask[space.offsets[2]:] = True
    return mask


def solve_mixed(space: SpaceTriple, params: ScaledParameters, f=None, g=None) -> np.ndarray:
    op = assemble_mixed(space, params)
    return dense_solve(op, assemble_rhs(space, params, f, g), p_mask=_mixed_p_mask(space))


def _orth_complement_constant(space: SpaceTriple) -> np.ndarray:
    """Orthonormal basis of the pressure vectors orthogonal to the constant."""
    c = np.zeros(space.n_p)
    c[space.p_map[:, 0]] = 1.0
    Q, _ = np.linalg.qr(np.column_stack([c, np.eye(space.n_p)]))
    return Q[:, 1:space.n_p]


def _inf_sup(B: np.ndarray, N: np.ndarray, Mq: np.ndarray, Z: np.ndarray) -> float:
    """``min_q max_phi (B phi, q) / (|phi|_N |q|_M)`` over ``q`` in span(Z)."""
    S = B @ np.linalg.solve(N, B.T)
    ev = sla.eigh(Z.T @ S @ Z, Z.T @ Mq @ Z, eigvals_only=True)
    return float(np.sqrt(max(ev[0], 0.0)))


def inf_sup_constants(space: SpaceTriple, *, include_constant: bool = False):
    """Discrete inf-sup constants ``(gamma_u, gamma_v)`` of the divergence coupling.

    ``gamma_u`` uses the broken H1 norm, ``gamma_v`` the H(div) norm. The
    constant pressure is excluded unless ``include_constant``.
    """
    if space.n_total > MAX_DENSE:
        raise ValueError(f"oracle limited to {MAX_DENSE} dofs")
    B = assemble_div_coupling(space).toarray()
    Mq = pressure_mass(space).toarray()
    Z = np.eye(space.n_p) if include_constant else _orth_complement_constant(space)
    N1 = dg_norm_matrix(space).toarray()
    Ndiv = (rt_mass(space) + assemble_ddform(space)).toarray()
    return _inf_sup(B, N1, Mq, Z), _inf_sup(B, Ndiv, Mq, Z)


def mass_balance_residual(space: SpaceTriple, params: ScaledParameters, x: np.ndarray,
                          g=None, *, p_degree: int | None = None, npts: int | None = None):
    """Pointwise ``-div u - div v - cs p - g_h`` at cell quadrature points and ``g_h`` there.

    ``p_degree`` evaluates the pressure through its degree-``p_degree``
    truncation (negative control for mismatched spaces).
    """
    from .spaces import l2_project

    quad = Quadrature.gauss(npts or space.k + 3)
    u, v, p = space.split(x)
    div = space.eval_rt(space.expand(u) + space.expand(v), quad.points, div=True)
    if p_degree is not None and p_degree < space.k:
        k = space.k
        keep = np.array([i <= p_degree and j <= p_degree for i in range(k + 1)
                         for j in range(k + 1)])
        p = (p.reshape(space.mesh.n_cells, -1) * keep).ravel()
    ph = space.eval_q(p, quad.points)
    gh = np.zeros_like(ph) if g is None else space.eval_q(l2_project(space, g), quad.points)
    return -div - params.cs_hat * ph - gh, gh


def mass_conservation_audit(x, g, params: ScaledParameters, space: SpaceTriple, **kw) -> float:
    """Max pointwise mass-balance residual relative to ``max |g_h|`` (absolute if ``g_h = 0``)."""
    res, gh = mass_balance_residual(space, params, x, g, **kw)
    scale = np.abs(gh).max()
    return float(np.abs(res).max() / (scale if scale > 0 else 1.0))


def spd_equivalence_check(params: ScaledParameters, space: SpaceTriple, f=None, g=None) -> float:
    """Largest relative L2 (coefficient) discrepancy between the mixed solve and the
    pressure-eliminated solve, over u, v and the recovered p."""
    if not params.cs_hat > 0:
        raise ValueError("equivalence check needs cs_hat > 0")
    x = solve_mixed(space, params, f, g)
    u, v, p = space.split(x)
    spd = assemble_spd(space, params)
    w = dense_solve(spd, assemble_spd_rhs(space, params, f, g))
    u2, v2 = w[:space.n_u], w[space.n_u:]
    p2 = recover_pressure(space, params, w, g)

    def rel(a, b):
        den = max(np.linalg.norm(a), np.linalg.norm(b))
        return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)

    return max(rel(u, u2), rel(v, v2), rel(p, p2))


def smallest_eigenvalue(A) -> float:
    """Smallest eigenvalue of the symmetric part of a small matrix."""
    A = _dense(A)
    return float(sla.eigvalsh(0.5 * (A + A.T))[0])
