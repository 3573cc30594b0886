"""Monolithic overlapping Schwarz preconditioners on vertex patches.

Local spaces keep the dofs interior to a 4-cell vertex patch: RT face dofs
on the four inner half-edges, all RT cell bubbles and all pressure dofs of
the four cells. Local matrices are Galerkin restrictions of the level
operator and are inverted by SVD, which drops the local constant-pressure
kernel when ``cs_hat = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import BlockOperator, ScaledParameters, SpdOperator, assemble_mixed, assemble_spd
from .linalg import (MeanZeroProjector, PseudoInverse, as_csr, extract_blocks,
                     multiplicative_sweep, saddle_scaling)
from .mesh import Mesh, build_hierarchy, refine, vertex_patches
from .spaces import SpaceTriple, build_spaces, prolongation

log = logging.getLogger(__name__)

MODES = ("additive", "multiplicative", "multilevel")


class KernelMismatch(RuntimeError):
    """A local or coarse matrix has an unexpected number of near-zero singular values."""


@dataclass(frozen=True)
class SchwarzConfig:
    mode: str = "multiplicative"
    omega: float = 0.25
    omega0: float = 1.0
    svd_tol: float = 1e-12
    levels: int = 2
    n_coarsest: int = 2
    dense_coarse_limit: int = 1000
    deflate_tol: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 < self.omega <= 1:
            raise ValueError("omega must lie in (0, 1]")
        if not 0 < self.omega0 <= 1:
            raise ValueError("omega0 must lie in (0, 1]")
        if not 0 < self.svd_tol <= 1e-6:
            raise ValueError("svd_tol must lie in (0, 1e-6]")
        if not 0 <= self.deflate_tol < 1:
            raise ValueError("deflate_tol must lie in [0, 1)")


def patch_dofs(space: SpaceTriple, blocks=("u", "v", "p")) -> np.ndarray:
    """Monolithic indices ``(J, m)`` of the interior dofs of every interior vertex patch.

    The column order is the same for every patch, so equal local matrices
    correspond to translated patches.
    """
    mesh, k = space.mesh, space.k
    nf = k + 1
    patches = vertex_patches(mesh)
    v = np.array([p.vertex_id for p in patches])
    vx, vy = np.divmod(v, mesh.n + 1)
    j = np.arange(nf)
    faces = np.hstack([
        mesh.vertical_face(vx, vy - 1)[:, None] * nf + j,
        mesh.vertical_face(vx, vy)[:, None] * nf + j,
        mesh.n_vertical_faces * nf + mesh.horizontal_face(vx - 1, vy)[:, None] * nf + j,
        mesh.n_vertical_faces * nf + mesh.horizontal_face(vx, vy)[:, None] * nf + j,
    ])
    cells = np.array([p.cells for p in patches])  # (J, 4)
    bubbles = space.rt_map[cells][:, :, space.element.interior_dofs].reshape(len(patches), -1)
    rt = np.hstack([faces, bubbles])
    cols = []
    if "u" in blocks:
        cols.append(space.v_full_to_free[rt] + space.offsets[0])
    if "v" in blocks:
        cols.append(space.v_full_to_free[rt] + space.offsets[1])
    if "p" in blocks:
        cols.append(space.p_map[cells].reshape(len(patches), -1) + space.offsets[2])
    idx = np.hstack(cols)
    assert (idx >= 0).all()
    return idx


def local_matrices(A: sp.csr_matrix, idx: np.ndarray) -> np.ndarray:
    """Dense Galerkin restrictions ``A[idx_j][:, idx_j]``, shape ``(J, m, m)``."""
    A = as_csr(A)
    out = np.zeros((idx.shape[0], idx.shape[1], idx.shape[1]))
    lookup = -np.ones(A.shape[1], dtype=np.int64)
    extract_blocks(A.indptr, A.indices, A.data, idx, lookup, out)
    return out


class PatchSolvers:
    """SVD pseudo-inverses of all patch matrices of one level.

    Translated patches usually have identical matrices; these share one
    factorization (``classes``), which keeps memory independent of the
    number of patches.
    """

    def __init__(self, A_local: sp.csr_matrix, idx: np.ndarray, *, expected_kernel: int,
                 p_mask: np.ndarray | None = None, svd_tol: float = 1e-12, chunk: int = 512,
                 strict: bool = True, local_constant: np.ndarray | None = None,
                 deflate_tol: float = 0.0):
        self.idx = np.ascontiguousarray(idx, dtype=np.int64)
        J, m = idx.shape
        A_local = as_csr(A_local)
        lookup = -np.ones(A_local.shape[1], dtype=np.int64)
        keys: dict[bytes, int] = {}
        self.classes = np.empty(J, dtype=np.int64)
        reps, solvers, deflated = [], [], []
        c_hat = None if local_constant is None else local_constant / np.linalg.norm(local_constant)
        for s in range(0, J, chunk):
            sub = self.idx[s:s + chunk]
            blocks = np.zeros((sub.shape[0], m, m))
            extract_blocks(A_local.indptr, A_local.indices, A_local.data, sub, lookup, blocks)
            for t, B in enumerate(blocks):
                scale = np.abs(B).max() or 1.0
                key = np.round(B / scale, 11).tobytes()
                c = keys.get(key)
                if c is None:
                    c = keys[key] = len(reps)
                    reps.append(B.copy())
                    scaling = saddle_scaling(B, p_mask)
                    pi = PseudoInverse(B, svd_tol, scaling)
                    # a near-singular local constant pressure (small storage
                    # coefficient) is treated like the exact kernel
                    near = (c_hat is not None and expected_kernel == 0
                            and pi.smallest_relative < deflate_tol
                            and abs(pi.weakest @ c_hat) > 0.99)
                    if near and pi.n_small == 0:
                        pi = PseudoInverse(B, svd_tol, scaling, drop=1)
                    solvers.append(pi)
                    deflated.append(near)
                self.classes[s + t] = c
        self.representatives = reps
        self.solvers = solvers
        self.deflated = np.array(deflated, dtype=bool)
        self.pinvs = np.ascontiguousarray(np.stack([p.matrix for p in solvers]))
        self.kernel_dims = np.array([p.n_small for p in solvers])
        bad = np.flatnonzero(self.kernel_dims != expected_kernel + self.deflated)
        if bad.size:
            msg = (f"{bad.size} patch classes with kernel dimension "
                   f"{sorted(set(self.kernel_dims[bad].tolist()))}, expected {expected_kernel}")
            if strict:
                raise KernelMismatch(msg)
            log.warning(msg)

    def __len__(self):
        return self.idx.shape[0]

    def local_matrix(self, j: int) -> np.ndarray:
        return self.representatives[self.classes[j]]

    def solver(self, j: int) -> PseudoInverse:
        return self.solvers[self.classes[j]]

    def additive(self, r: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """``sum_j R_j^T A_j^+ R_j r``."""
        out = np.zeros_like(r) if out is None else out
        R = r[self.idx]
        D = np.empty_like(R)
        for c, Pi in enumerate(self.pinvs):
            sel = self.classes == c
            D[sel] = R[sel] @ Pi.T
        out += np.bincount(self.idx.ravel(), D.ravel(), minlength=r.size)
        return out

    def sweep(self, AT: sp.csr_matrix, r: np.ndarray, y: np.ndarray, reverse: bool = False):
        """In-place multiplicative sweep updating correction ``y`` and residual ``r``."""
        multiplicative_sweep(AT.indptr, AT.indices, AT.data, self.idx, self.classes,
                             self.pinvs, r, y, reverse)


class CoarseSolver:
    """``omega0 * P A_H^+ P^T`` with the coarse operator assembled on the coarse mesh.

    Small coarse problems use a dense SVD; larger ones a sparse LU of the
    kernel-bordered matrix, which yields the same minimum-norm solution on
    the range.
    """

    def __init__(self, P: sp.csr_matrix, A_H: sp.csr_matrix, kernel: np.ndarray | None = None,
                 *, omega0: float = 1.0, svd_tol: float = 1e-12, dense_limit: int = 3000,
                 p_mask: np.ndarray | None = None, constant: np.ndarray | None = None):
        self.P = sp.csr_matrix(P)
        self.PT = self.P.T.tocsr()
        self.omega0 = omega0
        self.A_H = sp.csr_matrix(A_H)
        self.kernel = None if kernel is None else kernel / np.linalg.norm(kernel)
        n = A_H.shape[0]
        const = None if constant is None else constant / np.linalg.norm(constant)
        self.dense = n <= dense_limit
        if self.dense:
            dense = self.A_H.toarray()
            self._pinv = PseudoInverse(dense, svd_tol, saddle_scaling(dense, p_mask))
            self.kernel_dim = self._pinv.n_small
            expected = 0 if kernel is None else 1
            if kernel is None and const is not None and self.kernel_dim == 1:
                # storage coefficient below roundoff: the constant pressure is numerically singular
                expected = 1 if abs(self._pinv.kernel[:, 0] @ const) > 0.99 else 0
            if self.kernel_dim != expected:
                raise KernelMismatch(f"coarse kernel dimension {self.kernel_dim}, expected {expected}")
        elif self.kernel is None:
            self._lu = spla.splu(self.A_H.tocsc())
            self.kernel_dim = 0
        else:
            z = sp.csr_matrix(self.kernel[:, None])
            bordered = sp.bmat([[self.A_H, z], [z.T, None]], format="csc")
            self._lu = spla.splu(bordered)
            self.kernel_dim = 1

    def solve(self, rH: np.ndarray) -> np.ndarray:
        if self.dense:
            return self._pinv(rH)
        if self.kernel is None:
            return self._lu.solve(rH)
        rH = rH - self.kernel * (self.kernel @ rH)
        return self._lu.solve(np.append(rH, 0.0))[:-1]

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.omega0 * (self.P @ self.solve(self.PT @ r))


def _operator_matrix(op):
    return op.matrix if hasattr(op, "matrix") else sp.csr_matrix(op)


def _assemble_like(op, space: SpaceTriple):
    """Re-assemble ``op``'s kind of operator on another space (non-inherited forms)."""
    if isinstance(op, SpdOperator):
        return assemble_spd(space, op.params)
    return assemble_mixed(space, op.params)


def _blocks(op):
    return ("u", "v") if isinstance(op, SpdOperator) else ("u", "v", "p")


def _p_mask(op, space, m=None):
    """Boolean mask of pressure entries in a monolithic (or patch-local) layout."""
    n = space.n_total if m is None else m
    mask = np.zeros(n, dtype=bool)
    if not isinstance(op, SpdOperator):
        mask[n - (space.n_p if m is None else 4 * space.element.n_q):] = True
    return mask


def _kernel(op, space):
    if isinstance(op, SpdOperator) or op.params.cs_hat > 0:
        return None
    return space.constant_pressure()


def _constant(op, space):
    return None if isinstance(op, SpdOperator) else space.constant_pressure()


@dataclass
class PatchLevel:
    """One patch level: its solvers, the level operator ``A`` (and ``A^T`` in
    CSR for the sweep kernel) and the prolongation ``P`` from the previous
    level (``None`` on the first patch level)."""

    solvers: PatchSolvers
    A: sp.csr_matrix
    AT: sp.csr_matrix
    P: sp.csr_matrix | None = None


class SchwarzPreconditioner:
    """Two-level additive/multiplicative or multilevel multiplicative Schwarz.

    ``coarse`` is the exact solve on the coarsest mesh, prolongated to the
    first patch level; ``patch_levels`` lists the patch levels coarse to fine,
    the last one being the level of ``operator``.
    """

    def __init__(self, operator, coarse: CoarseSolver | None, patch_levels: list[PatchLevel],
                 config: SchwarzConfig, projector: MeanZeroProjector | None):
        self.operator = operator
        self.A = patch_levels[-1].A
        self.AT = patch_levels[-1].AT
        self.coarse = coarse
        self.patch_levels = patch_levels
        self.config = config
        self.projector = projector
        self.n_applications = 0

    @property
    def patches(self) -> PatchSolvers:
        return self.patch_levels[-1].solvers

    @property
    def shape(self):
        return self.A.shape

    def _finish(self, y):
        self.n_applications += 1
        return self.projector(y) if self.projector is not None else y

    def apply_additive(self, r: np.ndarray) -> np.ndarray:
        if len(self.patch_levels) != 1:
            raise NotImplementedError("additive composition is two-level only")
        y = np.zeros_like(r)
        if self.coarse is not None:
            y += self.coarse(r)
        self.patches.additive(r, y)
        return self._finish(self.config.omega * y)

    def apply_multiplicative(self, r: np.ndarray, reverse: bool = False) -> np.ndarray:
        """One sweep ``(I - E) A^+ r``: coarse solve, then on every patch level
        (coarse to fine) the defect with respect to that level's operator and
        one patch sweep. ``reverse`` runs the adjoint order of the two-level
        method (patches last to first, coarse last)."""
        if reverse:
            return self._finish(self._reverse_sweep(r))
        # residual transported to every patch level, coarsest first
        res = [r]
        for lvl in reversed(self.patch_levels[1:]):
            res.append(lvl.P.T @ res[-1])
        res.reverse()
        y = self.coarse(res[0]) if self.coarse is not None else np.zeros_like(res[0])
        for lvl, rl in zip(self.patch_levels, res):
            if lvl.P is not None:
                y = lvl.P @ y
            d = rl - lvl.A @ y if y.any() else rl.copy()
            lvl.solvers.sweep(lvl.AT, d, y)
        return self._finish(y)

    def _reverse_sweep(self, r):
        if len(self.patch_levels) != 1:
            raise NotImplementedError("reverse sweep is only defined for two-level methods")
        y = np.zeros_like(r)
        res = r.copy()
        self.patches.sweep(self.AT, res, y, reverse=True)
        if self.coarse is not None:
            y += self.coarse(res)
        return y

    def __call__(self, r: np.ndarray) -> np.ndarray:
        if self.config.mode == "additive":
            return self.apply_additive(r)
        return self.apply_multiplicative(r)

    def error_propagation(self, w: np.ndarray, reverse: bool = False) -> np.ndarray:
        """``E w = w - M A w``."""
        Aw = self.A @ w
        My = self.apply_multiplicative(Aw, reverse) if self.config.mode != "additive" \
            else self.apply_additive(Aw)
        return w - My


def _projector_for(op, space):
    return MeanZeroProjector.for_space(space) if _kernel(op, space) is not None else None


def _local_constant(op, space, m):
    """Patch-local vector of the constant pressure on the four cells."""
    if isinstance(op, SpdOperator):
        return None
    c = np.zeros(m)
    nq = space.element.n_q
    c[m - 4 * nq::nq] = 1.0
    return c


def build_patch_solvers(operator, space: SpaceTriple | None = None, *, svd_tol=1e-12,
                        deflate_tol=1e-6, strict=True) -> PatchSolvers:
    space = space or operator.space
    idx = patch_dofs(space, _blocks(operator))
    m = idx.shape[1]
    expected = 1 if _kernel(operator, space) is not None else 0
    return PatchSolvers(_operator_matrix(operator), idx, expected_kernel=expected,
                        p_mask=_p_mask(operator, space, m), svd_tol=svd_tol,
                        strict=strict, local_constant=_local_constant(operator, space, m),
                        deflate_tol=deflate_tol)


def build_coarse_solver(operator, fine: SpaceTriple, coarse: SpaceTriple,
                        config: SchwarzConfig, coarse_operator=None) -> CoarseSolver:
    op_H = coarse_operator or _assemble_like(operator, coarse)
    P = prolongation(coarse, fine, blocks=_blocks(operator))
    return CoarseSolver(P, _operator_matrix(op_H), _kernel(operator, coarse), omega0=config.omega0,
                        svd_tol=config.svd_tol, dense_limit=config.dense_coarse_limit,
                        p_mask=_p_mask(operator, coarse), constant=_constant(operator, coarse))


def build_two_level(operator, config: SchwarzConfig | None = None, *, coarse: bool = True
                    ) -> SchwarzPreconditioner:
    """Two-level preconditioner with coarse mesh ``H = 2h`` (the fine mesh's parent)."""
    config = config or SchwarzConfig()
    space = operator.space
    patches = build_patch_solvers(operator, space, svd_tol=config.svd_tol,
                                  deflate_tol=config.deflate_tol)
    cs = None
    if coarse:
        parent = space.mesh.parent
        if parent is None:
            if space.mesh.n % 2:
                raise ValueError("coarse level needs an even number of cells per side")
            parent = Mesh(space.mesh.n // 2)
            space = build_spaces(refine(parent), space.k)
        cs = build_coarse_solver(operator, space, build_spaces(parent, space.k), config)
    A = as_csr(_operator_matrix(operator))
    return SchwarzPreconditioner(operator, cs, [PatchLevel(patches, A, as_csr(A.T))], config,
                                 _projector_for(operator, operator.space))


def build_multilevel(operators: list, config: SchwarzConfig | None = None) -> SchwarzPreconditioner:
    """Multilevel multiplicative Schwarz on a nested hierarchy (coarsest operator first).

    Level 0 is solved exactly; every finer level gets one patch sweep. Each
    level uses its own (non-inherited) operator both for the local solves and
    for updating its defect, so local solves and residuals stay consistent.
    """
    config = config or SchwarzConfig(mode="multilevel")
    if len(operators) < 2:
        raise ValueError("multilevel Schwarz needs at least two levels")
    spaces = [op.space for op in operators]
    for c, f in zip(spaces, spaces[1:]):
        if f.mesh.parent is not c.mesh:
            raise ValueError("operators must live on a nested hierarchy, coarsest first")
    fine = operators[-1]
    blocks = _blocks(fine)
    steps = [prolongation(c, f, blocks=blocks) for c, f in zip(spaces, spaces[1:])]
    coarse0 = CoarseSolver(steps[0], _operator_matrix(operators[0]),
                           _kernel(fine, spaces[0]), omega0=config.omega0,
                           svd_tol=config.svd_tol, dense_limit=config.dense_coarse_limit,
                           p_mask=_p_mask(fine, spaces[0]), constant=_constant(fine, spaces[0]))
    levels = []
    for ell in range(1, len(operators)):
        A = as_csr(_operator_matrix(operators[ell]))
        solvers = build_patch_solvers(operators[ell], svd_tol=config.svd_tol,
                                      deflate_tol=config.deflate_tol)
        levels.append(PatchLevel(solvers, A, as_csr(A.T), steps[ell - 1] if ell > 1 else None))
    return SchwarzPreconditioner(fine, coarse0, levels, config, _projector_for(fine, fine.space))


def build_preconditioner(operator, config: SchwarzConfig, *, operators=None):
    """Dispatch on ``config.mode``; multilevel builds its own hierarchy when
    ``operators`` is not given."""
    if config.mode != "multilevel":
        return build_two_level(operator, config)
    if operators is None:
        operators = hierarchy_operators(operator, config)
    return build_multilevel(operators, config)


def hierarchy_operators(operator, config: SchwarzConfig):
    """Operators of the same kind on ``n_coarsest * 2**l`` meshes up to the operator's mesh."""
    n, k = operator.space.mesh.n, operator.space.k
    depth = int(round(np.log2(n / config.n_coarsest))) + 1
    if depth < 2 or config.n_coarsest * 2 ** (depth - 1) != n:
        raise ValueError(f"n={n} is not n_coarsest * 2**l with l >= 1")
    meshes = build_hierarchy(config.n_coarsest, depth)
    ops = [_assemble_like(operator, build_spaces(m, k)) for m in meshes[:-1]]
    # same numbering on an equal mesh, so only the hierarchy link changes
    ops.append(replace(operator, space=build_spaces(meshes[-1], k)))
    return ops
