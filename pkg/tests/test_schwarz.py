import numpy as np
import pytest
import scipy.sparse as sp

from biot_schwarz.bench import run_case, setup_case
from biot_schwarz.forms import ScaledParameters, assemble_mixed, assemble_spd
from biot_schwarz.krylov import gmres
from biot_schwarz.linalg import MeanZeroProjector
from biot_schwarz.mesh import build_hierarchy
from biot_schwarz.schwarz import (CoarseSolver, KernelMismatch, PatchSolvers, SchwarzConfig,
                                  build_multilevel, build_patch_solvers, build_preconditioner,
                                  build_two_level, hierarchy_operators, local_matrices,
                                  patch_dofs)
from biot_schwarz.spaces import build_spaces
from conftest import make_space


def mixed(n, k, lam=1.0, kin=1.0, cs=0.0, with_parent=True):
    return assemble_mixed(make_space(n, k, with_parent=with_parent),
                          ScaledParameters(lam, kin, cs))


@pytest.mark.parametrize("kw", [dict(mode="jacobi"), dict(omega=0.0), dict(omega=1.5),
                                dict(omega0=0.0), dict(svd_tol=1e-3), dict(deflate_tol=1.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SchwarzConfig(**kw)


def test_patch_dofs_interior_selection():
    space = make_space(2, 0)
    idx = patch_dofs(space)
    # one patch: 4 inner faces for u and v (k=0, no bubbles), 4 pressures
    assert idx.shape == (1, 12)
    assert len(set(idx[0].tolist())) == 12
    k1 = patch_dofs(make_space(4, 1))
    # per cell 2*k*(k+1) = 4 bubbles; faces 4*(k+1) = 8; pressures 4*(k+1)^2 = 16
    assert k1.shape == (9, 2 * (8 + 16) + 16)


def test_single_patch_kernel_at_zero_storage():
    op = mixed(2, 0, with_parent=False)
    solvers = build_patch_solvers(op)
    assert len(solvers) == 1
    assert solvers.kernel_dims.tolist() == [1]
    s = solvers.solvers[0].singular_values
    assert (s < 1e-12 * s[0]).sum() == 1


@pytest.mark.parametrize("k", [0, 1, 2])
def test_no_patch_kernel_with_storage(k):
    solvers = build_patch_solvers(mixed(4, k, cs=1.0, with_parent=False))
    assert np.all(solvers.kernel_dims == 0)
    assert not solvers.deflated.any()


def test_local_matrices_symmetric_and_galerkin(rng):
    op = mixed(4, 1, with_parent=False)
    idx = patch_dofs(op.space)
    blocks = local_matrices(op.matrix, idx)
    A = op.matrix.toarray()
    for j in range(idx.shape[0]):
        Aj = blocks[j]
        assert np.abs(Aj - Aj.T).max() <= 1e-12 * np.abs(Aj).max()
        R = np.zeros((idx.shape[1], A.shape[0]))
        R[np.arange(idx.shape[1]), idx[j]] = 1.0
        X = rng.standard_normal((idx.shape[1], 100))
        Y = rng.standard_normal((idx.shape[1], 100))
        # A_j(x_j, y_j) = A(R^T x_j, R^T y_j)
        lhs = np.einsum("ai,ab,bi->i", Y, Aj, X)
        rhs = np.einsum("ai,ab,bi->i", R.T @ Y, A, R.T @ X)
        assert np.abs(lhs - rhs).max() <= 1e-11 * np.abs(A).max()


def test_translated_patches_share_factorizations():
    op = mixed(8, 1, with_parent=False)
    solvers = build_patch_solvers(op)
    assert len(solvers) == 49
    assert len(solvers.solvers) < 49
    for j in (0, 24, 48):
        A = local_matrices(op.matrix, solvers.idx[j:j + 1])[0]
        assert np.allclose(A, solvers.local_matrix(j), atol=1e-13)


def test_pseudoinverse_local_behaviour(rng):
    op = mixed(4, 1, with_parent=False)
    solvers = build_patch_solvers(op)
    pi = solvers.solver(4)
    A = solvers.local_matrix(4)
    z = pi.kernel[:, 0]
    r = rng.standard_normal(A.shape[0])
    r -= z * (z @ r)
    assert np.linalg.norm(A @ pi(r) - r) <= 1e-10 * np.linalg.norm(r)
    assert np.abs(pi(z)).max() <= 1e-10
    assert np.all(pi(np.zeros_like(r)) == 0)
    assert abs(z @ pi(r)) <= 1e-10 * np.linalg.norm(pi(r))


def test_kernel_mismatch_flagged():
    A = sp.identity(4, format="csr")
    idx = np.array([[0, 1, 2, 3]])
    with pytest.raises(KernelMismatch):
        PatchSolvers(A, idx, expected_kernel=1)
    PatchSolvers(A, idx, expected_kernel=1, strict=False)


def test_near_singular_constant_pressure_is_deflated():
    solvers = build_patch_solvers(mixed(4, 1, cs=1e-10, with_parent=False))
    assert solvers.deflated.all()
    assert np.all(solvers.kernel_dims == 1)
    kept = build_patch_solvers(mixed(4, 1, cs=1e-10, with_parent=False), deflate_tol=0.0,
                               strict=False)
    assert not kept.deflated.any()


def test_additive_zero_and_linearity(rng):
    op = mixed(8, 1)
    M = build_two_level(op, SchwarzConfig(mode="additive"))
    proj = MeanZeroProjector.for_space(op.space)
    assert np.all(M(np.zeros(op.shape[0])) == 0)
    r1, r2 = proj(rng.standard_normal(op.shape[0])), proj(rng.standard_normal(op.shape[0]))
    lhs, rhs = M(r1 + r2), M(r1) + M(r2)
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(lhs).max()


def test_single_patch_additive_is_direct_solve(rng):
    op = mixed(2, 1, cs=1.0, with_parent=False)
    M = build_two_level(op, SchwarzConfig(mode="additive", omega=1.0), coarse=False)
    idx = M.patches.idx[0]
    A = op.matrix.toarray()
    r = rng.standard_normal(op.shape[0])
    y = M(r)
    expect = np.zeros_like(r)
    expect[idx] = np.linalg.solve(A[np.ix_(idx, idx)], r[idx])
    assert np.allclose(y, expect, atol=1e-12)
    mask = np.ones(r.size, dtype=bool)
    mask[idx] = False
    assert np.all(y[mask] == 0)


def test_multiplicative_with_exact_patch_solves_in_one_step(rng):
    # with u.n = v.n = 0 on the boundary the single n=2 patch holds every free dof
    op = mixed(2, 0, cs=1.0, with_parent=False)
    M = build_two_level(op, SchwarzConfig(), coarse=False)
    assert M.patches.idx.shape[1] == op.shape[0]
    b = rng.standard_normal(op.shape[0])
    res = gmres(op.matrix, b, M, rtol=1e-12)
    assert res.iterations == 1


def test_zero_local_solvers_give_zero_correction(rng):
    op = mixed(4, 1, cs=1.0)
    M = build_two_level(op, SchwarzConfig(), coarse=False)
    M.patches.pinvs[:] = 0.0
    assert np.all(M(rng.standard_normal(op.shape[0])) == 0)


def test_multiplicative_equals_explicit_sequential_sweep(rng):
    op = mixed(4, 1, cs=1.0)
    M = build_two_level(op, SchwarzConfig())
    A = op.matrix.toarray()
    r = rng.standard_normal(op.shape[0])
    y = M.coarse(r)
    for j in range(len(M.patches)):
        idx = M.patches.idx[j]
        res = r - A @ y
        y[idx] += M.patches.solver(j)(res[idx])
    assert np.allclose(M(r), y, atol=1e-12)


def test_output_has_mean_zero_pressure(rng):
    op = mixed(8, 2)
    proj = MeanZeroProjector.for_space(op.space)
    for mode in ("additive", "multiplicative"):
        M = build_two_level(op, SchwarzConfig(mode=mode))
        y = M(proj(rng.standard_normal(op.shape[0])))
        assert abs(proj.mean(y)) <= 1e-13 * np.abs(y).max()


def test_additive_symmetric_in_spd_inner_product(rng):
    op = assemble_spd(make_space(4, 1, with_parent=True), ScaledParameters(1.0, 1.0, 1.0))
    M = build_two_level(op, SchwarzConfig(mode="additive"))
    A = op.matrix.toarray()
    x, y = rng.standard_normal(A.shape[0]), rng.standard_normal(A.shape[0])
    # P = M A is A-self-adjoint: (A P x, y) = (A x, P y)
    lhs = (A @ M(A @ x)) @ y
    rhs = (A @ x) @ M(A @ y)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_coarse_kernel_dimension():
    op = mixed(4, 1)
    M = build_two_level(op, SchwarzConfig())
    assert M.coarse.kernel_dim == 1
    A_H = M.coarse.A_H
    assert abs(A_H - A_H.T).max() <= 1e-12 * abs(A_H).max()
    Ms = build_two_level(mixed(4, 1, cs=1.0), SchwarzConfig())
    assert Ms.coarse.kernel_dim == 0


def test_sparse_coarse_matches_dense(rng):
    op = mixed(8, 1)
    dense = build_two_level(op, SchwarzConfig())
    sparse = build_two_level(op, SchwarzConfig(dense_coarse_limit=1))
    assert dense.coarse.dense and not sparse.coarse.dense
    r = MeanZeroProjector.for_space(op.space)(rng.standard_normal(op.shape[0]))
    a, b = dense.coarse(r), sparse.coarse(r)
    proj = MeanZeroProjector.for_space(op.space)
    assert np.allclose(proj(a), proj(b), atol=1e-10 * np.abs(a).max())


def test_omega0_scales_coarse_correction(rng):
    op = mixed(4, 1, cs=1.0)
    r = rng.standard_normal(op.shape[0])
    one = build_two_level(op, SchwarzConfig(omega0=1.0)).coarse(r)
    half = build_two_level(op, SchwarzConfig(omega0=0.5)).coarse(r)
    assert np.allclose(half, 0.5 * one)


def test_multilevel_rejects_shallow_and_unnested():
    op = mixed(4, 1)
    with pytest.raises(ValueError):
        build_multilevel([op])
    a = assemble_mixed(make_space(2, 1), ScaledParameters())
    with pytest.raises(ValueError):
        build_multilevel([a, assemble_mixed(make_space(4, 1), ScaledParameters())])


def test_multilevel_depth_two_equals_two_level(rng):
    meshes = build_hierarchy(2, 2)
    params = ScaledParameters(1.0, 1.0, 1.0)
    ops = [assemble_mixed(build_spaces(m, 1), params) for m in meshes]
    ml = build_multilevel(ops, SchwarzConfig(mode="multilevel"))
    tl = build_two_level(ops[-1], SchwarzConfig())
    r = rng.standard_normal(ops[-1].shape[0])
    assert np.allclose(ml(r), tl(r), atol=1e-12)


def test_hierarchy_operators_levels():
    op = mixed(16, 0)
    ops = hierarchy_operators(op, SchwarzConfig(mode="multilevel"))
    assert [o.space.mesh.n for o in ops] == [2, 4, 8, 16]
    with pytest.raises(ValueError):
        hierarchy_operators(mixed(6, 0), SchwarzConfig(mode="multilevel"))


def test_two_level_counts_mesh_independent():
    counts = [run_case(ScaledParameters(1.0, 1.0, 0.0), n, 1).iterations for n in (8, 16, 32)]
    assert max(counts) - min(counts) <= 1


@pytest.mark.parametrize("lam,kin", [(1.0, 1.0), (1e6, 1e6)])
def test_multiplicative_beats_additive(lam, kin):
    p = ScaledParameters(lam, kin, 0.0)
    mu = run_case(p, 8, 2, SchwarzConfig(mode="multiplicative"))
    ad = run_case(p, 8, 2, SchwarzConfig(mode="additive"))
    assert mu.converged and ad.converged
    assert mu.iterations < ad.iterations


def test_multilevel_converges_on_benchmark():
    run = run_case(ScaledParameters(1.0, 1.0, 0.0), 16, 2, SchwarzConfig(mode="multilevel"))
    assert run.converged and run.iterations <= 8


def test_build_preconditioner_dispatch():
    op = mixed(8, 0)
    assert len(build_preconditioner(op, SchwarzConfig()).patch_levels) == 1
    assert len(build_preconditioner(op, SchwarzConfig(mode="multilevel")).patch_levels) == 2


def test_reverse_sweep_is_a_adjoint(rng):
    op = assemble_spd(make_space(4, 1, with_parent=True), ScaledParameters(1.0, 1.0, 1.0))
    M = build_two_level(op, SchwarzConfig())
    A = op.matrix
    x, y = rng.standard_normal(A.shape[0]), rng.standard_normal(A.shape[0])
    lhs = (A @ M.error_propagation(x)) @ y
    rhs = (A @ x) @ M.error_propagation(y, reverse=True)
    assert lhs == pytest.approx(rhs, rel=1e-10)
