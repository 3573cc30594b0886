import numpy as np
import pytest

from biot_schwarz.bench import ManufacturedProblem, run_case, setup_case
from biot_schwarz.forms import ScaledParameters, assemble_mixed, assemble_spd
from biot_schwarz.krylov import gmres
from biot_schwarz.linalg import MeanZeroProjector
from biot_schwarz.oracle import (dense_solve, inf_sup_constants, mass_balance_residual,
                                 mass_conservation_audit, smallest_eigenvalue, solve_mixed,
                                 spd_equivalence_check)
from biot_schwarz.schwarz import SchwarzConfig, build_two_level
from conftest import make_space


def test_dense_solve_trivial():
    assert dense_solve(np.array([[2.0]]), [4.0]) == pytest.approx([2.0])
    x = dense_solve(np.array([[1.0, 0.0], [0.0, 0.0]]), [1.0, 0.0])
    assert np.allclose(x, [1.0, 0.0])


def test_dense_solve_rejects_oversized():
    import scipy.sparse as sp

    with pytest.raises(ValueError):
        dense_solve(sp.identity(5001, format="csr"), np.ones(5001))


def test_dense_solve_residual_on_range():
    space = make_space(4, 1)
    params = ScaledParameters(1.0, 1.0, 0.0)
    problem = ManufacturedProblem.from_params(params)
    x = solve_mixed(space, params, problem.f, problem.g)
    op = assemble_mixed(space, params)
    from biot_schwarz.forms import assemble_rhs

    b = MeanZeroProjector.for_space(space)(assemble_rhs(space, params, problem.f, problem.g))
    assert np.linalg.norm(op @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert abs(MeanZeroProjector.for_space(space).mean(x)) <= 1e-12


def test_dense_solve_matches_gmres():
    params = ScaledParameters(1.0, 1.0, 0.0)
    space, problem, op, b = setup_case(params, 4, 0)
    x_ref = solve_mixed(space, params, problem.f, problem.g)
    res = gmres(op.matrix, b, build_two_level(op), rtol=1e-12)
    x = MeanZeroProjector.for_space(space)(res.x)
    assert np.linalg.norm(x - x_ref) <= 1e-8 * np.linalg.norm(x_ref)


@pytest.mark.parametrize("n", [2, 4, 8])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_inf_sup_positive(n, k):
    gu, gv = inf_sup_constants(make_space(n, k))
    assert gu > 0.05 and gv > 0.05


def test_inf_sup_constant_pressure_kernel():
    gu, gv = inf_sup_constants(make_space(4, 1), include_constant=True)
    assert gu <= 1e-6 and gv <= 1e-6


def test_inf_sup_rejects_oversized():
    with pytest.raises(ValueError):
        inf_sup_constants(make_space(32, 2))


def test_mass_audit_zero_data():
    space = make_space(4, 1)
    x = np.zeros(space.n_total)
    assert mass_conservation_audit(x, None, ScaledParameters(), space) == 0.0


def test_mass_audit_benchmark_and_negative_control():
    params = ScaledParameters(1.0, 1.0, 0.0)
    run = run_case(params, 16, 2, rtol=1e-10)
    assert run.mass_residual <= 1e-9
    space = make_space(4, 2)
    problem = ManufacturedProblem.from_params(params)
    x = solve_mixed(space, params, problem.f, problem.g)
    assert mass_conservation_audit(x, problem.g, params, space) <= 1e-9
    # storage-dominated balance: a pressure seen through degree k-1 no longer balances it
    stored = params.with_(cs_hat=100.0)
    sp_problem = ManufacturedProblem.from_params(stored)
    space = make_space(4, 1)
    xs = solve_mixed(space, stored, sp_problem.f, sp_problem.g)
    assert mass_conservation_audit(xs, sp_problem.g, stored, space) <= 1e-9
    bad = mass_conservation_audit(xs, sp_problem.g, stored, space, p_degree=0)
    assert bad > 0.1


def test_mass_balance_holds_with_storage():
    params = ScaledParameters(1.0, 1.0, 1.0)
    problem = ManufacturedProblem.from_params(params)
    space = make_space(4, 1)
    x = solve_mixed(space, params, problem.f, problem.g)
    res, gh = mass_balance_residual(space, params, x, problem.g)
    assert np.abs(res).max() <= 1e-10 * np.abs(gh).max()


def test_spd_equivalence_examples():
    space = make_space(8, 1)
    problem = ManufacturedProblem.from_params(ScaledParameters(1.0, 1.0, 1.0))
    assert spd_equivalence_check(ScaledParameters(1.0, 1.0, 1.0), space,
                                 problem.f, problem.g) <= 1e-8
    p = ScaledParameters(1.0, 1.0, 1e-4)
    pr = ManufacturedProblem.from_params(p)
    assert spd_equivalence_check(p, space, pr.f, pr.g) <= 1e-6
    assert spd_equivalence_check(ScaledParameters(1.0, 1.0, 1.0), make_space(4, 0)) == 0.0


def test_spd_equivalence_rejects_zero_storage():
    with pytest.raises(ValueError):
        spd_equivalence_check(ScaledParameters(1.0, 1.0, 0.0), make_space(4, 0))


def test_smallest_eigenvalue_of_spd_operator():
    op = assemble_spd(make_space(4, 1), ScaledParameters(1.0, 1.0, 1.0))
    assert smallest_eigenvalue(op) > 0
    assert smallest_eigenvalue(np.diag([3.0, -1.0])) == pytest.approx(-1.0)


def test_oracle_deterministic():
    space = make_space(4, 1)
    assert inf_sup_constants(space) == inf_sup_constants(space)
