# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
# ---

# # Brute-force checks of the discretization and the solver
#
# On small meshes, dense linear algebra gives independent reference answers
# for the properties the iterative solver relies on:
#
# - the divergence coupling is inf-sup stable, uniformly in $h$;
# - for $\hat c_s > 0$ the pressure can be eliminated, giving an equivalent
#   symmetric positive definite system in $(u, v)$;
# - on that SPD system the multiplicative Schwarz method is a contraction in
#   the energy norm.

import numpy as np

from biot_schwarz import (ManufacturedProblem, SchwarzConfig, ScaledParameters, assemble_spd,
                          build_spaces, build_two_level, build_uniform_mesh, refine)
from biot_schwarz.oracle import inf_sup_constants, spd_equivalence_check

# ## Inf-sup constants
#
# $\gamma_u$ measures the coupling against the broken $H^1$ norm of the
# displacement, and $\gamma_v$ against the $H(\mathrm{div})$ norm of the
# velocity. The constant pressure is excluded. Both values stay bounded
# away from zero as the mesh is refined.

for k in (0, 1, 2):
    gammas = [inf_sup_constants(build_spaces(build_uniform_mesh(n), k)) for n in (2, 4, 8)]
    print(f"k={k}: " + ", ".join(f"n={n}: ({gu:.3f}, {gv:.3f})"
                                 for n, (gu, gv) in zip((2, 4, 8), gammas)))

# ## Eliminating the pressure
#
# The mass balance gives $p = -\hat c_s^{-1}(\mathrm{div}\,u + \mathrm{div}\,v + g)$
# exactly, because the divergences lie in the pressure space. Solving the
# mixed system and the reduced SPD system gives the same fields. As
# $\hat c_s \to 0$ the reduced system becomes ill-conditioned; the oracle
# uses iterative refinement to keep the comparison meaningful.

space = build_spaces(build_uniform_mesh(8), 1)
for cs in (1e2, 1.0, 1e-4):
    params = ScaledParameters(1.0, 1.0, cs)
    problem = ManufacturedProblem.from_params(params)
    print(f"cs={cs:g}: discrepancy {spd_equivalence_check(params, space, problem.f, problem.g):.1e}")

# ## Energy-norm contraction
#
# The error propagation of the multiplicative method is
# $E = (I - P_J)\cdots(I - P_1)(I - P_0)$. Its adjoint in the energy inner
# product runs the same sweep backwards. Power iteration on $E^*E$
# estimates $\|E\|_A$.

rng = np.random.default_rng(0)
for lam, kin in [(1.0, 1.0), (1e6, 1e6)]:
    op = assemble_spd(build_spaces(refine(build_uniform_mesh(4)), 2),
                      ScaledParameters(lam, kin, 1.0))
    M = build_two_level(op, SchwarzConfig())
    A = op.matrix
    w = rng.standard_normal(A.shape[0])
    w /= np.sqrt(w @ (A @ w))
    for _ in range(50):
        z = M.error_propagation(M.error_propagation(w), reverse=True)
        est = np.sqrt(w @ (A @ z))
        w = z / np.sqrt(z @ (A @ z))
    print(f"lambda={lam:g}, kappa_inv={kin:g}: ||E||_A ~ {est:.3f}")
