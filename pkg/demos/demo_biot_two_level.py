# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
# ---

# # Biot's consolidation model with a two-level Schwarz preconditioner
#
# In scaled form the quasi-static Biot model seeks a displacement $u$, a
# seepage velocity $v$ and a pore pressure $p$ on the unit square with
#
# $$
# \begin{align}
# -\mathrm{div}\,\varepsilon(u) - \hat\lambda \nabla \mathrm{div}\,u + \nabla p &= f, \\
# \hat\kappa^{-1} v + \nabla p &= 0, \\
# -\mathrm{div}\,u - \mathrm{div}\,v - \hat c_s p &= g,
# \end{align}
# $$
#
# with $u = 0$ (normal part strongly, tangential part weakly) and
# $v \cdot n = 0$ on the boundary. Both vector fields are discretized with
# Raviart-Thomas elements $RT_k$ and the pressure with discontinuous $Q_k$.
# Since $\mathrm{div}\, RT_k = Q_k$ cell by cell, the discrete mass balance
# holds pointwise, not only in a weak sense. The displacement needs an
# interior-penalty term for the tangential jumps because $RT_k$ is only
# $H(\mathrm{div})$-conforming.
#
# The resulting saddle-point system is solved by GMRES, preconditioned with an
# overlapping Schwarz method on vertex patches plus a coarse solve on the
# mesh with $H = 2h$.

import numpy as np

from biot_schwarz import (ManufacturedProblem, MeanZeroProjector, SchwarzConfig,
                          ScaledParameters, build_spaces, build_two_level, build_uniform_mesh,
                          gmres, refine)
from biot_schwarz.bench import l2_errors
from biot_schwarz.forms import assemble_mixed, assemble_rhs
from biot_schwarz.oracle import mass_conservation_audit

# ## The manufactured solution
#
# The test problem uses the stream function $\varphi = x^2(x-1)^2y^2(y-1)^2$:
# $u = \mathrm{curl}\,\varphi$ is divergence free, $p = 900\varphi - 1$ has
# zero mean and $v = -\hat\kappa\nabla p$. The data $f$ and $g$ follow from
# the equations.

params = ScaledParameters(lambda_hat=1.0, kappa_hat_inv=1.0, cs_hat=0.0)
problem = ManufacturedProblem.from_params(params)
print("p(0.5, 0.5) =", problem.p(0.5, 0.5))

# ## Assembling and solving
#
# The coarse level must be the parent of the fine mesh, so we build the fine
# mesh by refinement. With $\hat c_s = 0$ the pressure is only defined up to a
# constant: the right-hand side is projected to the range of the operator,
# and the preconditioner returns mean-zero pressures.

k, n = 2, 16
mesh = refine(build_uniform_mesh(n // 2))
space = build_spaces(mesh, k)
op = assemble_mixed(space, params)
b = MeanZeroProjector.for_space(space)(assemble_rhs(space, params, problem.f, problem.g))
print(f"k={k}, h=1/{n}: {space.n_u} + {space.n_v} + {space.n_p} = {op.shape[0]} unknowns")

M = build_two_level(op, SchwarzConfig(mode="multiplicative"))
print(f"{len(M.patches)} vertex patches sharing {len(M.patches.solvers)} factorizations")

res = gmres(op.matrix, b, M, rtol=1e-8)
print("GMRES iterations:", res.iterations, "converged:", res.converged)
print("residual history:", " ".join(f"{r / res.residual_history[0]:.1e}"
                                     for r in res.residual_history))

# ## Accuracy and mass conservation
#
# The $L^2$ errors of all three fields are of order $h^{k+1}$. The pointwise
# mass-balance residual is limited only by how far GMRES reduced the
# residual.

x = MeanZeroProjector.for_space(space)(res.x)
eu, ev, ep = l2_errors(space, x, problem)
print(f"L2 errors: u {eu:.2e}, v {ev:.2e}, p {ep:.2e}")
print(f"mass balance audit: {mass_conservation_audit(x, problem.g, params, space):.1e}")

# ## Mesh independence
#
# The two-level method needs a bounded number of iterations as the mesh is
# refined, also for nearly incompressible solids ($\hat\lambda$ large) and
# for low permeability ($\hat\kappa^{-1}$ large).

from biot_schwarz import run_case  # noqa: E402

for lam, kin in [(1.0, 1.0), (1e6, 1e6)]:
    its = [run_case(ScaledParameters(lam, kin, 0.0), n, k).iterations for n in (8, 16, 32)]
    print(f"lambda={lam:g}, kappa_inv={kin:g}: iterations for h=1/8, 1/16, 1/32: {its}")
