"""Mass-conserving RT x RT x Q discretization of Biot's three-field model with
overlapping vertex-patch Schwarz preconditioners and GMRES."""
from .mesh import Mesh, Patch, build_hierarchy, build_uniform_mesh, refine, vertex_patches
from .spaces import (ReferenceElement, SpaceTriple, build_spaces, interpolate, l2_project,
                     prolongation, tabulate)
from .forms import (BlockOperator, ScaledParameters, SpdOperator, assemble_eeh, assemble_mixed,
                    assemble_rhs, assemble_spd, assemble_spd_rhs, default_penalty, dg_norm_1,
                    recover_pressure, rescale, w_norm)
from .linalg import MeanZeroProjector, PseudoInverse, project_mean_zero, svd
from .schwarz import (KernelMismatch, SchwarzConfig, SchwarzPreconditioner, build_multilevel,
                      build_preconditioner, build_two_level, hierarchy_operators)
from .krylov import GmresResult, gmres
from .bench import (BenchmarkRun, ManufacturedProblem, SweepSpec, evaluate_exact, run_case,
                    run_sweep, table_spec)

__all__ = [
    "Mesh", "Patch", "build_hierarchy", "build_uniform_mesh", "refine", "vertex_patches",
    "ReferenceElement", "SpaceTriple", "build_spaces", "interpolate", "l2_project",
    "prolongation", "tabulate",
    "BlockOperator", "ScaledParameters", "SpdOperator", "assemble_eeh", "assemble_mixed",
    "assemble_rhs", "assemble_spd", "assemble_spd_rhs", "default_penalty", "dg_norm_1",
    "recover_pressure", "rescale", "w_norm",
    "MeanZeroProjector", "PseudoInverse", "project_mean_zero", "svd",
    "KernelMismatch", "SchwarzConfig", "SchwarzPreconditioner", "build_multilevel",
    "build_preconditioner", "build_two_level", "hierarchy_operators",
    "GmresResult", "gmres",
    "BenchmarkRun", "ManufacturedProblem", "SweepSpec", "evaluate_exact", "run_case",
    "run_sweep", "table_spec",
]
