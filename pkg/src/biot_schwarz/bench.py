"""Manufactured benchmark, parameter sweeps and table output.

The test problem lives on the unit square with the stream function
``phi = x^2 (x-1)^2 y^2 (y-1)^2``: ``u = curl phi``, ``p = 900 phi - 1`` and
``v = -kappa grad p``. ``phi`` is a product ``X(x) Y(y)``, so every derivative
is a product of 1D polynomial derivatives computed once.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .forms import ScaledParameters, assemble_mixed, assemble_rhs
from .krylov import gmres
from .linalg import MeanZeroProjector
from .mesh import build_uniform_mesh, refine
from .oracle import mass_conservation_audit
from .schwarz import SchwarzConfig, build_preconditioner
from .spaces import Quadrature, build_spaces

log = logging.getLogger(__name__)

# X(t) = t^2 (t - 1)^2
_X = Polynomial([0.0, 0.0, 1.0, -2.0, 1.0])
_D = [_X.deriv(m) if m else _X for m in range(4)]


def _phi(m, n, x, y):
    """``d^m/dx^m d^n/dy^n phi``."""
    return _D[m](x) * _D[n](y)


@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact solution and data of the benchmark.

    ``f`` is ``-div eps(u) + grad p`` for the strain form used here; for the
    divergence-free ``u`` this is ``-Laplace(u) / 2 + grad p``. ``f_laplace``
    is the variant ``-Laplace(u) + grad p`` (exact displacement ``2 curl phi``
    for this strain form).
    """

    lambda_hat: float = 1.0
    kappa_hat_inv: float = 1.0
    cs_hat: float = 0.0

    @property
    def kappa_hat(self) -> float:
        return 1.0 / self.kappa_hat_inv

    @classmethod
    def from_params(cls, params: ScaledParameters) -> "ManufacturedProblem":
        return cls(params.lambda_hat, params.kappa_hat_inv, params.cs_hat)

    def phi(self, x, y):
        return _phi(0, 0, x, y)

    def u(self, x, y):
        return np.stack([_phi(0, 1, x, y), -_phi(1, 0, x, y)])

    def p(self, x, y):
        return 900.0 * _phi(0, 0, x, y) - 1.0

    def v(self, x, y):
        return -900.0 * self.kappa_hat * np.stack([_phi(1, 0, x, y), _phi(0, 1, x, y)])

    def _laplace_u(self, x, y):
        return np.stack([_phi(2, 1, x, y) + _phi(0, 3, x, y),
                         -_phi(3, 0, x, y) - _phi(1, 2, x, y)])

    def _grad_p(self, x, y):
        return 900.0 * np.stack([_phi(1, 0, x, y), _phi(0, 1, x, y)])

    def f(self, x, y):
        return self._grad_p(x, y) - 0.5 * self._laplace_u(x, y)

    def f_laplace(self, x, y):
        return self._grad_p(x, y) - self._laplace_u(x, y)

    def g(self, x, y):
        lap = _phi(2, 0, x, y) + _phi(0, 2, x, y)
        return 900.0 * self.kappa_hat * lap - self.cs_hat * self.p(x, y)


def evaluate_exact(problem: ManufacturedProblem, point):
    x, y = np.asarray(point, dtype=float)
    return problem.u(x, y), problem.v(x, y), float(problem.p(x, y))


def l2_errors(space, x, problem: ManufacturedProblem, npts: int | None = None):
    """``(|u - u_h|, |v - v_h|, |p - p_h|)`` in L2 by cellwise Gauss quadrature."""
    quad = Quadrature.gauss(npts or space.k + 4)
    X = space.physical_points(quad.points)
    w = quad.weights * space.mesh.h**2
    u, v, p = space.split(x)

    def err(approx, exact):
        d = (approx - exact) ** 2
        if d.ndim == 3:
            d = d.sum(-1)
        return float(np.sqrt(np.sum(d * w)))

    eu = err(space.eval_rt(space.expand(u), quad.points),
             np.moveaxis(problem.u(X[..., 0], X[..., 1]), 0, -1))
    ev = err(space.eval_rt(space.expand(v), quad.points),
             np.moveaxis(problem.v(X[..., 0], X[..., 1]), 0, -1))
    ep = err(space.eval_q(p, quad.points), problem.p(X[..., 0], X[..., 1]))
    return eu, ev, ep


@dataclass
class BenchmarkRun:
    mode: str
    k: int
    h: float
    lambda_hat: float
    kappa_hat_inv: float
    cs_hat: float
    eta: float
    omega: float
    omega0: float
    iterations: int
    err_u_l2: float
    err_v_l2: float
    err_p_l2: float
    mass_residual: float
    converged: bool
    residual_history: list = field(default_factory=list, repr=False)
    seconds: float = 0.0
    error: str = ""
    floor_limited: bool = False

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in CSV_COLUMNS}


CSV_COLUMNS = ["mode", "k", "h", "lambda_hat", "kappa_hat_inv", "cs_hat", "eta", "omega",
               "omega0", "iterations", "err_u_l2", "err_v_l2", "err_p_l2", "mass_residual",
               "converged"]


def setup_case(params: ScaledParameters, n: int, k: int):
    """Mesh with a parent (for the coarse level), spaces, operator, load vector."""
    if n % 2:
        raise ValueError("n must be even (coarse level H = 2h)")
    mesh = refine(build_uniform_mesh(n // 2))
    space = build_spaces(mesh, k)
    problem = ManufacturedProblem.from_params(params)
    op = assemble_mixed(space, params)
    b = assemble_rhs(space, params, problem.f, problem.g)
    if op.singular:
        b = MeanZeroProjector.for_space(space)(b)
    return space, problem, op, b


def run_case(params: ScaledParameters, n: int, k: int, config: SchwarzConfig | None = None,
             rtol: float = 1e-8, maxit: int = 200, x0=None) -> BenchmarkRun:
    """Assemble, precondition, solve with GMRES, audit and measure errors."""
    config = config or SchwarzConfig()
    t0 = time.perf_counter()
    space, problem, op, b = setup_case(params, n, k)
    M = build_preconditioner(op, config)
    res = gmres(op.matrix, b, M, rtol=rtol, maxit=maxit, x0=x0)
    x = res.x
    if op.singular:
        x = MeanZeroProjector.for_space(space)(x)
    eu, ev, ep = l2_errors(space, x, problem)
    audit = mass_conservation_audit(x, problem.g, params, space)
    run = BenchmarkRun(config.mode, k, 1.0 / n, params.lambda_hat, params.kappa_hat_inv,
                       params.cs_hat, params.penalty(k), config.omega, config.omega0,
                       res.iterations, eu, ev, ep, audit, res.converged,
                       list(res.residual_history), time.perf_counter() - t0,
                       floor_limited=res.floor_limited)
    log.info("%s k=%d h=1/%d lam=%g kinv=%g cs=%g: %d its (%.1fs)", config.mode, k, n,
             params.lambda_hat, params.kappa_hat_inv, params.cs_hat, res.iterations, run.seconds)
    return run


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepSpec:
    lambda_hat: list
    kappa_hat_inv: list
    cs_hat: list
    n: list
    k: int = 2
    mode: str = "multiplicative"
    rtol: float = 1e-8
    eta: float | None = None
    omega: float = 0.25
    omega0: float = 1.0
    out: str | None = None

    def __post_init__(self):
        for name in ("lambda_hat", "kappa_hat_inv", "cs_hat", "n"):
            vals = getattr(self, name)
            if vals is None or len(vals) == 0:
                raise ValueError(f"{name} list must not be empty")
            # order-preserving de-duplication
            setattr(self, name, list(dict.fromkeys(vals)))
        if any(n < 2 or n % 2 for n in self.n):
            raise ValueError("mesh sizes n must be even and >= 2 (coarse level H = 2h)")

    def cases(self):
        for n, lam, kinv, cs in itertools.product(self.n, self.lambda_hat, self.kappa_hat_inv,
                                                  self.cs_hat):
            yield ScaledParameters(lam, kinv, cs, self.eta), n

    def config(self) -> SchwarzConfig:
        return SchwarzConfig(mode=self.mode, omega=self.omega, omega0=self.omega0)


def _failed_run(spec: SweepSpec, params, n, exc) -> BenchmarkRun:
    return BenchmarkRun(spec.mode, spec.k, 1.0 / n, params.lambda_hat, params.kappa_hat_inv,
                        params.cs_hat, params.penalty(spec.k), spec.omega, spec.omega0, -1,
                        math.nan, math.nan, math.nan, math.nan, False, error=repr(exc))


def run_sweep(spec: SweepSpec, *, on_row=None) -> list[BenchmarkRun]:
    """Run the Cartesian product of the spec; failures are recorded, not raised."""
    rows = []
    for params, n in spec.cases():
        try:
            run = run_case(params, n, spec.k, spec.config(), spec.rtol)
        except Exception as exc:  # noqa: BLE001 - one bad case must not stop a sweep
            log.exception("case failed")
            run = _failed_run(spec, params, n, exc)
        rows.append(run)
        if on_row is not None:
            on_row(run)
    return rows


def to_csv(rows, fh=None) -> str:
    buf = fh or io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return buf.getvalue() if fh is None else ""


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    e = math.log10(abs(v))
    return f"1e{int(round(e))}" if abs(e - round(e)) < 1e-12 and abs(e) >= 2 else f"{v:g}"


def to_markdown(rows, row_key: str = "h", col_keys=("lambda_hat", "kappa_hat_inv")) -> str:
    """Pivot of iteration counts: one row per ``row_key`` value, one column per
    combination of ``col_keys``."""
    def key(r, names):
        return tuple(getattr(r, c) for c in names)

    cols = list(dict.fromkeys(key(r, col_keys) for r in rows))
    rkeys = list(dict.fromkeys(getattr(r, row_key) for r in rows))
    cell = {(getattr(r, row_key), key(r, col_keys)): r for r in rows}
    head = [" / ".join(col_keys)] + [", ".join(_fmt(c) for c in col) for col in cols]
    lines = ["| " + " | ".join([row_key] + head[1:]) + " |",
             "|" + "---|" * (len(cols) + 1)]
    for rk in rkeys:
        label = f"1/{round(1 / rk)}" if row_key == "h" else _fmt(rk)
        vals = []
        for c in cols:
            r = cell.get((rk, c))
            vals.append("" if r is None else (str(r.iterations) if r.converged else f"({r.iterations})"))
        lines.append("| " + " | ".join([label] + vals) + " |")
    return "\n".join(lines) + "\n"


_POW = [10.0**e for e in range(-6, 7, 2)]

TABLES = {
    # iteration-count tables of the benchmark; multilevel uses finer meshes
    1: dict(lambda_hat=[1.0, 1e6], kappa_hat_inv=[1.0, 1e6], cs_hat=[0.0], n=[4, 8, 16, 32], k=2),
    2: dict(lambda_hat=_POW, kappa_hat_inv=_POW, cs_hat=[0.0], n=[32], k=2),
    3: dict(lambda_hat=[1.0], kappa_hat_inv=[1.0],
            cs_hat=[0.0, 1e-10, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6, 1e8], n=[32], k=2),
    4: dict(lambda_hat=[100.0], kappa_hat_inv=_POW, cs_hat=[0.0], n=[8, 16, 32, 64, 128], k=0),
}
MULTILEVEL_TABLE1_N = [16, 32, 64, 128]

TABLE_LAYOUT = {
    1: ("h", ("lambda_hat", "kappa_hat_inv")),
    2: ("lambda_hat", ("kappa_hat_inv",)),
    3: ("h", ("cs_hat",)),
    4: ("h", ("kappa_hat_inv",)),
}

# reference iteration counts, keyed like the sweeps
PAPER_COUNTS = {
    "table1": {  # (n, lambda, kappa_inv) -> count, two-level multiplicative
        (4, 1.0, 1.0): 4, (4, 1e6, 1.0): 5, (4, 1.0, 1e6): 6, (4, 1e6, 1e6): 6,
        (8, 1.0, 1.0): 5, (8, 1e6, 1.0): 6, (8, 1.0, 1e6): 6, (8, 1e6, 1e6): 6,
        (16, 1.0, 1.0): 5, (16, 1e6, 1.0): 6, (16, 1.0, 1e6): 6, (16, 1e6, 1e6): 6,
        (32, 1.0, 1.0): 4, (32, 1e6, 1.0): 6, (32, 1.0, 1e6): 6, (32, 1e6, 1e6): 6,
    },
    "table1_multilevel": {
        (16, 1.0, 1.0): 5, (16, 1e6, 1.0): 7, (16, 1.0, 1e6): 7, (16, 1e6, 1e6): 7,
        **{(n, 1.0, 1.0): 5 for n in (32, 64, 128)},
        **{(n, a, b): 8 for n in (32, 64, 128) for a, b in ((1e6, 1.0), (1.0, 1e6), (1e6, 1e6))},
    },
    "table2": {  # (lambda, kappa_inv) -> count
        (lam, kin): c
        for lam, row in zip(_POW, [[2, 3, 3, 4, 4, 5, 6], [2, 3, 3, 4, 4, 5, 6],
                                   [2, 3, 3, 4, 4, 5, 6], [2, 3, 4, 4, 4, 5, 6],
                                   [2, 3, 4, 5, 6, 6, 6], [2, 2, 3, 5, 6, 6, 6],
                                   [2, 2, 3, 4, 6, 6, 6]])
        for kin, c in zip(_POW, row)
    },
    "table3": dict(zip([0.0, 1e-10, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6, 1e8],
                       [4, 4, 4, 4, 4, 4, 6, 2, 1])),
    "table4": {  # (n, kappa_inv) -> count
        (n, kin): c
        for n, row in zip([8, 16, 32, 64, 128], [[3, 4, 6, 8, 9, 11, 12], [3, 5, 7, 8, 9, 13, 14],
                                                 [3, 5, 7, 8, 8, 11, 15], [3, 5, 7, 8, 8, 9, 15],
                                                 [4, 6, 7, 8, 8, 9, 15]])
        for kin, c in zip(_POW, row)
    },
}


def table_spec(table: int, mode: str = "multiplicative", **overrides) -> SweepSpec:
    base = dict(TABLES[table])
    if table == 1 and mode == "multilevel":
        base["n"] = list(MULTILEVEL_TABLE1_N)
    base.update({k: v for k, v in overrides.items() if v is not None})
    return SweepSpec(mode=mode, **base)


# ---------------------------------------------------------------------------
# command line

_LIST_KEYS = {"lambda_hat": float, "kappa_hat_inv": float, "cs_hat": float, "n": int}
_SCALAR_KEYS = {"k": int, "mode": str, "rtol": float, "eta": float, "omega": float,
                "omega0": float, "out": str, "table": int}
_ALIASES = {"degree": "k", "kappa_inv": "kappa_hat_inv", "lambda": "lambda_hat",
            "cs": "cs_hat"}


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines, lists comma-separated, ``#`` comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        if key in _LIST_KEYS:
            out[key] = [_LIST_KEYS[key](float(s)) for s in val.split(",") if s.strip()]
        elif key in _SCALAR_KEYS:
            conv = _SCALAR_KEYS[key]
            out[key] = conv(float(val)) if conv is int else conv(val)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return out


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(float(x)) for x in s.split(",") if x.strip()]


def build_parser():
    import argparse

    p = argparse.ArgumentParser(
        prog="biot-bench",
        description="Run the manufactured Biot benchmark with Schwarz-preconditioned GMRES.")
    p.add_argument("--config", help="key = value file; flags override its values")
    p.add_argument("--table", type=int, choices=[1, 2, 3, 4], help="preset parameter grid")
    p.add_argument("--mode", choices=["additive", "multiplicative", "multilevel"])
    p.add_argument("--degree", type=int, dest="k")
    p.add_argument("--n", type=_ints, help="cells per side, comma-separated")
    p.add_argument("--lambda-hat", type=_floats, dest="lambda_hat")
    p.add_argument("--kappa-inv", type=_floats, dest="kappa_hat_inv")
    p.add_argument("--cs-hat", type=_floats, dest="cs_hat")
    p.add_argument("--eta", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--omega0", type=float)
    p.add_argument("--rtol", type=float)
    p.add_argument("--out", help="CSV output path (markdown goes to stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_spec(args) -> SweepSpec:
    settings = {}
    if args.config:
        with open(args.config) as fh:
            settings.update(parse_config(fh.read()))
    flags = {k: v for k, v in vars(args).items()
             if v is not None and k not in ("config", "verbose")}
    settings.update(flags)
    table = settings.pop("table", None)
    mode = settings.pop("mode", "multiplicative")
    if table is not None:
        return table_spec(table, mode, **settings)
    defaults = dict(lambda_hat=[1.0], kappa_hat_inv=[1.0], cs_hat=[0.0], n=[16])
    return SweepSpec(mode=mode, **{**defaults, **settings})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        spec = resolve_spec(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}")
        return 2
    rows = run_sweep(spec)
    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            to_csv(rows, fh)
    table = args.table if args.table is not None else None
    row_key, cols = TABLE_LAYOUT.get(table, ("h", ("lambda_hat", "kappa_hat_inv", "cs_hat")))
    print(to_markdown(rows, row_key, cols), end="")
    for r in rows:
        if r.error:
            print(f"failed: h=1/{round(1 / r.h)} lambda={r.lambda_hat:g} "
                  f"kappa_inv={r.kappa_hat_inv:g} cs={r.cs_hat:g}: {r.error}")
    return 0 if all(r.converged for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
