"""Full right-preconditioned GMRES.

With right preconditioning the least-squares residual of the Arnoldi
process equals the unpreconditioned residual ``b - A x``, so the stopping
test measures the true residual without extra work. The preconditioned
directions ``z_j = M v_j`` are stored and the iterate is formed from them
(as in flexible GMRES): the Arnoldi relation ``A Z = V H`` then holds to the
accuracy of the matrix-vector product even when applying ``M`` loses digits
to ill-conditioned local solves. The final iterate is checked against an
explicitly recomputed residual.

For very stiff systems ``rtol * ||r_0||`` can lie below what double precision
can represent: any computed ``x`` leaves a residual of order
``eps * || |A| |x| + |b| ||``. When ``A`` is an explicit matrix, a solve whose
Arnoldi residual meets the target and whose true residual is within a small
multiple of that bound is accepted and flagged ``floor_limited``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import givens

log = logging.getLogger(__name__)


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residual_history: list[float]
    converged: bool
    true_residual: float = np.nan
    breakdown: bool = False
    floor_limited: bool = False

    @property
    def reduction(self) -> float:
        return self.residual_history[-1] / self.residual_history[0]


def _as_callable(A):
    if A is None:
        return lambda x: x
    if callable(A):
        return A
    return lambda x: A @ x


FLOOR_FACTOR = 10.0


def roundoff_floor(A, x: np.ndarray, b: np.ndarray) -> float:
    """``FLOOR_FACTOR * eps * || |A| |x| + |b| ||``, or 0 if ``A`` is not a matrix."""
    if sp.issparse(A):
        absA = abs(A)
    elif isinstance(A, np.ndarray):
        absA = np.abs(A)
    else:
        return 0.0
    eps = np.finfo(float).eps
    return float(FLOOR_FACTOR * eps * np.linalg.norm(absA @ np.abs(x) + np.abs(b)))


def gmres(A, b, M=None, *, rtol: float = 1e-8, maxit: int = 200, x0=None,
          callback=None) -> GmresResult:
    """Solve ``A x = b`` with right preconditioner ``M``.

    Stops once ``||b - A x_m|| <= rtol * ||b - A x_0||`` (or, for an explicit
    matrix, once the Arnoldi residual meets that target and the true residual
    is at the double-precision floor). ``A`` and ``M`` may be matrices or
    callables.
    """
    Aop, Mop = _as_callable(A), _as_callable(M)
    b = np.asarray(b, dtype=float)
    x0 = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=float).copy()
    r0 = b - Aop(x0)
    beta = float(np.linalg.norm(r0))
    history = [beta]
    if beta == 0.0:
        return GmresResult(x0, 0, history, True, 0.0)
    target = rtol * beta

    V = [r0 / beta]  # grown on demand; maxit * n can be large
    Z = []
    H = np.zeros((maxit + 1, maxit))
    cs, sn = np.zeros(maxit), np.zeros(maxit)
    g = np.zeros(maxit + 1)
    g[0] = beta

    def iterate(m):
        y = np.linalg.solve(np.triu(H[:m, :m]), g[:m])
        x = x0.copy()
        for yi, zi in zip(y, Z):
            x += yi * zi
        return x

    x, converged, breakdown, m = x0, False, False, 0
    for j in range(maxit):
        Z.append(Mop(V[j]))
        w = Aop(Z[j])
        wnorm0 = np.linalg.norm(w)
        # modified Gram-Schmidt with one reorthogonalization pass
        for _ in range(2):
            for i in range(j + 1):
                hij = V[i] @ w
                H[i, j] += hij
                w -= hij * V[i]
        hnext = float(np.linalg.norm(w))
        H[j + 1, j] = hnext
        for i in range(j):
            a, c = H[i, j], H[i + 1, j]
            H[i, j] = cs[i] * a + sn[i] * c
            H[i + 1, j] = -sn[i] * a + cs[i] * c
        cs[j], sn[j] = givens(H[j, j], H[j + 1, j])
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        m = j + 1
        history.append(abs(g[j + 1]))
        if callback is not None:
            callback(m, history[-1])
        lucky = hnext <= 1e-14 * max(wnorm0, 1e-300)
        if history[-1] <= target or lucky:
            x = iterate(m)
            true = float(np.linalg.norm(b - Aop(x)))
            if true <= target * (1 + 1e-6) + 1e-300:
                return GmresResult(x, m, history, True, true)
            if true <= roundoff_floor(A, x, b):
                log.info("true residual %.3e at the roundoff floor (target %.3e)", true, target)
                return GmresResult(x, m, history, True, true, floor_limited=True)
            if lucky:
                log.warning("GMRES breakdown with true residual %.3e > target %.3e", true, target)
                return GmresResult(x, m, history, False, true, breakdown=True)
            log.debug("estimate %.3e but true residual %.3e, continuing", history[-1], true)
        V.append(w / hnext)
    x = iterate(m)
    true = float(np.linalg.norm(b - Aop(x)))
    return GmresResult(x, m, history, False, true)
