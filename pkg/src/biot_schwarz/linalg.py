"""Small numerical kernels: SVD pseudo-inverses, the mean-zero pressure
projector, Givens rotations and CSR helpers compiled with numba."""
from __future__ import annotations

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

MAX_DENSE = 5000


def svd(A: np.ndarray):
    """Thin SVD ``A = U diag(s) Vt`` with non-increasing ``s``.

    Falls back from the divide-and-conquer driver to ``gesvd``; a failure of
    both raises ``numpy.linalg.LinAlgError``.
    """
    A = np.asarray(A, dtype=float)
    if max(A.shape) > MAX_DENSE:
        raise ValueError(f"dense SVD limited to {MAX_DENSE} rows/columns, got {A.shape}")
    try:
        return sla.svd(A, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return sla.svd(A, full_matrices=False, lapack_driver="gesvd")


def saddle_scaling(A: np.ndarray, p_mask: np.ndarray | None = None) -> np.ndarray:
    """Diagonal scaling ``s`` making ``diag(s) A diag(s)`` well balanced.

    Rows outside ``p_mask`` get ``1/sqrt(A_ii)``. Pressure rows get one common
    factor from the diagonal of the approximate Schur complement
    ``sum_j A_pj**2 / A_jj``, so the constant-pressure direction is preserved.
    """
    d = np.abs(np.diag(A)).astype(float)
    if p_mask is None or not np.any(p_mask):
        return 1.0 / np.sqrt(np.where(d > 0, d, 1.0))
    other = ~p_mask
    s = np.empty(A.shape[0])
    s[other] = 1.0 / np.sqrt(np.where(d[other] > 0, d[other], 1.0))
    Apo = A[np.ix_(p_mask, other)]
    schur = d[p_mask] + (Apo**2) @ (s[other] ** 2)
    ref = schur.mean()
    s[p_mask] = 1.0 / np.sqrt(ref) if ref > 0 else 1.0
    return s


class PseudoInverse:
    """Moore-Penrose inverse from an SVD, cutting singular values below
    ``rtol * s_max`` (and at least the ``drop`` smallest ones).

    With ``scale`` the SVD is taken of ``diag(scale) A diag(scale)``; when
    the scaling is constant on the kernel directions the result is still
    the pseudo-inverse of ``A``.
    """

    def __init__(self, A: np.ndarray, rtol: float = 1e-12, scale: np.ndarray | None = None,
                 drop: int = 0):
        A = np.asarray(A, dtype=float)
        if scale is not None:
            A = scale[:, None] * A * scale[None, :]
        U, s, Vt = svd(A)
        self.singular_values = s
        cut = rtol * (s[0] if s.size else 0.0)
        keep = s > cut
        if drop:
            keep[max(s.size - drop, 0):] = False
        self.rank = int(keep.sum())
        self.kernel = Vt[~keep].T
        # right singular vector of the smallest singular value (original coordinates)
        self.weakest = Vt[-1].copy() if s.size else np.zeros(0)
        self.matrix = (Vt[keep].T / s[keep]) @ U[:, keep].T
        if scale is not None:
            self.matrix = scale[:, None] * self.matrix * scale[None, :]
            self.kernel = scale[:, None] ** -1 * self.kernel
            if self.kernel.size:
                self.kernel /= np.linalg.norm(self.kernel, axis=0)
            self.weakest = self.weakest / scale
        if self.weakest.size:
            self.weakest /= np.linalg.norm(self.weakest)

    @property
    def smallest_relative(self) -> float:
        s = self.singular_values
        return float(s[-1] / s[0]) if s.size and s[0] > 0 else 0.0

    @property
    def n_small(self) -> int:
        return self.singular_values.size - self.rank

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.matrix @ r


def pinv(A: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    return PseudoInverse(A, rtol).matrix


class MeanZeroProjector:
    """Removes the discrete constant-pressure component of a monolithic vector.

    On a uniform mesh with an orthonormal cell basis the constant pressure is
    the indicator of the cellwise constant coefficients, and the L2 mean and
    the Euclidean component along it coincide.
    """

    def __init__(self, p_offset: int, const_index: np.ndarray, cell_area: float = 1.0):
        self.index = p_offset + np.asarray(const_index)
        self.cell_area = cell_area

    @classmethod
    def for_space(cls, space) -> "MeanZeroProjector":
        return cls(space.offsets[2], space.p_map[:, 0], space.mesh.h**2)

    def mean(self, x: np.ndarray) -> float:
        """L2 mean of the pressure block over the unit square."""
        return float(self.cell_area * x[self.index].sum())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        y = np.array(x, dtype=float, copy=True)
        y[self.index] -= y[self.index].mean()
        return y


def project_mean_zero(space, x: np.ndarray) -> np.ndarray:
    return MeanZeroProjector.for_space(space)(x)


def givens(a: float, b: float) -> tuple[float, float]:
    """``(c, s)`` with ``[[c, s], [-s, c]] @ [a, b] = [r, 0]``."""
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sort_indices()
    A.sum_duplicates()
    return A


@numba.njit(cache=True)
def extract_blocks(indptr, indices, data, idx, lookup, out):
    """Dense ``A[idx[j]][:, idx[j]]`` for every row ``j`` of ``idx``.

    ``lookup`` is scratch of length ``A.shape[1]`` filled with -1 on entry
    and exit.
    """
    J, m = idx.shape
    for j in range(J):
        for a in range(m):
            lookup[idx[j, a]] = a
        for a in range(m):
            g = idx[j, a]
            for kk in range(indptr[g], indptr[g + 1]):
                b = lookup[indices[kk]]
                if b >= 0:
                    out[j, a, b] = data[kk]
        for a in range(m):
            lookup[idx[j, a]] = -1


@numba.njit(cache=True)
def multiplicative_sweep(indptr, indices, data, idx, cls, pinvs, r, y, reverse):
    """Sequential subspace corrections with residual update.

    For each patch ``j`` (in order, or reversed): ``d = pinvs[cls[j]] @ r[idx[j]]``,
    ``y[idx[j]] += d`` and ``r -= A[:, idx[j]] @ d``. The CSR arrays must hold
    ``A.T`` so that a row gives a column of ``A``.
    """
    J, m = idx.shape
    rl = np.empty(m)
    d = np.empty(m)
    for jj in range(J):
        j = J - 1 - jj if reverse else jj
        for a in range(m):
            rl[a] = r[idx[j, a]]
        P = pinvs[cls[j]]
        for a in range(m):
            s = 0.0
            for b in range(m):
                s += P[a, b] * rl[b]
            d[a] = s
        for a in range(m):
            g = idx[j, a]
            da = d[a]
            y[g] += da
            for kk in range(indptr[g], indptr[g + 1]):
                r[indices[kk]] -= data[kk] * da
