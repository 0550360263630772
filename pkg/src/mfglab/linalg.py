"""
Sparse linear solves used by the Newton and kernel computations.

Small systems go to SuperLU.  Large ones (3-D grids) use GMRES preconditioned
by smoothed-aggregation AMG, since direct factorization fill-in on a 33^3
grid already costs seconds per solve.
"""

from __future__ import annotations

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

DIRECT_LIMIT = 8000


class SparseSolver:
    """Factor/prepare ``A`` once, then solve for several right-hand sides."""

    def __init__(self, A: sp.spmatrix, tol: float = 1e-13):
        self.n = A.shape[0]
        self.tol = tol
        if self.n <= DIRECT_LIMIT:
            self._lu = splu(sp.csc_matrix(A))
            self._ml = None
        else:
            self._lu = None
            self._A = sp.csr_matrix(A)
            self._ml = pyamg.smoothed_aggregation_solver(self._A, symmetry="nonsymmetric")

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(b)
        x = self._ml.solve(b, tol=self.tol, accel="gmres", maxiter=400)
        return x


def solve(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    return SparseSolver(A).solve(b)


def pinned(A: sp.spmatrix, anchor: int) -> tuple[sp.csr_matrix, float]:
    """``A + w e_a e_a^T`` with ``w`` the largest diagonal magnitude, and ``w``."""
    w = float(np.max(np.abs(A.diagonal())))
    n = A.shape[0]
    return sp.csr_matrix(A + sp.csr_matrix(([w], ([anchor], [anchor])), shape=(n, n))), w


def solve_bordered(J: sp.spmatrix, anchor: int, r: np.ndarray, s: float) -> tuple[np.ndarray, float]:
    """Solve ``J du + dl * 1 = r``, ``du[anchor] = s`` for a J whose kernel is the constants.

    With ``A = J + w e_a e_a^T`` nonsingular, ``du = A^-1 (r + w s e_a) - dl A^-1 1``
    and the anchor row fixes ``dl``.
    """
    A, w = pinned(J, anchor)
    S = SparseSolver(A)
    rhs = np.array(r, dtype=float)
    rhs[anchor] += w * s
    zr = S.solve(rhs)
    z1 = S.solve(np.ones(J.shape[0]))
    dl = (zr[anchor] - s) / z1[anchor]
    return zr - dl * z1, float(dl)
