"""
Normalized Choquard problem

    -2 Lap v + (V - lambda) v = (K_alpha * v^2) v,    int v^2 = M,  v > 0,

solved by a semi-implicit normalized gradient flow, and the Hopf-Cole map
v = exp(-u/2) linking it to the gamma = 2 MFG system (m = v^2).

This module shares only the grid calculus and the Riesz convolution with the
MFG pipeline; no HJB or KFP code is used, which makes it an independent check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import SolverFailure
from .grid import Array, Grid
from .linalg import SparseSolver
from .riesz import RieszParams, hls_pairing, riesz_convolve

log = logging.getLogger(__name__)

U_FLOOR = -50.0


@dataclass
class ChoquardSolution:
    v: Array
    lam: float
    mass: float
    flow_residual: float
    steps: int
    energies: list[float] = field(default_factory=list, repr=False)


@lru_cache(maxsize=16)
def neg_laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse -Lap_h with mirror walls (the matrix of ``-grid.laplacian``)."""
    ops = grid.operators()
    A = sp.csr_matrix((grid.size, grid.size))
    for d in range(grid.dim):
        A = A + ops.scatter_hi[d] @ ops.diff[d] - ops.scatter_lo[d] @ ops.diff[d]
    return (A / grid.h**2).tocsr()


def hopf_cole(grid: Grid, u: Array, M: float) -> tuple[Array, Array, bool]:
    """v = exp(-u/2) scaled to int v^2 = M, and m_check = v^2.

    u is clamped below at -50 before exponentiation; the third return value
    flags whether the clamp was active.
    """
    clamped = bool(np.any(u < U_FLOOR))
    v = np.exp(-0.5 * np.maximum(u, U_FLOOR))
    v *= np.sqrt(M / grid.integrate(v**2))
    return v, v**2, clamped


def choquard_energy(grid: Grid, v: Array, V: Array, rp: RieszParams | None) -> float:
    """int 2 |grad v|^2 + V v^2 - (1/2) int int v^2 v^2 |x-y|^-(N-alpha)."""
    e = 2 * grid.dirichlet_pairing(v, v) + grid.integrate(V * v**2)
    if rp is not None:
        e -= 0.5 * hls_pairing(v**2, v**2, rp)
    return e


def choquard_residual(grid: Grid, v: Array, lam: float, V: Array, rp: RieszParams | None) -> Array:
    A = neg_laplacian_matrix(grid)
    r = 2 * (A @ v.ravel()).reshape(grid.shape) + (V - lam) * v
    if rp is not None:
        r -= riesz_convolve(v**2, rp) * v
    return r


def rayleigh_multiplier(grid: Grid, v: Array, V: Array, rp: RieszParams | None, M: float) -> float:
    num = 2 * grid.dirichlet_pairing(v, v) + grid.integrate(V * v**2)
    if rp is not None:
        num -= hls_pairing(v**2, v**2, rp)
    return num / M


def solve_choquard_normalized(
    grid: Grid,
    V: Array,
    alpha: float,
    M: float,
    *,
    tau: float = 0.5,
    tol: float = 1e-10,
    max_steps: int = 5000,
    coupling: bool = True,
    growth_ceiling: float = 1e3,
    v0: Array | None = None,
) -> ChoquardSolution:
    """Imaginary-time flow ``(I + tau(-2 Lap + V)) v* = v + tau (K * v^2 + lambda_n) v``, then rescale to mass M.

    ``lambda_n`` is the Rayleigh multiplier of the current iterate.  Carrying it
    explicitly makes every fixed point of the step (after renormalization) an
    exact solution of the discrete problem; without it the renormalization
    factor would rescale the explicit Riesz term at the fixed point.

    Stops when the sup norm of the stationarity residual, relative to
    ``1 + |lambda|`` times ``max v``, drops below ``tol``.  Raises
    :class:`SolverFailure` labelled ``"supercritical collapse"`` when the
    pre-normalization mass grows by more than ``growth_ceiling`` in a step or
    the iterate stops being finite.
    """
    if not M > 0:
        raise ValueError(f"mass must be positive, got {M}")
    V = np.asarray(V, dtype=float)
    rp = RieszParams(alpha, grid) if coupling else None
    shift = max(0.0, -float(np.min(V)))  # keeps I + tau(-2 Lap + V) an M-matrix
    Vs = V + shift
    A = sp.identity(grid.size, format="csr") + tau * (2 * neg_laplacian_matrix(grid) + sp.diags(Vs.ravel()))
    solver = SparseSolver(A)

    if v0 is None:
        v = np.exp(-0.25 * grid.radius**2)
    else:
        v = np.array(v0, dtype=float)
    v *= np.sqrt(M / grid.integrate(v**2))
    energies = [choquard_energy(grid, v, V, rp)]
    res = np.inf
    lam = rayleigh_multiplier(grid, v, V, rp, M)
    for step in range(1, max_steps + 1):
        rhs = v * (1 + tau * (shift + lam))
        if rp is not None:
            rhs += tau * riesz_convolve(v**2, rp) * v
        vt = solver.solve(rhs.ravel()).reshape(grid.shape)
        growth = np.sqrt(grid.integrate(vt**2) / M)
        if not np.all(np.isfinite(vt)) or growth > growth_ceiling:
            raise SolverFailure(
                "supercritical collapse", f"flow blew up at step {step} (growth {growth:.3e})", energies, v
            )
        v = vt * np.sqrt(M / grid.integrate(vt**2))
        energies.append(choquard_energy(grid, v, V, rp))
        lam = rayleigh_multiplier(grid, v, V, rp, M)
        res = float(np.max(np.abs(choquard_residual(grid, v, lam, V, rp)))) / ((1 + abs(lam)) * float(np.max(v)))
        if res <= tol:
            return ChoquardSolution(v, lam, grid.integrate(v**2), res, step, energies)
    raise SolverFailure("stagnation", f"flow residual {res:.3e} after {max_steps} steps", energies, v)
