"""
Closed-form and independent-solver oracles.

Each oracle returns an :class:`OracleResult`; :func:`run_oracle_suite` runs the
default set used by ``mfglab`` in ``oracle`` mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import erf

from .choquard import solve_choquard_normalized
from .grid import Grid
from .hjb import HJBProblem, solve_ergodic_hjb
from .kfp import KFPProblem, solve_invariant_density
from .mfg import MFGParams, fixed_point_solve
from .riesz import RieszParams, riesz_convolve


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def neumann_operator(grid: Grid, f: np.ndarray, diffusion: float = 2.0) -> sp.csc_matrix:
    """``-diffusion * Lap + f`` with mirror walls, assembled as a Kronecker sum."""
    n, h = grid.nodes, grid.h
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="lil")
    T[0, 1] = -2.0
    T[n - 1, n - 2] = -2.0
    T = T.tocsr() / h**2
    eye = sp.identity(n, format="csr")
    L = sp.csr_matrix((grid.size, grid.size))
    for d in range(grid.dim):
        factors = [T if e == d else eye for e in range(grid.dim)]
        K = factors[0]
        for F in factors[1:]:
            K = sp.kron(K, F, format="csr")
        L = L + K
    return (diffusion * L + sp.diags(np.asarray(f).ravel())).tocsc()


def principal_eigenvalue(
    grid: Grid, f: np.ndarray, diffusion: float = 2.0, tol: float = 1e-14, max_iter: int = 10000
) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of ``-diffusion * Lap + f`` by shifted inverse power iteration.

    The shift sits just below ``min f`` (a lower bound of the spectrum), and
    the Rayleigh quotient is taken in the trapezoidal inner product, in which
    the mirror-wall operator is self-adjoint.
    """
    A = neumann_operator(grid, f, diffusion)
    sigma = float(np.min(f)) - 1.0
    lu = splu((A - sigma * sp.identity(grid.size, format="csc")).tocsc())
    w = grid.weights.ravel()
    x = np.ones(grid.size)
    mu = np.inf
    for _ in range(max_iter):
        y = lu.solve(x)
        y /= math.sqrt(np.sum(w * y * y))
        new = float(np.sum(w * y * (A @ y)))
        x = y
        if abs(new - mu) <= tol * max(1.0, abs(new)):
            mu = new
            break
        mu = new
    return mu, x.reshape(grid.shape)


def gibbs_oracle(n: int = 257, L: float = 8.0, tol: float = 1e-6) -> OracleResult:
    grid = Grid(1, L, n)
    u = 0.5 * grid.axis**2
    m = solve_invariant_density(KFPProblem(u, 2.0, 1.0, grid)).m
    exact = np.exp(-u)
    exact /= grid.integrate(exact)
    err = grid.integrate(np.abs(m - exact))
    return OracleResult("gibbs", err <= tol, err, tol, f"gamma=2, u=x^2/2, n={n}")


def quadratic_hjb_oracle(n: int = 257, L: float = 8.0, tol: float = 5e-3) -> OracleResult:
    grid = Grid(1, L, n)
    sol = solve_ergodic_hjb(HJBProblem(2.0, grid.axis**2, grid))
    err = abs(sol.lam - math.sqrt(2))
    return OracleResult("quadratic_hjb", err <= tol, err, tol, f"lambda={sol.lam!r}")


def hopf_cole_eigen_oracle(n: int = 257, L: float = 8.0, tol: float = 1e-4) -> OracleResult:
    grid = Grid(1, L, n)
    x = grid.axis
    worst = 0.0
    for f in (x**2, 0.5 * x**4 - x**2, np.abs(x) + np.cos(2 * x)):
        lam = solve_ergodic_hjb(HJBProblem(2.0, f, grid)).lam
        mu, _ = principal_eigenvalue(grid, f)
        worst = max(worst, abs(lam - mu) / abs(mu))
    return OracleResult("hopf_cole_eigen", worst <= tol, worst, tol, "3 confining potentials")


def newtonian_gaussian_oracle(n: int = 65, L: float = 6.0, sigma: float = 1.0, M: float = 1.3,
                              tol: float = 1e-4) -> OracleResult:
    grid = Grid(3, L, n)
    r = grid.radius
    m = M * np.exp(-0.5 * r**2 / sigma**2) / (2 * np.pi * sigma**2) ** 1.5
    phi = riesz_convolve(m, RieszParams(2.0, grid))
    mask = r > 3 * grid.h
    exact = M * erf(r[mask] / (sigma * math.sqrt(2))) / r[mask]
    err = float(np.max(np.abs(phi[mask] - exact) / exact))
    return OracleResult("newtonian_gaussian", err <= tol, err, tol, f"N=3, alpha=2, n={n}")


def choquard_cross_check(n: int = 257, L: float = 8.0, alpha: float = 0.5, M: float = 1.0,
                         tol: float = 1e-3) -> OracleResult:
    grid = Grid(1, L, n)
    mfg = fixed_point_solve(MFGParams(1, 2.0, alpha, M, grid))
    cho = solve_choquard_normalized(grid, mfg_potential(grid), alpha, M)
    dl = abs(cho.lam - mfg.lam) / max(abs(mfg.lam), 1e-300)
    dm = grid.integrate(np.abs(cho.v**2 - mfg.m)) / M
    worst = max(dl, dm)
    return OracleResult("choquard_cross_check", worst <= tol, worst, tol, f"lambda rel {dl:.3e}, m L1 {dm:.3e}")


def mfg_potential(grid: Grid) -> np.ndarray:
    return grid.radius**2


def run_oracle_suite() -> list[OracleResult]:
    return [
        gibbs_oracle(),
        quadratic_hjb_oracle(),
        hopf_cole_eigen_oracle(),
        newtonian_gaussian_oracle(),
        choquard_cross_check(),
    ]
