"""
Stationary Kolmogorov-Fokker-Planck equation

    -Lap m - div(m |grad u|^(gamma-2) grad u) = 0,    int m = M,  m >= 0,

discretized with Scharfetter-Gummel face fluxes and zero flux at the walls.

The face flux approximating ``grad m + m b`` (``b = |grad u|^(gamma-2) grad u``)
between the lower and upper node of a face is

    F = (B(-Pe) m_hi - B(Pe) m_lo) / h,   Pe = |g|^(gamma-2) (u_hi - u_lo),

with the Bernoulli function ``B(x) = x / (e^x - 1)``.  The weak operator
``A m = sum_faces w_f (D/h)^T F`` is the transpose of an M-matrix with zero
column sums, so its kernel is one-dimensional and positive.  At gamma = 2
``Pe = u_hi - u_lo`` and the kernel is exactly ``exp(-u)`` at every node.

Because the same face sums define ``A``, the discrete duality
``u^T A m = int grad u . grad m + E_kin = 0`` holds to roundoff when ``E_kin``
is evaluated with the fitted face drift (see :func:`face_kinetic_energy`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import exprel

from .errors import KernelError
from .grid import Array, Grid
from .hjb import face_state
from .linalg import SparseSolver, pinned


@dataclass
class KFPProblem:
    u: Array
    gamma: float
    mass: float
    grid: Grid
    eps: float = 1e-6

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.gamma > 1:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != self.grid.shape:
            raise ValueError(f"u shape {self.u.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("u must be finite")


@dataclass
class KFPSolution:
    m: Array
    w: Array
    E_kin: float
    kernel_residual: float = 0.0
    face_flux: list[Array] = field(default_factory=list, repr=False)


def bernoulli(x: Array) -> Array:
    """B(x) = x / (e^x - 1), B(0) = 1."""
    return 1.0 / exprel(np.clip(x, -700.0, 700.0))


def peclet(grid: Grid, u: Array, gamma: float, eps: float = 1e-6) -> list[Array]:
    st = face_state(grid, u, gamma, eps)
    return [gamma * c * dd for c, dd in zip(st.c, st.dd)]


def kfp_matrix(grid: Grid, u: Array, gamma: float, eps: float = 1e-6) -> sp.csr_matrix:
    """Weak stationary operator ``m -> sum_d D_d^T W_d F_d(m) / h`` (node-indexed, flattened)."""
    ops = grid.operators()
    h = grid.h
    A = sp.csr_matrix((grid.size, grid.size))
    for d, pe in enumerate(peclet(grid, u, gamma, eps)):
        flux = (sp.diags(bernoulli(-pe)) @ ops.hi[d] - sp.diags(bernoulli(pe)) @ ops.lo[d]) / h
        wf = grid.face_weights(d).ravel()
        A = A + ops.diff[d].T @ sp.diags(wf / h) @ flux
    return A.tocsr()


def face_fluxes(grid: Grid, u: Array, m: Array, gamma: float, eps: float = 1e-6) -> list[Array]:
    """Scharfetter-Gummel approximations of ``grad m + m b`` on the faces of each axis."""
    ops = grid.operators()
    flat = m.ravel()
    return [
        (bernoulli(-pe) * (ops.hi[d] @ flat) - bernoulli(pe) * (ops.lo[d] @ flat)) / grid.h
        for d, pe in enumerate(peclet(grid, u, gamma, eps))
    ]


def face_kinetic_energy(grid: Grid, u: Array, m: Array, flux: list[Array]) -> float:
    """``sum_f w_f (Du/h)_f (F - Dm/h)_f``: the kinetic energy with the fitted face drift."""
    ops = grid.operators()
    total = 0.0
    for d, F in enumerate(flux):
        du = ops.diff[d] @ u.ravel() / grid.h
        dm = ops.diff[d] @ m.ravel() / grid.h
        total += float(np.sum(grid.face_weights(d).ravel() * du * (F - dm)))
    return total


def optimal_flux(grid: Grid, u: Array, m: Array, gamma: float) -> Array:
    """Node field ``w = -m |grad u|^(gamma-2) grad u``."""
    g = grid.gradient(u)
    norm = np.sqrt(np.sum(g**2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > 0, norm ** (gamma - 2), 0.0)
    return -m * scale * g


def solve_invariant_density(prob: KFPProblem, rtol: float = 1e-9) -> KFPSolution:
    """Positive kernel of the stationary operator, normalized to mass M.

    The kernel is found from the anchored system ``(A + w e_a e_a^T) m = w e_a``
    (one exact inverse-iteration step for the zero eigenvalue), followed by a
    sign and residual check.  Raises :class:`KernelError` when the result is
    not single-signed or does not annihilate ``A`` to ``rtol``.
    """
    grid = prob.grid
    A = kfp_matrix(grid, prob.u, prob.gamma, prob.eps)
    anchor = int(np.argmin(prob.u))
    P, w = pinned(A, anchor)
    rhs = np.zeros(grid.size)
    rhs[anchor] = w
    m = SparseSolver(P).solve(rhs)
    if not np.all(np.isfinite(m)):
        raise KernelError("kernel solve produced non-finite values", last=m)
    mmax = float(np.max(np.abs(m)))
    if np.min(m) < -1e-10 * mmax:
        raise KernelError(
            f"kernel vector changes sign (min {np.min(m):.3e}, max {mmax:.3e}); "
            "the discrete operator lost irreducibility",
            last=m.reshape(grid.shape),
        )
    m = np.maximum(m, 0.0)
    scale = float(np.max(np.abs(A).sum(axis=1))) * mmax
    res = float(np.max(np.abs(A @ m))) / scale
    if res > rtol:
        raise KernelError(f"kernel residual {res:.3e} above {rtol:.1e}", last=m.reshape(grid.shape))
    m = m.reshape(grid.shape)
    m *= prob.mass / grid.integrate(m)
    flux = face_fluxes(grid, prob.u, m, prob.gamma, prob.eps)
    return KFPSolution(
        m=m,
        w=optimal_flux(grid, prob.u, m, prob.gamma),
        E_kin=face_kinetic_energy(grid, prob.u, m, flux),
        kernel_residual=res,
        face_flux=flux,
    )


def kinetic_energy(grid: Grid, sol: KFPSolution, u: Array, gamma: float) -> tuple[float, float]:
    """Node quadratures of int m |grad u|^gamma and of int m |w/m|^gamma'.

    The two agree by the algebra of ``w``; a disagreement beyond 1e-10 means
    ``sol`` was not built from ``u`` and raises ``ValueError``.  Nodes with
    m = 0 contribute 0 when w = 0 there and make the dual form infinite otherwise.
    """
    gp = gamma / (gamma - 1)
    g = grid.gradient(u)
    primal = grid.integrate(sol.m * np.sum(g**2, axis=0) ** (gamma / 2))
    dual = dual_kinetic_energy(grid, sol.m, sol.w, gp)
    if np.isfinite(dual) and abs(primal - dual) > 1e-10 * max(abs(primal), abs(dual), 1e-300):
        raise ValueError(f"primal {primal!r} and dual {dual!r} kinetic energies disagree")
    return primal, dual


def dual_kinetic_energy(grid: Grid, m: Array, w: Array, gp: float) -> float:
    """int m |w/m|^gp with the convention 0 on {m = 0, w = 0} and +inf on {m = 0, w != 0}."""
    wn = np.sqrt(np.sum(w**2, axis=0))
    zero = m <= 0
    if np.any(wn[zero] > 0):
        return float("inf")
    dens = np.zeros_like(m)
    pos = ~zero
    dens[pos] = wn[pos] ** gp * m[pos] ** (1 - gp)
    return grid.integrate(dens)


# -- a priori monitors -----------------------------------------------------------


@dataclass
class MonitorReport:
    r: float
    delta1: float | None
    delta2: float | None
    ratios: dict[str, float]
    omitted: dict[str, str]
    moment: float | None
    mass_leak: float


def apriori_monitor(
    grid: Grid,
    sol: KFPSolution,
    p: float,
    gamma: float,
    M: float,
    b: float | None = None,
    beta: float | None = None,
) -> MonitorReport:
    """Ratios of the Kolmogorov a priori estimates; each should stay bounded under refinement.

    Tags: ``mW`` (Sobolev bound on m), ``stima_int`` (the delta_1 interpolation
    bound), ``mdeltap`` (the delta_2 bound) and ``kolm_i`` (L^beta bound by E + M,
    valid for 1 <= beta < N/(N - gamma'); default the midpoint of that range, or
    2 when gamma' >= N).  Ratios whose exponent range excludes ``p`` (or
    ``beta``) are listed in ``omitted``.
    """
    N = grid.dim
    gp = gamma / (gamma - 1)
    E = sol.E_kin
    m = sol.m
    r = p * gp / (gp + p - 1)
    ratios: dict[str, float] = {}
    omitted: dict[str, str] = {}
    mp = grid.lp_norm(m, p)

    gm = np.sqrt(np.sum(grid.gradient(m) ** 2, axis=0))
    w1r = grid.lp_norm(m, r) + grid.lp_norm(gm, r)
    ratios["mW"] = w1r / ((E + M) ** (1 / gp) * mp ** (1 / gamma))

    delta1 = None
    if 1 < p < 1 + gp / N:
        delta1 = (gp / N + 1 - p) / (p - 1)
        e1 = (1 + delta1) * p
        ratios["stima_int"] = mp**e1 / (M ** (e1 - 1) * E) if E > 0 else float("inf")
    else:
        omitted["stima_int"] = f"needs 1 < p < 1 + gamma'/N = {1 + gp / N:g}"

    delta2 = None
    if gp < N and 1 < p <= N / (N - gp):
        delta2 = gp / (N * (p - 1))
        e2 = p * delta2
        ratios["mdeltap"] = mp**e2 / ((E + M) * M ** (e2 - 1))
    else:
        omitted["mdeltap"] = "needs gamma' < N and 1 < p <= N/(N - gamma')"

    beta_max = N / (N - gp) if gp < N else np.inf
    if beta is None:
        beta = 0.5 * (1 + beta_max) if gp < N else 2.0
    if 1 <= beta < beta_max:
        ratios["kolm_i"] = grid.lp_norm(m, beta) / (E + M)
    else:
        omitted["kolm_i"] = f"needs 1 <= beta < N/(N - gamma') = {beta_max:g}"

    moment = grid.integrate(m * grid.radius**b) if b is not None else None
    return MonitorReport(r, delta1, delta2, ratios, omitted, moment, grid.mass_leak(m))
