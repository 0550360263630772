"""
Ergodic Hamilton-Jacobi-Bellman solver for

    -Lap u + |grad u|^gamma / gamma + lambda = f,

with the pair (u, lambda) as unknowns and u(center) = 0.

Discretization
--------------
Each grid face carries the exponentially fitted flux of the viscous
Hamiltonian.  With ``d = u_hi - u_lo`` and ``c = |g|^(gamma-2)/gamma`` (``g``
the full gradient on the face) the contribution to the lower node is

    E(c, d) = -(d/h^2) * exprel(-c d),

and the upper node receives ``E(c, -d)``.  For small ``c d`` this expands to
the centred Laplacian plus ``c |g|^2``, and for gamma = 2 (``c = 1/2``) it is
exactly the Hopf-Cole image of the five-point Laplacian:

    L_h[u] = -(2/v) Lap_h v,     v = exp(-u/2),

so the discrete ergodic constant equals the principal eigenvalue of
``-2 Lap_h + f``.  The face term is decreasing in ``d``, which gives the
comparison principle for frozen ``c``.  Walls are homogeneous Neumann
(mirror ghost nodes).

Solution strategy
-----------------
Vanishing discount: damped Newton on ``L_h[u] + delta u = f`` for
``delta = 1, 1/2, 1/4, ...``, ``lambda ~ delta * mean(u_delta)`` extrapolated
over the last three levels.  The result then seeds a bordered Newton solve on
``(u, lambda)`` with the anchor row ``u(center) = 0``, which converges
quadratically to the discrete ergodic pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import exprel, gamma as gamma_fn

from .errors import SolverFailure
from .grid import Array, Grid, face_gradient_vectors
from .linalg import solve, solve_bordered

log = logging.getLogger(__name__)

_ZMAX = 300.0


@dataclass
class HJBProblem:
    gamma: float
    rhs: Array
    grid: Grid
    eps: float = 1e-6  # regularizes |g|^(gamma-2) at flat faces

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.rhs.shape != self.grid.shape:
            raise ValueError(f"rhs shape {self.rhs.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("HJB right-hand side must be finite")


@dataclass
class HJBSolution:
    u: Array
    lam: float
    residual_linf: float
    iterations: int
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    def trace_csv(self, path) -> None:
        """Dump the Newton trace as ``iteration,residual,delta`` (delta = 0 in the ergodic phase)."""
        with open(path, "w") as fh:
            fh.write("iteration,residual,delta\n")
            for it, res, delta in self.trace:
                fh.write(f"{it},{res:.17g},{delta:.17g}\n")


# -- face quantities -----------------------------------------------------------


@dataclass
class FaceState:
    """Per-axis face data of a node field: difference ``dd``, gradient ``g`` and ``c``."""

    dd: list[Array]
    g: list[Array]
    c: list[Array]
    dc_ds: list[Array | None]


def face_state(grid: Grid, u: Array, gamma: float, eps: float = 1e-6) -> FaceState:
    ops = grid.operators()
    flat = u.ravel()
    dd, gs, cs, dcs = [], [], [], []
    for d, g in enumerate(face_gradient_vectors(grid, u)):
        dd.append(ops.diff[d] @ flat)
        gs.append(g)
        if gamma == 2:
            cs.append(np.full(g.shape[1], 0.5))
            dcs.append(None)
        else:
            base = np.sum(g**2, axis=0) + eps**2
            cs.append(base ** ((gamma - 2) / 2) / gamma)
            dcs.append(((gamma - 2) / 2) * base ** ((gamma - 4) / 2) / gamma)
    return FaceState(dd, gs, cs, dcs)


def _face_term(c: Array, d: Array, h: float) -> Array:
    z = np.clip(-c * d, -_ZMAX, _ZMAX)
    return -(d / h**2) * exprel(z)


def _psi(z: Array) -> Array:
    """(1 - e^-z (1 + z)) / z^2, with its Taylor series near 0."""
    z = np.clip(z, -_ZMAX, _ZMAX)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-3
    zs = z[small]
    out[small] = 0.5 - zs / 3 + zs**2 / 8 - zs**3 / 30
    zl = z[~small]
    out[~small] = (1.0 - np.exp(-zl) * (1.0 + zl)) / zl**2
    return out


def hjb_operator(
    grid: Grid, u: Array, gamma: float, eps: float = 1e-6, jacobian: bool = True
) -> tuple[Array, sp.csr_matrix | None]:
    """Discrete ``-Lap u + |grad u|^gamma/gamma`` at every node, and optionally its Jacobian."""
    ops = grid.operators()
    h = grid.h
    st = face_state(grid, u, gamma, eps)
    L = np.zeros(grid.size)
    J = sp.csr_matrix((grid.size, grid.size)) if jacobian else None
    for d in range(grid.dim):
        c, dd = st.c[d], st.dd[d]
        L += ops.scatter_lo[d] @ _face_term(c, dd, h) + ops.scatter_hi[d] @ _face_term(c, -dd, h)
        if not jacobian:
            continue
        D = ops.diff[d]
        e_lo = -np.exp(np.clip(-c * dd, -_ZMAX, _ZMAX)) / h**2
        e_hi = -np.exp(np.clip(c * dd, -_ZMAX, _ZMAX)) / h**2
        J = J + ops.scatter_lo[d] @ sp.diags(e_lo) @ D - ops.scatter_hi[d] @ sp.diags(e_hi) @ D
        if st.dc_ds[d] is not None:
            g = st.g[d]
            ds = sp.diags(2 * g[d] / h) @ D
            for e, T in ops.tangential[d].items():
                ds = ds + sp.diags(2 * g[e]) @ T
            dc = sp.diags(st.dc_ds[d]) @ ds
            c_lo = dd**2 * _psi(c * dd) / h**2
            c_hi = dd**2 * _psi(-c * dd) / h**2
            J = J + ops.scatter_lo[d] @ sp.diags(c_lo) @ dc + ops.scatter_hi[d] @ sp.diags(c_hi) @ dc
    return L.reshape(grid.shape), (J.tocsc() if jacobian else None)


# -- Newton solvers --------------------------------------------------------------


def _damped_newton(residual, step_of, x0, max_iter, target, trace, delta, it0):
    """Newton with backtracking on the sup norm.

    ``residual(x) -> (F, J)`` and ``step_of(J, F)`` returns the Newton step.
    """
    x = x0
    F, J = residual(x)
    res = float(np.max(np.abs(F)))
    it = it0
    for _ in range(max_iter):
        trace.append((it, res, delta))
        if res <= target:
            return x, res, it
        step = step_of(J, F)
        if not np.all(np.isfinite(step)):
            break
        t = 1.0
        while t > 1e-4:
            xn = x + t * step
            Fn, Jn = residual(xn)
            rn = float(np.max(np.abs(Fn)))
            if np.isfinite(rn) and rn < (1 - 1e-4 * t) * res:
                break
            t *= 0.5
        else:
            # no decrease along the Newton direction (typically at roundoff)
            break
        x, F, J, res = xn, Fn, Jn, rn
        it += 1
    trace.append((it, res, delta))
    return x, res, it


def solve_ergodic_hjb(
    prob: HJBProblem,
    tol: float = 1e-9,
    *,
    min_delta: float = 1.0 / 16,
    max_iter: int = 60,
    guess: tuple[Array, float] | None = None,
) -> HJBSolution:
    """Solve for (u, lambda); u is anchored at the grid centre.

    ``guess = (u, lambda)`` skips the discount continuation and starts the
    ergodic Newton iteration from there (used by the fixed-point driver).
    On failure :class:`SolverFailure` carries the trace and last iterate.
    """
    grid, gamma, f = prob.grid, prob.gamma, prob.rhs
    fflat = f.ravel()
    target = tol * (1.0 + float(np.max(np.abs(f))))
    anchor = int(np.ravel_multi_index(grid.center_index, grid.shape))
    trace: list[tuple[int, float, float]] = []
    iters = 0

    if guess is not None:
        try:
            return _ergodic_newton(prob, guess[0], guess[1], target, max_iter, anchor, trace, 0)
        except SolverFailure:
            log.info("warm-started ergodic Newton failed, falling back to continuation")
            trace = []

    # vanishing discount
    u = np.zeros(grid.size)
    lams = []
    delta = 1.0
    while delta >= min_delta * (1 - 1e-12):
        def residual(x, delta=delta):
            L, J = hjb_operator(grid, x.reshape(grid.shape), gamma, prob.eps)
            return L.ravel() + delta * x - fflat, J + delta * sp.identity(grid.size, format="csc")

        u, res, iters = _damped_newton(
            residual, lambda J, F: solve(J, -F), u, max_iter, target, trace, delta, iters
        )
        if res > target:
            raise SolverFailure(
                "newton-divergence", f"discounted Newton stalled at delta={delta:g}, residual {res:.3e}",
                trace, u.reshape(grid.shape),
            )
        lam = delta * grid.mean(u.reshape(grid.shape))
        lams.append(lam)
        log.debug("delta=%g lambda_delta=%.12g", delta, lam)
        new = delta / 2
        # keep u_delta - mean close to the next level's solution
        u = u - lam / delta + lam / new
        delta = new
    if len(lams) >= 3:
        l1, l2, l3 = lams[-3:]
        lam0 = (8 * l3 - 6 * l2 + l1) / 3
    else:
        lam0 = lams[-1]
    u = u.reshape(grid.shape)
    return _ergodic_newton(prob, u - u.ravel()[anchor], lam0, target, max_iter, anchor, trace, iters)


def _ergodic_newton(prob, u0, lam0, target, max_iter, anchor, trace, it0) -> HJBSolution:
    grid, gamma = prob.grid, prob.gamma
    n = grid.size
    fflat = prob.rhs.ravel()

    def residual(x):
        L, J = hjb_operator(grid, x[:n].reshape(grid.shape), gamma, prob.eps)
        return np.concatenate([L.ravel() + x[n] - fflat, [x[anchor]]]), J

    def step_of(J, F):
        du, dl = solve_bordered(J, anchor, -F[:n], -F[n])
        return np.concatenate([du, [dl]])

    x0 = np.concatenate([np.asarray(u0, dtype=float).ravel() - np.asarray(u0).ravel()[anchor], [lam0]])
    x, res, it = _damped_newton(residual, step_of, x0, max_iter, target, trace, 0.0, it0)
    u = x[:n].reshape(grid.shape)
    if res > target or not np.all(np.isfinite(x)):
        raise SolverFailure(
            "newton-divergence", f"ergodic Newton stalled at residual {res:.3e}", trace, (u, float(x[n]))
        )
    return HJBSolution(u=u, lam=float(x[n]), residual_linf=res, iterations=it, trace=trace)


def ergodic_residual(grid: Grid, u: Array, lam: float, f: Array, gamma: float, eps: float = 1e-6) -> float:
    """Sup norm of ``L_h[u] + lambda - f``."""
    L, _ = hjb_operator(grid, u, gamma, eps, jacobian=False)
    return float(np.max(np.abs(L + lam - f)))


# -- monitors ------------------------------------------------------------------


def check_gradient_growth(grid: Grid, u: Array, b: float, gamma: float) -> float:
    """Fitted constant C in |grad u| <= C (1 + |x|)^(b/gamma)."""
    g = np.sqrt(np.sum(grid.gradient(u) ** 2, axis=0))
    return float(np.max(g / (1.0 + grid.radius) ** (b / gamma)))


def gaussian_abs_moment(dim: int, p: float) -> float:
    """E|Y|^p for a standard Gaussian Y in R^dim."""
    return float(2 ** (p / 2) * gamma_fn((dim + p) / 2) / gamma_fn(dim / 2))


def lambda_upper_bound(grid: Grid, V: Array | None, gamma: float) -> float:
    """Upper bound (1/gamma') E|Y|^gamma' + E[V(Y)] on lambda, Y standard Gaussian.

    For V identically zero the bound is 0 (the limit of a spreading Gaussian
    test density).
    """
    if V is None or not np.any(V):
        return 0.0
    gp = gamma / (gamma - 1)
    phi = np.exp(-0.5 * grid.radius**2) / (2 * np.pi) ** (grid.dim / 2)
    return gaussian_abs_moment(grid.dim, gp) / gp + grid.integrate(V * phi)
