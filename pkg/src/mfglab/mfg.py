"""
Fixed-point driver for the stationary MFG system with Riesz aggregation

    -Lap u + |grad u|^gamma/gamma + lambda = V - K_alpha * m * phi_k
    -Lap m - div(m |grad u|^(gamma-2) grad u) = 0,   int m = M,

plus the regime classification and the admissible-set bookkeeping that go
with it.

The map mu -> m is HJB (with the aggregation term built from mu) followed by
KFP (with the drift of the resulting u).  It is iterated with damping theta,
for an increasing sequence of mollifier indices k (warm-started).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import KernelError, SolverFailure
from .grid import Array, Grid
from .hjb import HJBProblem, lambda_upper_bound, solve_ergodic_hjb
from .kfp import KFPProblem, solve_invariant_density
from .riesz import Mollifier, RieszParams, hls_exponent, hls_pairing, hls_ratio, mollify, riesz_convolve

log = logging.getLogger(__name__)

HLS_SUPERCRITICAL = "HLS_Supercritical"
HLS_CRITICAL = "HLS_Critical"
MASS_SUPERCRITICAL = "MassSupercritical"
MASS_CRITICAL = "MassCritical"
MASS_SUBCRITICAL = "MassSubcritical"


def conjugate(gamma):
    """gamma' = gamma/(gamma-1), exact for rational input."""
    return gamma / (gamma - 1)


def _equal(a, b) -> bool:
    if isinstance(a, Rational) and isinstance(b, Rational):
        return a == b
    return math.isclose(float(a), float(b), rel_tol=1e-12, abs_tol=1e-12)


def classify_regime(N: int, gamma, alpha) -> str:
    """Position of alpha relative to the HLS-critical (N - 2 gamma') and mass-critical (N - gamma') exponents."""
    if not gamma > 1:
        raise ValueError(f"gamma must be > 1, got {gamma}")
    if not 0 < alpha < N:
        raise ValueError(f"alpha must lie in (0, N) = (0, {N}), got {alpha}")
    gp = conjugate(gamma)
    hls, mass = N - 2 * gp, N - gp
    if _equal(alpha, hls):
        return HLS_CRITICAL
    if _equal(alpha, mass):
        return MASS_CRITICAL
    if alpha < hls:
        return HLS_SUPERCRITICAL
    if alpha < mass:
        return MASS_SUPERCRITICAL
    return MASS_SUBCRITICAL


def existence_regime(regime: str) -> bool:
    """Regimes where a classical solution exists (for every mass, or for small mass)."""
    return regime != HLS_SUPERCRITICAL


# -- xi / M0 case analysis ---------------------------------------------------------


def _iroot(n: int, q: int) -> int | None:
    if n < 0:
        return None
    r = round(n ** (1.0 / q)) if n > 0 else 0
    for c in (r - 1, r, r + 1):
        if c >= 0 and c**q == n:
            return c
    return None


def exact_power(x, e):
    """x**e, exact as a Fraction when x and e are rational and the root is perfect; float otherwise."""
    if isinstance(x, Rational) and isinstance(e, Rational):
        x, e = Fraction(x), Fraction(e)
        if e.denominator == 1:
            return x ** e.numerator
        if x == 0 and e > 0:
            return Fraction(0)
        if x > 0:
            num = _iroot(x.numerator, e.denominator)
            den = _iroot(x.denominator, e.denominator)
            if num is not None and den is not None:
                return Fraction(num, den) ** e.numerator
    return float(x) ** float(e)


@dataclass(frozen=True)
class XiSelection:
    feasible: bool
    xi: float | Fraction | None
    M0: float | Fraction | None
    a: float | Fraction
    g_tmax: float | None = None


def xi_selection(N: int, gamma, alpha, M, C1, C2) -> XiSelection:
    """Radius xi of the admissible set that the fixed-point map leaves invariant.

    With a = 2 gamma'/(N - alpha) and the a priori bound
    ``t^a <= C1 M^a + C2 M^(a-1) xi t`` on ``t = ||m||_{2N/(N+alpha)}``:

    * a > 2: always feasible; xi is the root of ``t^a - C2 M^(a-1) t^2 - C1 M^a``.
    * a = 2: feasible iff M < M0 = 1/C2; xi = M sqrt(C1 / (1 - C2 M)).
    * 1 < a < 2: feasible iff ``g(t_max) >= 0`` (equivalently M <= M0); xi = t_max.
    * a = 1: feasible iff M <= 1/(4 C1 C2); xi is the smaller root of C2 t^2 - t + C1 M.
    * a < 1: infeasible.

    Rational inputs (``Fraction``/``int``) give exact decisions at the thresholds.
    """
    if not (C1 > 0 and C2 > 0 and M > 0):
        raise ValueError("C1, C2 and M must be positive")
    if not 0 < alpha < N:
        raise ValueError(f"alpha must lie in (0, N) = (0, {N}), got {alpha}")
    gp = conjugate(gamma)
    a = 2 * gp / (N - alpha)
    if _equal(a, 2):
        M0 = 1 / Fraction(C2) if isinstance(C2, Rational) else 1.0 / C2
        if not M < M0:
            return XiSelection(False, None, M0, a)
        xi = M * exact_power(C1 / (1 - C2 * M), Fraction(1, 2))
        return XiSelection(True, xi, M0, a)
    if _equal(a, 1):
        bound = 1 / (4 * C1 * C2) if isinstance(C1 * C2, Rational) else 1.0 / (4 * C1 * C2)
        if not M <= bound:
            return XiSelection(False, None, None, a)
        xi = (1 - exact_power(1 - 4 * C1 * C2 * M, Fraction(1, 2))) / (2 * C2)
        return XiSelection(True, xi, None, a)
    if a > 2:
        af, Mf, c1, c2 = float(a), float(M), float(C1), float(C2)

        def f(t):
            return t**af - c2 * Mf ** (af - 1) * t**2 - c1 * Mf**af

        hi = max(1.0, (c2 * Mf ** (af - 1)) ** (1 / (af - 2)))
        while f(hi) < 0:
            hi *= 2
        # f < 0 on (0, root) and > 0 beyond; the root is the smallest admissible xi
        xi = brentq(f, 1e-300, hi, xtol=1e-300, rtol=1e-15) if f(1e-300) < 0 else 0.0
        return XiSelection(True, xi, None, a)
    if a > 1:
        M0 = (a / (2 * C2)) * exact_power((2 - a) / (2 * C1), (2 - a) / a)
        t_max = exact_power(a / (2 * C2), 1 / (2 - a)) * exact_power(M, -(a - 1) / (2 - a))
        af = float(a)
        g = float(t_max) ** af - float(C2) * float(M) ** (af - 1) * float(t_max) ** 2 - float(C1) * float(M) ** af
        feasible = M <= M0
        return XiSelection(bool(feasible), t_max if feasible else None, M0, a, g)
    return XiSelection(False, None, None, a)


# -- admissible set --------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibleSetParams:
    xi: float
    C: float
    p_bar: float
    mass_tol: float = 1e-8


@dataclass(frozen=True)
class AdmissibleCheck:
    inside: bool
    margin_xi: float
    margin_mass: float
    margin_positivity: float
    margin_C: float


def admissible_set_check(
    grid: Grid, mu: Array, a: AdmissibleSetParams, M: float, V: Array | None, alpha: float
) -> AdmissibleCheck:
    """Signed margins (>= 0 means satisfied) for the four constraints of the admissible set."""
    norm = grid.lp_norm(mu, hls_exponent(grid.dim, alpha))
    potential = grid.integrate(mu * V) if V is not None else 0.0
    margins = (
        a.xi - norm,
        a.mass_tol - abs(grid.integrate(mu) - M),
        float(np.min(mu)),
        a.C - potential,
    )
    return AdmissibleCheck(all(x >= 0 for x in margins), *margins)


# -- parameters and driver -------------------------------------------------------


@dataclass
class MFGParams:
    dim: int
    gamma: float
    alpha: float
    mass: float
    grid: Grid
    cv: float = 1.0
    b: float = 2.0
    damping: float = 0.5
    schedule: Sequence[int] = (4, 8, 16, 32)
    tol: float = 1e-6
    intermediate_tol: float = 1e-4
    max_iter: int = 200
    p_bar: float | None = None
    hjb_tol: float = 1e-10
    sup_ceiling: float | None = None
    coupling: bool = True
    override: bool = False
    C1: float | None = None
    C2: float | None = None
    xi: float | None = None
    C: float | None = None

    def __post_init__(self):
        if self.grid.dim != self.dim:
            raise ValueError(f"grid dimension {self.grid.dim} differs from dim={self.dim}")
        if not 0 < self.alpha < self.dim:
            raise ValueError(f"alpha must lie in (0, N) = (0, {self.dim}), got {self.alpha}")
        if not self.gamma > 1:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.cv < 0 or self.b < 0:
            raise ValueError("potential needs cv >= 0 and b >= 0")
        if not self.schedule or list(self.schedule) != sorted(set(self.schedule)):
            raise ValueError("mollifier schedule must be a non-empty increasing sequence")
        if self.p_bar is None:
            self.p_bar = self.dim / self.alpha + 1.0
        if not self.p_bar > self.dim / self.alpha:
            raise ValueError(f"p_bar must exceed N/alpha = {self.dim / self.alpha}")

    @property
    def gamma_conj(self) -> float:
        return conjugate(self.gamma)

    @property
    def regime(self) -> str:
        return classify_regime(self.dim, self.gamma, self.alpha)

    def potential(self) -> Array:
        if self.cv == 0:
            return np.zeros(self.grid.shape)
        return self.cv * self.grid.radius**self.b

    def riesz(self) -> RieszParams:
        return RieszParams(self.alpha, self.grid)


@dataclass
class MFGSolution:
    u: Array
    m: Array
    lam: float
    E_kin: float
    w: Array
    interaction: Array  # K_alpha * phi_k * mu at the fixed point
    k: int
    residual: float
    iterations: int
    trace: list[dict] = field(default_factory=list)
    admissible: AdmissibleSetParams | None = None


def gaussian_density(grid: Grid, M: float, sigma: float = 1.0) -> Array:
    g = np.exp(-0.5 * grid.radius**2 / sigma**2)
    return M * g / grid.integrate(g)


def default_admissible(params: MFGParams, mu0: Array, V: Array) -> AdmissibleSetParams | None:
    """xi and C from the case analysis, with C1, C2 fitted when not configured.

    C1 defaults to gamma' times the lambda upper bound (1 when that bound is 0),
    C2 to gamma' times the HLS ratio of the initial Gaussian.  Returns None when
    no admissible radius exists for these constants.
    """
    gp = params.gamma_conj
    C1 = params.C1
    if C1 is None:
        bound = lambda_upper_bound(params.grid, V, params.gamma)
        C1 = gp * bound if bound > 0 else 1.0
    C2 = params.C2 if params.C2 is not None else gp * hls_ratio(mu0, params.riesz())
    xi = params.xi
    if xi is None:
        sel = xi_selection(params.dim, params.gamma, params.alpha, params.mass, C1, C2)
        if not sel.feasible:
            return None
        xi = float(sel.xi)
    C = params.C if params.C is not None else C1 * params.mass + C2 * xi**2
    return AdmissibleSetParams(xi=xi, C=C, p_bar=params.p_bar)


def free_energy(grid: Grid, m: Array, E_kin: float, V: Array, gamma: float, rp: RieszParams) -> float:
    """(1/gamma') E + int V m - (1/2) int m (K * m)."""
    return E_kin / conjugate(gamma) + grid.integrate(V * m) - 0.5 * hls_pairing(m, m, rp)


def fixed_point_solve(params: MFGParams) -> MFGSolution:
    """Damped Picard iteration with mollifier continuation.

    Raises :class:`SolverFailure` labelled ``"concentration"`` when the sup
    norm of an iterate exceeds the ceiling, ``"stagnation"`` when a mollifier
    level does not reach its tolerance in ``max_iter`` iterations, or with the
    label of the failing inner solver.  ``trace`` and the last iterate travel
    with the exception.
    """
    regime = params.regime
    if not existence_regime(regime) and not params.override:
        raise ValueError(
            f"{regime}: no existence result applies (alpha < N - 2 gamma'); set override for probing runs"
        )
    if params.cv == 0 and not params.override:
        raise ValueError("V identically zero is outside the existence setting; set override for probing runs")

    grid = params.grid
    rp = params.riesz()
    V = params.potential()
    theta = params.damping
    mu = gaussian_density(grid, params.mass)
    ceiling = params.sup_ceiling if params.sup_ceiling is not None else 1e3 * float(np.max(mu))
    adm = default_admissible(params, mu, V)
    bound = lambda_upper_bound(grid, V, params.gamma)
    trace: list[dict] = []
    guess = None
    total = 0
    schedule = list(params.schedule)

    def evaluate(mu, k):
        nonlocal guess
        if params.coupling:
            interaction = riesz_convolve(mollify(mu, Mollifier(k), grid), rp)
        else:
            interaction = np.zeros(grid.shape)
        hjb = solve_ergodic_hjb(HJBProblem(params.gamma, V - interaction, grid), tol=params.hjb_tol, guess=guess)
        guess = (hjb.u, hjb.lam)
        kfp = solve_invariant_density(KFPProblem(hjb.u, params.gamma, params.mass, grid))
        return hjb, kfp, interaction

    for level, k in enumerate(schedule):
        final = level == len(schedule) - 1
        tol_k = params.tol if final else max(params.tol, params.intermediate_tol)
        for j in range(params.max_iter):
            try:
                hjb, kfp, interaction = evaluate(mu, k)
            except (SolverFailure, KernelError) as exc:
                label = "concentration" if trace and trace[-1]["m_sup"] > 0.5 * ceiling else exc.label
                raise SolverFailure(label, f"inner solver failed at k={k}, iteration {j}: {exc}", trace, mu) from exc
            m = kfp.m
            res = grid.lp_norm(m - mu, params.p_bar)
            row = {
                "k": k,
                "iteration": total,
                "residual": res,
                "lambda": hjb.lam,
                "E_kin": kfp.E_kin,
                "m_sup": float(np.max(m)),
                "mass_leak": grid.mass_leak(m),
                "energy": free_energy(grid, m, kfp.E_kin, V, params.gamma, rp),
                "lambda_bound_ok": bool(hjb.lam <= bound + 1e-8 * (1 + abs(bound))) if np.any(V) else None,
            }
            if adm is not None:
                chk = admissible_set_check(grid, mu, adm, params.mass, V, params.alpha)
                row.update(
                    margin_xi=chk.margin_xi,
                    margin_mass=chk.margin_mass,
                    margin_positivity=chk.margin_positivity,
                    margin_C=chk.margin_C,
                )
            trace.append(row)
            total += 1
            log.debug("k=%d it=%d res=%.3e lambda=%.12g", k, total, res, hjb.lam)
            if row["m_sup"] > ceiling:
                raise SolverFailure(
                    "concentration", f"sup norm {row['m_sup']:.3e} above ceiling {ceiling:.3e}", trace, m
                )
            # without coupling the map is constant, so its first value is the fixed point
            if not params.coupling or (final and res <= tol_k):
                return MFGSolution(
                    u=hjb.u, m=m, lam=hjb.lam, E_kin=kfp.E_kin, w=kfp.w, interaction=interaction,
                    k=k, residual=res if params.coupling else 0.0, iterations=total,
                    trace=trace, admissible=adm,
                )
            if res <= tol_k:
                break
            mu = (1 - theta) * mu + theta * m
        else:
            raise SolverFailure(
                "stagnation", f"k={k}: residual {res:.3e} above {tol_k:.1e} after {params.max_iter} iterations",
                trace, mu,
            )
    raise AssertionError("unreachable")
