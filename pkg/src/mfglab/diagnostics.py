"""
Integral identities, the Pohozaev identity, the energy functional and the
nonexistence certificate, evaluated on a candidate solution (u, m, lambda).

Notation used throughout::

    A = int grad u . grad m          (staggered pairing)
    E = int m |grad u|^gamma         (kinetic energy)
    D = int int m(x) m(y) |x-y|^-(N-alpha)
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NotApplicable
from .grid import Array, Grid
from .kfp import KFPSolution, apriori_monitor, dual_kinetic_energy, optimal_flux
from .riesz import RieszParams, hls_exponent, hls_pairing


class Certificate(str, enum.Enum):
    CONSISTENT = "Consistent"
    SIGN_CONFLICT = "SignConflict"
    NOT_APPLICABLE = "NotApplicable"


def _conj(gamma: float) -> float:
    return gamma / (gamma - 1)


def node_kinetic_energy(grid: Grid, u: Array, m: Array, gamma: float) -> float:
    g = grid.gradient(u)
    return grid.integrate(m * np.sum(g**2, axis=0) ** (gamma / 2))


def _check_density(grid: Grid, m: Array, M: float) -> None:
    if not M > 0:
        raise ValueError(f"mass must be positive, got {M}")
    if not abs(grid.integrate(m)) > 1e-14 * M:
        raise ValueError("the density integrates to zero")


def pohozaev_terms(grid: Grid, u: Array, m: Array, alpha: float, gamma: float, E_kin: float | None = None):
    """(A, E, D) for a candidate pair; E defaults to the node quadrature of m |grad u|^gamma."""
    A = grid.dirichlet_pairing(u, m)
    E = E_kin if E_kin is not None else node_kinetic_energy(grid, u, m, gamma)
    D = hls_pairing(m, m, RieszParams(alpha, grid))
    return A, E, D


def pohozaev_residual(
    grid: Grid,
    u: Array,
    m: Array,
    lam: float,
    gamma: float,
    alpha: float,
    M: float,
    V: Array | None = None,
    E_kin: float | None = None,
    normalize: bool = True,
) -> float:
    """(2-N) A + (1-N/gamma) E - lambda N M - ((alpha+N)/2) D, divided by 1 + |lambda| N M.

    Only meaningful without a confining potential: a nonzero ``V`` raises
    :class:`NotApplicable`.  ``normalize=False`` returns the raw residual,
    which is affine in lambda with slope -N M.
    """
    if V is not None and np.any(V):
        raise NotApplicable("the Pohozaev identity is stated for V identically zero")
    _check_density(grid, m, M)
    N = grid.dim
    A, E, D = pohozaev_terms(grid, u, m, alpha, gamma, E_kin)
    raw = (2 - N) * A + (1 - N / gamma) * E - lam * N * M - 0.5 * (alpha + N) * D
    return raw / (1 + abs(lam) * N * M) if normalize else raw


def _normalized(terms: list[float]) -> float:
    scale = max(abs(t) for t in terms)
    return sum(terms) / scale if scale > 0 else 0.0


@dataclass(frozen=True)
class IdentityResiduals:
    id47: float
    id48: float
    id20: float


def identity_residuals(
    grid: Grid,
    u: Array,
    m: Array,
    lam: float,
    gamma: float,
    alpha: float,
    M: float,
    V: Array | None = None,
    E_kin: float | None = None,
    interaction: Array | None = None,
) -> IdentityResiduals:
    """Residuals of the three integral identities, each divided by its largest term.

    * id47: A + E
    * id48: A + E/gamma + lambda M - int m V + int m (K * m)
    * id20: E - gamma' lambda M - gamma' int m (K * m) + gamma' int m V

    ``interaction`` replaces ``K * m`` (e.g. the mollified ``K * phi_k * mu`` of
    a regularized fixed point).
    """
    gp = _conj(gamma)
    A = grid.dirichlet_pairing(u, m)
    E = E_kin if E_kin is not None else node_kinetic_energy(grid, u, m, gamma)
    if interaction is None:
        Cm = hls_pairing(m, m, RieszParams(alpha, grid))
    else:
        Cm = grid.integrate(m * interaction)
    Vm = grid.integrate(m * V) if V is not None else 0.0
    return IdentityResiduals(
        id47=_normalized([A, E]),
        id48=_normalized([A, E / gamma, lam * M, -Vm, Cm]),
        id20=_normalized([E, -gp * lam * M, -gp * Cm, gp * Vm]),
    )


def energy_balance_residual(
    grid: Grid, m: Array, lam: float, gamma: float, M: float, V: Array, E_kin: float, interaction: Array
) -> float:
    """((1/gamma') E + int m V - lambda M - int m I) / (1 + |lambda| M) at a (regularized) fixed point."""
    gp = _conj(gamma)
    lhs = E_kin / gp + grid.integrate(m * V)
    rhs = lam * M + grid.integrate(m * interaction)
    return (lhs - rhs) / (1 + abs(lam) * M)


def energy(grid: Grid, m: Array, w: Array, V: Array | None, gamma: float, alpha: float) -> float:
    """int (m/gamma') |w/m|^gamma' + int V m - (1/2) D; +inf when w != 0 where m = 0."""
    gp = _conj(gamma)
    kin = dual_kinetic_energy(grid, m, w, gp)
    if not math.isfinite(kin):
        return float("inf")
    pot = grid.integrate(m * V) if V is not None else 0.0
    return kin / gp + pot - 0.5 * hls_pairing(m, m, RieszParams(alpha, grid))


@dataclass(frozen=True)
class CertificateResult:
    status: Certificate
    lhs: float
    rhs: float
    residual: float | None


def nonexistence_certificate(lam: float, D: float, N: int, gamma: float, alpha: float, M: float) -> CertificateResult:
    """Check ((N - 2 gamma' - alpha)/2) D = gamma' lambda M against lambda <= 0.

    Below the HLS-critical exponent the left side is positive whenever D > 0,
    so a nonpositive lambda is a sign conflict: no solution can exist there.
    """
    if D < 0:
        raise ValueError(f"D must be nonnegative, got {D}")
    gp = _conj(gamma)
    lhs = 0.5 * (N - 2 * gp - alpha) * D
    rhs = gp * lam * M
    crit = N - 2 * gp
    if alpha >= crit or math.isclose(alpha, crit, rel_tol=1e-12, abs_tol=1e-12):
        return CertificateResult(Certificate.NOT_APPLICABLE, lhs, rhs, None)
    if D > 0 and lam <= 0:
        return CertificateResult(Certificate.SIGN_CONFLICT, lhs, rhs, abs(lhs - rhs))
    return CertificateResult(Certificate.CONSISTENT, lhs, rhs, abs(lhs - rhs))


# -- report ------------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    pohozaev_residual: float | None
    id47: float
    id48: float
    id20: float
    energy: float
    energy_balance: float | None
    ugfinale_lhs: float
    ugfinale_rhs: float
    certificate: str
    mass_leak: float
    norms: dict[str, float] = field(default_factory=dict)
    notes: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def diagnose(
    grid: Grid,
    u: Array,
    m: Array,
    lam: float,
    gamma: float,
    alpha: float,
    M: float,
    V: Array | None,
    E_kin: float | None = None,
    w: Array | None = None,
    interaction: Array | None = None,
) -> DiagnosticsReport:
    """Evaluate every identity, monitor and the certificate on one candidate solution."""
    _check_density(grid, m, M)
    N = grid.dim
    gp = _conj(gamma)
    notes: dict[str, str] = {}
    E = E_kin if E_kin is not None else node_kinetic_energy(grid, u, m, gamma)
    D = hls_pairing(m, m, RieszParams(alpha, grid))
    has_V = V is not None and bool(np.any(V))

    poho = None
    if has_V:
        notes["pohozaev_residual"] = "not applicable with a nonzero potential"
    else:
        poho = pohozaev_residual(grid, u, m, lam, gamma, alpha, M, None, E)
    ids = identity_residuals(grid, u, m, lam, gamma, alpha, M, V, E, interaction)
    balance = None
    if interaction is not None:
        balance = energy_balance_residual(grid, m, lam, gamma, M, V if V is not None else 0 * m, E, interaction)

    if w is None:
        w = optimal_flux(grid, u, m, gamma)
    en = energy(grid, m, w, V, gamma, alpha)

    if has_V:
        cert = CertificateResult(
            Certificate.NOT_APPLICABLE, 0.5 * (N - 2 * gp - alpha) * D, gp * lam * M, None
        )
        notes["certificate"] = "the certificate needs V identically zero"
    else:
        cert = nonexistence_certificate(lam, D, N, gamma, alpha, M)

    kfp_like = KFPSolution(m=m, w=w, E_kin=E)
    mon = apriori_monitor(grid, kfp_like, hls_exponent(N, alpha), gamma, M)
    for tag, why in mon.omitted.items():
        notes[tag] = why

    return DiagnosticsReport(
        pohozaev_residual=poho,
        id47=ids.id47,
        id48=ids.id48,
        id20=ids.id20,
        energy=en,
        energy_balance=balance,
        ugfinale_lhs=cert.lhs,
        ugfinale_rhs=cert.rhs,
        certificate=cert.status.value,
        mass_leak=grid.mass_leak(m),
        norms=dict(mon.ratios),
        notes=notes,
    )
