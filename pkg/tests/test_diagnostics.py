import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfglab.diagnostics import (
    Certificate,
    diagnose,
    energy,
    identity_residuals,
    nonexistence_certificate,
    pohozaev_residual,
)
from mfglab.errors import NotApplicable
from mfglab.grid import Grid
from mfglab.mfg import MFGParams, fixed_point_solve


@pytest.fixture(scope="module")
def solved():
    g = Grid(1, 8.0, 257)
    p = MFGParams(1, 2.0, 0.5, 1.0, g)
    return p, fixed_point_solve(p)


def test_identities_hold_at_the_fixed_point(solved):
    p, sol = solved
    ids = identity_residuals(p.grid, sol.u, sol.m, sol.lam, 2.0, 0.5, 1.0, p.potential(),
                             E_kin=sol.E_kin, interaction=sol.interaction)
    assert abs(ids.id47) < 1e-12
    assert abs(ids.id48) < 1e-3
    assert abs(ids.id20) < 1e-3


def test_report_fields(solved):
    p, sol = solved
    rep = diagnose(p.grid, sol.u, sol.m, sol.lam, 2.0, 0.5, 1.0, p.potential(),
                   E_kin=sol.E_kin, w=sol.w, interaction=sol.interaction)
    assert rep.pohozaev_residual is None
    assert "pohozaev_residual" in rep.notes
    assert rep.certificate == Certificate.NOT_APPLICABLE.value
    assert abs(rep.energy_balance) < 1e-3
    assert rep.mass_leak < 1e-10
    d = rep.to_dict()
    assert set(d) >= {"id47", "id48", "id20", "energy", "certificate", "norms"}


def test_pohozaev_refuses_nonzero_potential(solved):
    p, sol = solved
    with pytest.raises(NotApplicable):
        pohozaev_residual(p.grid, sol.u, sol.m, sol.lam, 2.0, 0.5, 1.0, V=p.potential())


def test_pohozaev_is_affine_in_lambda():
    g = Grid(2, 6.0, 33)
    m = np.exp(-g.radius**2)
    m /= g.integrate(m)
    u = g.radius**2
    r0 = pohozaev_residual(g, u, m, 0.0, 2.0, 1.0, 1.0, normalize=False)
    r1 = pohozaev_residual(g, u, m, 1.0, 2.0, 1.0, 1.0, normalize=False)
    assert r1 - r0 == pytest.approx(-2.0, rel=1e-12)


def test_energy_is_infinite_for_flux_on_vacuum():
    g = Grid(1, 2.0, 17)
    m = np.zeros(g.shape)
    m[8] = 1.0
    w = np.ones((1,) + g.shape)
    assert energy(g, m, w, None, 2.0, 0.5) == float("inf")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1.5, 4.0))
def test_energy_homogeneity_without_potential(c, gamma):
    # kinetic part is 1-homogeneous in (m, w) jointly, interaction 2-homogeneous in m
    g = Grid(1, 4.0, 65)
    m = np.exp(-g.axis**2)
    w = (-g.axis * m)[None]
    from mfglab.riesz import RieszParams, hls_pairing

    D = hls_pairing(m, m, RieszParams(0.5, g))
    e1 = energy(g, m, w, None, gamma, 0.5)
    ec = energy(g, c * m, c * w, None, gamma, 0.5)
    assert ec == pytest.approx(c * (e1 + 0.5 * D) - 0.5 * c**2 * D, rel=1e-10, abs=1e-12)


def test_certificate_cases():
    # N=3, gamma=4: gamma' = 4/3, N - 2 gamma' = 1/3
    r = nonexistence_certificate(-1.0, 2.0, 3, 4.0, 0.1, 1.0)
    assert r.status is Certificate.SIGN_CONFLICT
    assert r.lhs > 0 > r.rhs
    assert nonexistence_certificate(1.0, 2.0, 3, 4.0, 0.1, 1.0).status is Certificate.CONSISTENT
    assert nonexistence_certificate(-1.0, 0.0, 3, 4.0, 0.1, 1.0).status is Certificate.CONSISTENT
    assert nonexistence_certificate(-1.0, 2.0, 3, 4.0, 0.5, 1.0).status is Certificate.NOT_APPLICABLE
    with pytest.raises(ValueError):
        nonexistence_certificate(-1.0, -2.0, 3, 4.0, 0.1, 1.0)
