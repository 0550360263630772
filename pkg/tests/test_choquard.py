import numpy as np
import pytest

from mfglab.choquard import (
    choquard_residual,
    hopf_cole,
    neg_laplacian_matrix,
    solve_choquard_normalized,
)
from mfglab.errors import SolverFailure
from mfglab.grid import Grid
from mfglab.oracles import principal_eigenvalue
from mfglab.riesz import RieszParams


def test_negative_laplacian_matches_grid_operator(rng):
    g = Grid(2, 2.0, 13)
    f = rng.standard_normal(g.shape)
    np.testing.assert_allclose((neg_laplacian_matrix(g) @ f.ravel()).reshape(g.shape), -g.laplacian(f), atol=1e-10)


def test_hopf_cole_normalizes_and_flags_clamp():
    g = Grid(1, 4.0, 65)
    v, m, clamped = hopf_cole(g, g.axis**2, 2.0)
    assert g.integrate(m) == pytest.approx(2.0)
    assert np.array_equal(m, v**2)
    assert not clamped
    assert hopf_cole(g, g.axis**2 - 200.0, 1.0)[2]


def test_uncoupled_flow_finds_principal_eigenpair():
    g = Grid(1, 8.0, 257)
    V = g.axis**2
    sol = solve_choquard_normalized(g, V, 0.5, 1.0, coupling=False)
    mu, _ = principal_eigenvalue(g, V)
    assert sol.lam == pytest.approx(mu, rel=1e-8)
    assert np.all(sol.v > 0)


def test_flow_decreases_energy_and_solves_equation():
    g = Grid(1, 8.0, 257)
    V = g.axis**2
    sol = solve_choquard_normalized(g, V, 0.5, 1.0)
    assert np.all(np.diff(sol.energies) <= 1e-12)
    assert sol.mass == pytest.approx(1.0, rel=1e-12)
    r = choquard_residual(g, sol.v, sol.lam, V, RieszParams(0.5, g))
    assert np.max(np.abs(r)) <= 1e-8 * (1 + abs(sol.lam)) * np.max(sol.v)


def test_bad_mass_and_stagnation():
    g = Grid(1, 8.0, 129)
    with pytest.raises(ValueError):
        solve_choquard_normalized(g, g.axis**2, 0.5, 0.0)
    with pytest.raises(SolverFailure) as exc:
        solve_choquard_normalized(g, g.axis**2, 0.5, 1.0, max_steps=2)
    assert exc.value.label == "stagnation"
    assert len(exc.value.trace) == 3
