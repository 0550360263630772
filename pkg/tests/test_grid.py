import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfglab.grid import Grid, face_gradient_vectors, read_field_csv, write_field_csv


def test_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Grid(4, 1.0, 33)
    with pytest.raises(ValueError):
        Grid(1, 1.0, 5)
    with pytest.raises(ValueError):
        Grid(1, -1.0, 33)


def test_trapezoid_integrates_quadratics_exactly_up_to_endpoint_error():
    g = Grid(1, 1.0, 201)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(2.0, abs=1e-14)
    assert g.integrate(g.axis) == pytest.approx(0.0, abs=1e-14)
    # trapezoid error for x^2 on [-1, 1] is h^2/6 * (f'(1) - f'(-1)) / 2
    assert g.integrate(g.axis**2) == pytest.approx(2 / 3 + g.h**2 / 3, rel=1e-12)


def test_gaussian_mass_in_3d():
    g = Grid(3, 6.0, 33)
    m = np.exp(-0.5 * g.radius**2) / (2 * np.pi) ** 1.5
    assert g.integrate(m) == pytest.approx(1.0, rel=1e-6)


def test_node_gradient_is_exact_on_quadratics(small_grid):
    g = small_grid
    f = sum((d + 1) * x**2 for d, x in enumerate(g.coords))
    grad = g.gradient(f)
    for d, x in enumerate(g.coords):
        np.testing.assert_allclose(grad[d], 2 * (d + 1) * x, atol=1e-11)


def test_staggered_pair_is_adjoint(small_grid, rng):
    g = small_grid
    f = rng.standard_normal(g.shape)
    flux = [rng.standard_normal(F.shape) for F in g.face_gradient(f)]
    lhs = g.integrate(f * g.divergence(flux))
    rhs = -g.face_integrate([a * b for a, b in zip(g.face_gradient(f), flux)])
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_divergence_of_face_gradient_is_laplacian(small_grid, rng):
    g = small_grid
    f = rng.standard_normal(g.shape)
    np.testing.assert_allclose(g.divergence(g.face_gradient(f)), g.laplacian(f), atol=1e-9)


def test_laplacian_integrates_to_zero_with_mirror_walls(small_grid, rng):
    g = small_grid
    f = rng.standard_normal(g.shape)
    assert abs(g.integrate(g.laplacian(f))) < 1e-10 * np.max(np.abs(g.laplacian(f)))


def test_face_gradient_vectors_shapes_and_values():
    g = Grid(2, 1.0, 17)
    x, y = g.coords
    u = x + 3 * y
    vecs = face_gradient_vectors(g, u)
    assert len(vecs) == 2
    # interior tangential differences of a linear function are exact
    np.testing.assert_allclose(vecs[0][0], 1.0)
    tang = vecs[0][1].reshape(16, 17)[:, 1:-1]
    np.testing.assert_allclose(tang, 3.0)


def test_mass_leak_of_centered_gaussian_is_small():
    g = Grid(2, 8.0, 65)
    m = np.exp(-g.radius**2)
    assert g.mass_leak(m) < 1e-12
    assert g.mass_leak(np.ones(g.shape)) > 0.1


def test_field_csv_round_trip(tmp_path, rng):
    g = Grid(2, 1.5, 9)
    f = rng.standard_normal(g.shape)
    write_field_csv(tmp_path / "f.csv", g, f)
    g2, f2 = read_field_csv(tmp_path / "f.csv")
    assert g2 == g
    assert np.array_equal(f, f2)


def test_write_field_csv_checks_shape(tmp_path):
    with pytest.raises(ValueError):
        write_field_csv(tmp_path / "x.csv", Grid(1, 1.0, 9), np.zeros(10))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.floats(0.5, 10.0), st.integers(9, 17), st.floats(1.0, 4.0))
def test_lp_norm_scales_homogeneously(dim, L, n, c):
    g = Grid(dim, L, n)
    f = np.exp(-g.radius**2 / L)
    for p in (1.0, 2.0, 3.5):
        assert g.lp_norm(c * f, p) == pytest.approx(c * g.lp_norm(f, p), rel=1e-12)
