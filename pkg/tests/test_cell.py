import numpy as np
import pytest
from hypothesis import given, strategies as st

from tfw2d.cell import Grid3, UnitCell, fft_forward, fft_inverse, laplacian_symbol
from tfw2d.errors import NonHermitianInput
from tfw2d.fields import RealField, SpectralField, forward_transform, inverse_transform


def direct_dft(grid, f):
    """O(n^2) coefficient sum, the reference for the FFT path."""
    x = [a.ravel() for a in np.meshgrid(*grid.axes, indexing="ij")]
    k = [a.ravel() for a in np.meshgrid(*grid.mode_indices, indexing="ij")]
    sides = grid.cell.sides
    arg = sum(np.outer(ki, xi) / s for ki, xi, s in zip(k, x, sides))
    return (np.exp(-2j * np.pi * arg) @ f.ravel() / grid.size).reshape(grid.shape)


def test_unit_cell_volume():
    cell = UnitCell(1.5, 3.0)
    assert cell.volume == 1.5 * 1.5 * 3.0
    with pytest.raises(ValueError):
        UnitCell(0.0, 1.0)
    with pytest.raises(ValueError):
        UnitCell(1.0, -2.0)


def test_grid_points_and_spacing():
    grid = Grid3(4, 2, 8, UnitCell(2.0, 4.0))
    x1, x2, x3 = grid.axes
    assert np.allclose(x1, [-1.0, -0.5, 0.0, 0.5])
    assert np.allclose(x3, -2.0 + 0.5 * np.arange(8))
    assert grid.spacing == (0.5, 1.0, 0.5)


@pytest.mark.parametrize("shape", [(3, 4, 4), (4, 0, 4), (4, 4, 7)])
def test_grid_rejects_odd_sizes(shape):
    with pytest.raises(ValueError):
        Grid3(*shape)


def test_line_grid():
    g = Grid3.line(16, 3.0)
    assert g.is_1d and g.shape == (1, 1, 16) and g.cell.q_side == 1.0


def test_constant_field_transform():
    grid = Grid3(4, 4, 8)
    c = forward_transform(RealField.constant(grid, 1.0))
    assert c[(0, 0, 0)] == pytest.approx(1.0, abs=1e-15)
    rest = c.coeffs.copy()
    rest[0, 0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-15


def test_single_mode_transform():
    grid = Grid3(8, 4, 8)
    f = RealField.from_function(grid, lambda a, b, c: np.cos(2 * np.pi * a))
    c = forward_transform(f)
    assert c[(1, 0, 0)] == pytest.approx(0.5, abs=1e-15)
    assert c[(-1, 0, 0)] == pytest.approx(0.5, abs=1e-15)
    rest = c.coeffs.copy()
    rest[1, 0, 0] = rest[-1, 0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-15


def test_inverse_of_constant_mode():
    grid = Grid3(4, 4, 8)
    f = inverse_transform(SpectralField.from_modes(grid, {(0, 0, 0): 3.0}))
    assert np.allclose(f.values, 3.0, rtol=0, atol=1e-15)


def test_inverse_of_x3_cosine():
    grid = Grid3(2, 2, 16, UnitCell(1.0, 5.0))
    f = inverse_transform(SpectralField.from_modes(grid, {(0, 0, 1): 0.5, (0, 0, -1): 0.5}))
    x3 = grid.mesh()[2]
    assert np.allclose(f.values, np.broadcast_to(np.cos(2 * np.pi * x3 / 5.0), grid.shape), atol=1e-15)


def test_forward_matches_direct_summation(rng):
    grid = Grid3(8, 8, 8, UnitCell(1.3, 2.7))
    f = rng.standard_normal(grid.shape)
    assert np.max(np.abs(fft_forward(grid, f) - direct_dft(grid, f))) < 1e-13
    back = fft_inverse(grid, direct_dft(grid, f))
    assert np.linalg.norm(back - f) / np.linalg.norm(f) <= 1e-12


def test_non_hermitian_rejected():
    grid = Grid3(4, 4, 4)
    c = np.zeros(grid.shape, dtype=complex)
    c[grid.storage_index((1, 0, 0))] = 1.0
    with pytest.raises(NonHermitianInput):
        fft_inverse(grid, c)
    with pytest.raises(NonHermitianInput):
        inverse_transform(SpectralField.from_modes(grid, {(0, 0, 0): 1j}))


def test_laplacian_symbol_values():
    assert laplacian_symbol(Grid3(4, 4, 4), (0, 0, 0)) == 0.0
    assert laplacian_symbol(Grid3(4, 4, 4), (1, 0, 0)) == pytest.approx(4 * np.pi**2, rel=1e-15)
    assert laplacian_symbol(Grid3(4, 4, 8, UnitCell(1.0, 2 * np.pi)), (0, 0, 2)) == pytest.approx(4.0, rel=1e-14)


def test_laplacian_symbol_richardson():
    """Second differences of the sampled mode, extrapolated in h, give the symbol."""
    L = 2 * np.pi
    kappa = 2 / L
    t0 = 0.3

    def mode(t):
        return np.cos(2 * np.pi * kappa * t)

    def d2(h):
        return -(mode(t0 + h) - 2 * mode(t0) + mode(t0 - h)) / (h * h) / mode(t0)

    h = 0.05
    a1, a2, a3 = d2(h), d2(h / 2), d2(h / 4)
    r1, r2 = (4 * a2 - a1) / 3, (4 * a3 - a2) / 3
    est = (16 * r2 - r1) / 15
    assert est == pytest.approx(4.0, rel=1e-8)


@given(st.integers(-4, 4), st.integers(-2, 2), st.integers(-8, 8))
def test_laplacian_symbol_even(k1, k2, k3):
    grid = Grid3(8, 4, 16, UnitCell(1.7, 3.1))
    assert laplacian_symbol(grid, (k1, k2, k3)) == laplacian_symbol(grid, (-k1, -k2, -k3))
    assert laplacian_symbol(grid, (k1, k2, k3)) >= 0


def test_invalid_mode_index():
    with pytest.raises(ValueError):
        laplacian_symbol(Grid3(4, 4, 4), (3, 0, 0))


shapes = st.tuples(st.sampled_from([1, 2, 4, 8]), st.sampled_from([1, 2, 4]), st.sampled_from([2, 4, 8, 16]))


@given(shapes, st.integers(0, 2**32 - 1))
def test_roundtrip_and_parseval(shape, seed):
    grid = Grid3(*shape, UnitCell(1.1, 2.3))
    f = np.random.default_rng(seed).standard_normal(grid.shape)
    c = fft_forward(grid, f)
    back = fft_inverse(grid, c)
    assert np.linalg.norm(back - f) <= 1e-12 * np.linalg.norm(f)
    assert np.sum(np.abs(c) ** 2) == pytest.approx(np.mean(f * f), rel=1e-12)
    # Hermitian symmetry of a real field's transform
    flipped = np.conj(np.roll(np.flip(c), 1, axis=(0, 1, 2)))
    assert np.max(np.abs(c - flipped)) <= 1e-14 * max(1.0, np.max(np.abs(c)))


def test_large_roundtrip(rng):
    grid = Grid3(64, 4, 128)
    f = rng.standard_normal(grid.shape)
    back = fft_inverse(grid, fft_forward(grid, f))
    assert np.linalg.norm(back - f) / np.linalg.norm(f) <= 1e-12
