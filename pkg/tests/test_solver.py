import numpy as np
import pytest
from hypothesis import given, strategies as st

from tfw2d import solver
from tfw2d.cell import Grid3, UnitCell
from tfw2d.errors import EigensolverStalled, GridMismatch, NegativeDensity, ScfDiverged, UnsampleableModel
from tfw2d.fields import RealField, integrate
from tfw2d.homogenization import HomogenizationPlan, nuclear_density_for
from tfw2d.solver import (EnergyBreakdown, NuclearModel, ScfConfig, apply_hamiltonian, el_residual,
                          lowest_eigenpair, scf_solve, scf_solve_1d)
from tfw2d.validation import dense_hamiltonian

SMALL = Grid3(4, 4, 8, UnitCell(1.0, 2 * np.pi))


def dft_matrix(n, side):
    """Unitary-free DFT matrix with the grid origin at -side/2."""
    x = -side / 2 + np.arange(n) * side / n
    k = np.fft.fftfreq(n, 1.0 / n)
    return np.exp(-2j * np.pi * np.outer(k, x) / side) / n, k


def dense_operator(grid, potential):
    """-Laplacian + diag(potential) assembled from explicit DFT matrices."""
    mats, ks = zip(*(dft_matrix(n, s) for n, s in zip(grid.shape, grid.cell.sides)))
    F = np.kron(np.kron(mats[0], mats[1]), mats[2])
    Finv = np.linalg.inv(F)
    k1, k2, k3 = np.meshgrid(*(k / s for k, s in zip(ks, grid.cell.sides)), indexing="ij")
    sym = 4 * np.pi**2 * (k1**2 + k2**2 + k3**2).ravel()
    return (Finv @ np.diag(sym) @ F).real + np.diag(potential.ravel())


# -- nuclear models -----------------------------------------------------------

def test_separable_model_formula():
    grid = Grid3(16, 4, 32)
    m = NuclearModel.separable_cos_gauss(3).sample(grid)
    x1, _, x3 = grid.mesh()
    ref = 5 * np.pi / 2 * np.abs(np.cos(3 * np.pi * x1)) * np.exp(-x3**2 / 8)
    assert np.allclose(m.values, np.broadcast_to(ref, grid.shape), rtol=1e-15, atol=0)
    assert m.nonnegative


def test_model_kinds_and_charges():
    grid = Grid3(4, 4, 16, UnitCell(1.0, 3.0))
    assert NuclearModel.constant(2.0).total_charge(grid) == pytest.approx(6.0, rel=1e-15)
    prof = np.linspace(0.1, 1.0, 16)
    m = NuclearModel.x3_profile(prof)
    assert m.is_x_invariant
    assert np.allclose(m.sample(grid).x3_profile(), prof)
    with pytest.raises(UnsampleableModel):
        m.sample(Grid3(4, 4, 8))
    tab = NuclearModel.tabulated(RealField(grid, np.ones(grid.shape)))
    with pytest.raises(UnsampleableModel):
        tab.sample(Grid3(4, 4, 8))
    with pytest.raises(NegativeDensity):
        NuclearModel.x3_profile(-prof).sample(grid)


def test_config_invariants():
    for bad in ({"tolerance": 0}, {"mixing": 0}, {"mixing": 1.5}, {"kinetic_exponent": 1.5},
                {"max_iterations": 0}, {"acceleration": "broyden"}):
        with pytest.raises(ValueError):
            ScfConfig(**bad)


def test_energy_breakdown_total():
    e = EnergyBreakdown(1.5, 2.25, 0.125)
    assert e.total == 1.5 + 2.25 + 0.125
    assert e.as_dict()["total"] == e.total


# -- Hamiltonian and eigensolver ------------------------------------------------

def test_hamiltonian_kernel_and_shift(rng):
    zero = RealField.constant(SMALL, 0.0)
    assert np.allclose(apply_hamiltonian(zero, zero, RealField.constant(SMALL, 1.7)).values, 0, atol=1e-12)
    v = RealField(SMALL, rng.standard_normal(SMALL.shape))
    c = RealField.constant(SMALL, 2.5)
    free = apply_hamiltonian(zero, zero, v)
    assert np.allclose(apply_hamiltonian(zero, c, v).values, free.values + 2.5 * v.values, atol=1e-12)
    with pytest.raises(GridMismatch):
        apply_hamiltonian(zero, RealField.constant(Grid3(2, 2, 8), 0.0), v)


@given(st.integers(0, 2**32 - 1))
def test_hamiltonian_matches_dense_assembly(seed):
    rng = np.random.default_rng(seed)
    coef = RealField(SMALL, rng.uniform(0, 3, SMALL.shape))
    phi = RealField(SMALL, rng.standard_normal(SMALL.shape))
    H = dense_hamiltonian(coef, phi)
    ref = dense_operator(SMALL, coef.values + phi.values)
    assert np.max(np.abs(H - ref)) <= 1e-10
    assert np.max(np.abs(H - H.T)) <= 1e-10
    lam, w = lowest_eigenpair((coef, phi), ScfConfig(), RealField.constant(SMALL, 1.0))
    assert lam == pytest.approx(np.linalg.eigvalsh(ref)[0], abs=1e-8)
    # residual postcondition in the discrete 2-norm, unit L2 norm, sign
    x = w.values.ravel()
    assert np.linalg.norm(H @ x - lam * x) <= 1e-10 * np.linalg.norm(x) * 1.0001
    assert integrate(w * w) == pytest.approx(1.0, rel=1e-12)
    assert w.values.sum() >= 0


def test_eigenpair_free_and_constant():
    grid = Grid3(4, 4, 8)
    zero = RealField.constant(grid, 0.0)
    guess = RealField.from_function(grid, lambda a, b, c: 1 + 0.3 * np.cos(2 * np.pi * a) + 0 * c)
    lam, w = lowest_eigenpair((zero, zero), ScfConfig(), guess)
    assert abs(lam) <= 1e-10 and np.ptp(w.values) <= 1e-9
    lam, w = lowest_eigenpair((zero, RealField.constant(grid, 1.25)), ScfConfig(), guess)
    assert lam == pytest.approx(1.25, abs=1e-10) and np.ptp(w.values) <= 1e-9


def test_eigenpair_cosine_potential():
    grid = Grid3(4, 4, 16, UnitCell(1.0, 2 * np.pi))
    pot = RealField.from_function(grid, lambda a, b, c: np.cos(c) + 0 * a + 0 * b)
    zero = RealField.constant(grid, 0.0)
    lam, w = lowest_eigenpair((zero, pot), ScfConfig(), RealField.constant(grid, 1.0))
    ref = np.linalg.eigvalsh(dense_operator(grid, pot.values))[0]
    assert lam == pytest.approx(ref, abs=1e-8)
    assert np.all(w.values > 0)


def test_eigensolver_stall():
    grid = Grid3(4, 4, 16)
    pot = RealField.from_function(grid, lambda a, b, c: 5 * np.cos(c) + np.sin(2 * np.pi * a))
    zero = RealField.constant(grid, 0.0)
    with pytest.raises(EigensolverStalled) as info:
        lowest_eigenpair((zero, pot), ScfConfig(eigensolver_max_iter=2), RealField.constant(grid, 1.0))
    assert info.value.iterations == 2 and info.value.residual > 0


# -- SCF ----------------------------------------------------------------------

@pytest.mark.parametrize("m_bar,p", [(2.0, 5 / 3), (0.7, 5 / 3), (1.3, 2.0)])
def test_constant_density_exact(m_bar, p):
    grid = Grid3(4, 4, 8)
    res = scf_solve(NuclearModel.constant(m_bar), grid, ScfConfig(kinetic_exponent=p))
    assert res.iterations <= 3
    assert np.allclose(res.rho.values, m_bar, rtol=1e-13)
    assert np.max(np.abs(res.phi.values)) <= 1e-12
    assert res.lam == pytest.approx(p * m_bar ** (p - 1), rel=1e-10)
    assert res.energy.total == pytest.approx(grid.volume * m_bar**p, rel=1e-12)
    assert el_residual(res) <= 1e-12


def test_constant_density_1d():
    line = Grid3.line(32, 2 * np.pi)
    res = scf_solve_1d(NuclearModel.constant(3.0), line)
    assert res.iterations <= 3
    assert res.lam == pytest.approx(5 / 3 * 3.0 ** (2 / 3), rel=1e-10)
    assert res.energy.total == pytest.approx(2 * np.pi * 3.0 ** (5 / 3), rel=1e-12)
    assert el_residual(res) <= 1e-12


@pytest.fixture(scope="module")
def benchmark_n1():
    grid = Grid3(32, 4, 64)
    trace = []
    res = scf_solve(NuclearModel.separable_cos_gauss(1), grid,
                    callback=lambda n, u, r: trace.append(u.values.min() / u.values.max()))
    return res, trace


def test_benchmark_density_residual(benchmark_n1):
    res, min_ratio = benchmark_n1
    assert el_residual(res) <= 1e-5
    assert res.residual_trace[-1] <= 1e-6
    assert max(res.charge_drift) <= 1e-10
    assert integrate(res.rho) == pytest.approx(res.total_charge, rel=1e-10)
    assert np.array_equal(res.rho.values, res.u.values**2)
    assert min(min_ratio) >= -1e-12
    e = res.energy
    assert min(e.kinetic_grad, e.kinetic_tf, e.hartree) >= 0
    assert e.total == e.kinetic_grad + e.kinetic_tf + e.hartree


def test_unconverged_state_has_larger_residual(benchmark_n1):
    res, _ = benchmark_n1
    early = scf_solve(NuclearModel.separable_cos_gauss(1), Grid3(32, 4, 64),
                      ScfConfig(tolerance=1e3, max_iterations=2))
    assert early.iterations <= 2
    assert el_residual(early) > el_residual(res)


def test_grid_refinement_energy():
    plan = HomogenizationPlan()
    energies = []
    for shape in [(32, 4, 64), (64, 4, 128)]:
        grid = Grid3(*shape)
        energies.append(scf_solve(nuclear_density_for(plan, 1, grid), grid).energy.total)
    assert abs(energies[1] - energies[0]) <= 1e-4 * abs(energies[1])


@pytest.fixture(scope="module")
def reference_1d():
    line = Grid3.line(300, 2 * np.pi)
    return scf_solve_1d(5 * np.exp(-line.axes[2] ** 2 / 8), line)


def test_1d_reference_problem(reference_1d):
    assert el_residual(reference_1d) <= 1e-5
    with pytest.raises(GridMismatch):
        scf_solve_1d(NuclearModel.constant(1.0), Grid3(4, 4, 8))


@pytest.mark.xfail(strict=True, reason="m0(pi)/max m0 = 0.29 on L = 2 pi; neutrality keeps u(pi)/max u near 0.62")
def test_1d_reference_boundary_decay(reference_1d):
    u = reference_1d.u.values.ravel()
    assert u[0] / u.max() <= 1e-2


def test_1d_boundary_value_decreases_with_cell_length():
    ratios = []
    for L in (2 * np.pi, 10.0, 12.0):
        line = Grid3.line(256, L)
        res = scf_solve_1d(5 * np.exp(-line.axes[2] ** 2 / 8), line, ScfConfig(max_iterations=400))
        assert el_residual(res) <= 1e-5
        u = res.u.values.ravel()
        ratios.append(u[0] / u.max())
    assert ratios[0] > ratios[1] > ratios[2]


def test_dimensional_reduction():
    line = Grid3.line(64, 2 * np.pi)
    prof = 5 * np.exp(-line.axes[2] ** 2 / 8)
    r1 = scf_solve_1d(prof, line)
    r3 = scf_solve(NuclearModel.x3_profile(prof), Grid3(8, 4, 64))
    gap = np.max(np.abs(r3.rho.values - r1.rho.values.reshape(1, 1, -1)))
    assert gap <= 1e-4 * r1.rho.values.max()
    assert r3.energy.total == pytest.approx(r1.energy.total, rel=1e-6)


def test_gauge_shift():
    line = Grid3.line(64, 2 * np.pi)
    prof = 5 * np.exp(-line.axes[2] ** 2 / 8)
    cfg = ScfConfig(tolerance=1e-11, eigensolver_tol=1e-13)
    a = scf_solve_1d(prof, line, cfg)
    b = scf_solve_1d(prof, line, cfg, potential_shift=-1.5)
    assert np.max(np.abs(a.rho.values - b.rho.values)) <= 1e-10
    assert b.lam - a.lam == pytest.approx(-1.5, abs=1e-10)
    assert b.energy.total == pytest.approx(a.energy.total, rel=1e-12)


def test_translation_equivariance():
    grid = Grid3(16, 4, 32)
    base = NuclearModel.separable_cos_gauss(1).sample(grid)
    shifted = RealField(grid, np.roll(base.values, 1, axis=0), nonnegative=True)
    # both runs must be converged below the comparison level
    cfg = ScfConfig(tolerance=1e-11, eigensolver_tol=1e-12)
    a = scf_solve(NuclearModel.tabulated(base), grid, cfg)
    b = scf_solve(NuclearModel.tabulated(shifted), grid, cfg)
    assert np.max(np.abs(np.roll(a.rho.values, 1, axis=0) - b.rho.values)) <= 1e-10
    assert b.energy.total == pytest.approx(a.energy.total, rel=1e-12)


def test_zero_density_rejected():
    with pytest.raises(ValueError):
        scf_solve(NuclearModel.constant(0.0), Grid3(4, 4, 8))


def test_plain_iteration_does_not_converge():
    cfg = ScfConfig(mixing=1.0, acceleration="none", max_iterations=40)
    with pytest.raises(ScfDiverged) as info:
        scf_solve(NuclearModel.separable_cos_gauss(1), Grid3(16, 4, 32), cfg)
    assert len(info.value.trace) == 40


def test_growing_residual_detected(monkeypatch):
    grid = Grid3(4, 4, 16)
    calls = {"n": 0}

    def fake(terms, config, guess):
        calls["n"] += 1
        amp = 0.01 * 1.5 ** calls["n"] * (-1) ** calls["n"]
        w = RealField.from_function(grid, lambda a, b, c: 1 + min(amp, 0.9) * np.cos(c) + 0 * a + 0 * b)
        return 0.0, w * (1 / np.sqrt(integrate(w * w)))

    monkeypatch.setattr(solver, "lowest_eigenpair", fake)
    with pytest.raises(ScfDiverged) as info:
        scf_solve(NuclearModel.x3_profile(1 + 0.5 * np.cos(grid.axes[2])), grid, ScfConfig(max_iterations=100))
    assert "grew" in str(info.value)
    trace = info.value.trace
    assert all(b > a for a, b in zip(trace[-10:], trace[-9:]))
