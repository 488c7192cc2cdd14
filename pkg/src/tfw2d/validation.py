"""Self-check suite behind ``tfw2d validate``.

Every check returns ``(passed, detail)``; checks are grouped into suites so a
subset can be run with ``--only``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import coulomb
from .cell import Grid3, UnitCell, fft_forward, fft_inverse
from .coulomb import GreenEvalConfig
from .fields import RealField, integrate, lp_norm, negative_laplacian, spectral_gradient
from .homogenization import build_m_n
from .solver import (NuclearModel, ScfConfig, apply_hamiltonian, el_residual, lowest_eigenpair,
                     scf_solve, scf_solve_1d)

SUITES = ("spectral", "poisson", "green", "eigen", "scf", "lemma")
SEED = 20240229


@dataclass(frozen=True)
class Check:
    name: str
    suite: str
    func: Callable[[], tuple[bool, str]]


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    suite: str
    passed: bool
    detail: str
    seconds: float


_REGISTRY: list[Check] = []


def check(suite: str):
    def deco(func):
        _REGISTRY.append(Check(func.__name__, suite, func))
        return func
    return deco


def random_bandlimited(grid: Grid3, rng: np.random.Generator, kmax=(3, 1, 6),
                       neutral: bool = True) -> RealField:
    """Random real field whose modes satisfy |k_i| <= kmax_i (no Nyquist content)."""
    noise = rng.standard_normal(grid.shape)
    c = fft_forward(grid, noise)
    k1, k2, k3 = grid.mode_indices
    mask = ((np.abs(k1)[:, None, None] <= min(kmax[0], (grid.n1 - 1) // 2))
            & (np.abs(k2)[None, :, None] <= min(kmax[1], (grid.n2 - 1) // 2))
            & (np.abs(k3)[None, None, :] <= min(kmax[2], (grid.n3 - 1) // 2)))
    c = c * mask
    if neutral:
        c[0, 0, 0] = 0.0
    return RealField(grid, fft_inverse(grid, c))


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# -- spectral ---------------------------------------------------------------

@check("spectral")
def transform_roundtrip():
    rng = np.random.default_rng(SEED)
    grid = Grid3(64, 4, 128)
    f = rng.standard_normal(grid.shape)
    back = fft_inverse(grid, fft_forward(grid, f))
    err = np.linalg.norm(back - f) / np.linalg.norm(f)
    return err <= 1e-12, f"relative error {err:.2e}"


@check("spectral")
def parseval_identity():
    rng = np.random.default_rng(SEED + 1)
    grid = Grid3(64, 4, 128)
    f = rng.standard_normal(grid.shape)
    c = fft_forward(grid, f)
    err = _rel(float(np.sum(np.abs(c) ** 2)), float(np.mean(f * f)))
    return err <= 1e-12, f"relative error {err:.2e}"


@check("spectral")
def direct_summation_dft():
    rng = np.random.default_rng(SEED + 2)
    grid = Grid3(4, 4, 8, UnitCell(1.0, 3.0))
    f = rng.standard_normal(grid.shape)
    x1, x2, x3 = (a.ravel() for a in np.meshgrid(*grid.axes, indexing="ij"))
    k1, k2, k3 = (a.ravel() for a in np.meshgrid(*grid.mode_indices, indexing="ij"))
    q, L = grid.cell.q_side, grid.cell.length_x3
    phase = np.exp(-2j * np.pi * (np.outer(k1, x1) / q + np.outer(k2, x2) / q + np.outer(k3, x3) / L))
    direct = (phase @ f.ravel()) / grid.size
    err = np.max(np.abs(direct - fft_forward(grid, f).ravel()))
    return err <= 1e-12, f"max deviation {err:.2e}"


@check("spectral")
def laplacian_symbol_on_modes():
    grid = Grid3(8, 8, 16, UnitCell(1.0, 2 * np.pi))
    worst = 0.0
    for k in [(1, 0, 0), (0, 2, 0), (0, 0, 2), (1, -2, 3)]:
        mode = RealField.from_function(
            grid, lambda a, b, c: np.cos(2 * np.pi * (k[0] * a + k[1] * b + k[2] * c / grid.cell.length_x3)))
        lap = negative_laplacian(mode)
        sym = grid.laplacian_symbols[grid.storage_index(k)]
        worst = max(worst, float(np.max(np.abs(lap.values - sym * mode.values))) / max(sym, 1.0))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


# -- poisson ----------------------------------------------------------------

def _poisson_samples(count=50):
    rng = np.random.default_rng(SEED + 3)
    grid = Grid3(16, 4, 32, UnitCell(1.0, 2 * np.pi))
    return [random_bandlimited(grid, rng) for _ in range(count)]


@check("poisson")
def poisson_residual():
    worst = 0.0
    for f in _poisson_samples():
        phi = coulomb.solve_poisson(f)
        r = negative_laplacian(phi) - 4 * np.pi * f
        worst = max(worst, lp_norm(r, 2) / lp_norm(4 * np.pi * f, 2))
    return worst <= 1e-12, f"max relative residual {worst:.2e}"


@check("poisson")
def hartree_gradient_identity():
    worst = 0.0
    for f in _poisson_samples():
        phi = coulomb.solve_poisson(f)
        grad_sq = sum(integrate(g * g) for g in spectral_gradient(phi))
        worst = max(worst, _rel(coulomb.hartree_dg(f, f), grad_sq / (4 * np.pi)))
    return worst <= 1e-10, f"max relative gap {worst:.2e}"


@check("poisson")
def hartree_symmetry_and_positivity():
    fs = _poisson_samples(20)
    sym = max(_rel(coulomb.hartree_dg(f, g), coulomb.hartree_dg(g, f)) for f, g in zip(fs, fs[1:]))
    pos = min(coulomb.hartree_dg(f, f) for f in fs)
    return sym <= 1e-12 and pos >= 0, f"symmetry {sym:.2e}, min D(f,f) {pos:.3e}"


def d1_kernel_quadrature(f, L: float, n_outer: int = 128, images: int = 2) -> float:
    """-2 pi int int |s - t| f(s) f(t) over one period in s and 2*images+1 periods in t.

    The inner integral is adaptive (split at the kink t = s); the outer one is
    the periodic trapezoid rule.
    """
    from scipy.integrate import quad

    s_nodes = -L / 2 + np.arange(n_outer) * (L / n_outer)
    lo, hi = -(images + 0.5) * L, (images + 0.5) * L
    inner = np.empty(n_outer)
    for i, s in enumerate(s_nodes):
        g = lambda t, s=s: -2 * np.pi * abs(s - t) * f(t)  # noqa: E731
        a = quad(g, lo, s, limit=200, epsabs=1e-10, epsrel=1e-10)[0]
        b = quad(g, s, hi, limit=200, epsabs=1e-10, epsrel=1e-10)[0]
        inner[i] = a + b
    return float(np.sum(f(s_nodes) * inner) * (L / n_outer))


@check("poisson")
def hartree_d1_kernel_quadrature():
    L, n = 2 * np.pi, 512
    grid = Grid3.line(n, L)
    f = lambda t: np.cos(2 * np.pi * t / L)  # noqa: E731
    field = RealField(grid, f(grid.axes[2]))
    err = _rel(coulomb.hartree_d1(field, field), d1_kernel_quadrature(f, L))
    return err <= 1e-4, f"relative gap {err:.2e}"


# -- green ------------------------------------------------------------------

def _psi_sample_points():
    a = np.linspace(-0.4, 0.4, 5)
    b = np.linspace(-2.0, 2.0, 9)
    return np.stack(np.meshgrid(a, a, b, indexing="ij"), axis=-1).reshape(-1, 3)


def coarse_test_density(grid: Grid3) -> RealField:
    return RealField.from_function(grid, lambda a, b, c: np.cos(2 * np.pi * a) * np.exp(-c * c / 0.5))


@check("green")
def green_evenness():
    rng = np.random.default_rng(SEED + 4)
    x = rng.uniform(-0.5, 0.5, (20, 3)) * np.array([1, 1, 4])
    cfg = GreenEvalConfig(lattice_cutoff=20)
    err = float(np.max(np.abs(coulomb.eval_green_realspace(x, cfg) - coulomb.eval_green_realspace(-x, cfg))))
    return err <= 1e-10, f"max |G(x) - G(-x)| {err:.2e}"


@check("green")
def green_periodicity():
    rng = np.random.default_rng(SEED + 5)
    x = rng.uniform(-0.5, 0.5, (20, 3)) * np.array([1, 1, 4])
    cfg = GreenEvalConfig(lattice_cutoff=40)
    g0 = coulomb.eval_green_realspace(x, cfg)
    err = max(float(np.max(np.abs(coulomb.eval_green_realspace(x + shift, cfg) - g0)))
              for shift in ([1.0, 0, 0], [0, 1.0, 0]))
    return err <= 1e-8, f"max lattice-shift change {err:.2e}"


@check("green")
def psi_cutoff_stability():
    pts = _psi_sample_points()
    m20 = float(np.max(np.abs(coulomb.green_regular_part(pts, GreenEvalConfig(lattice_cutoff=20)))))
    m40 = float(np.max(np.abs(coulomb.green_regular_part(pts, GreenEvalConfig(lattice_cutoff=40)))))
    change = abs(m40 - m20) / m20
    ok = np.isfinite(m20) and np.isfinite(m40) and change < 0.1
    return ok, f"max|psi| {m20:.4f} -> {m40:.4f} ({change:.2%})"


@check("green")
def green_vs_spectral():
    grid = Grid3(16, 16, 32, UnitCell(1.0, 4.0))
    gap = coulomb.validate_green_vs_spectral(coarse_test_density(grid), GreenEvalConfig())
    return gap <= 5e-2, f"relative L2 gap {gap:.2e}"


@check("green")
def green_cutoff_refinement():
    grid = Grid3(16, 16, 32, UnitCell(1.0, 4.0))
    f = coarse_test_density(grid)
    g4 = coulomb.validate_green_vs_spectral(f, GreenEvalConfig(lattice_cutoff=4))
    g8 = coulomb.validate_green_vs_spectral(f, GreenEvalConfig(lattice_cutoff=8))
    return g8 < g4, f"gap {g4:.2e} (cutoff 4) -> {g8:.2e} (cutoff 8)"


# -- eigen ------------------------------------------------------------------

def dense_hamiltonian(coef: RealField, phi: RealField) -> np.ndarray:
    grid = coef.grid
    cols = []
    for j in range(grid.size):
        e = np.zeros(grid.size)
        e[j] = 1.0
        cols.append(apply_hamiltonian(coef, phi, RealField(grid, e)).values.ravel())
    return np.array(cols).T


@check("eigen")
def dense_assembly_eigenpair():
    rng = np.random.default_rng(SEED + 6)
    grid = Grid3(4, 4, 8, UnitCell(1.0, 2 * np.pi))
    worst_sym = worst_lam = 0.0
    cfg = ScfConfig()
    for _ in range(5):
        coef = RealField(grid, rng.uniform(0, 2, grid.shape))
        phi = RealField(grid, rng.standard_normal(grid.shape))
        H = dense_hamiltonian(coef, phi)
        worst_sym = max(worst_sym, float(np.max(np.abs(H - H.T))))
        lam_ref = float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
        lam, _ = lowest_eigenpair((coef, phi), cfg, RealField.constant(grid, 1.0))
        worst_lam = max(worst_lam, abs(lam - lam_ref))
    ok = worst_sym <= 1e-10 and worst_lam <= 1e-8
    return ok, f"asymmetry {worst_sym:.2e}, eigenvalue gap {worst_lam:.2e}"


@check("eigen")
def free_laplacian_ground_state():
    grid = Grid3(4, 4, 8)
    zero = RealField.constant(grid, 0.0)
    guess = RealField(grid, 1.0 + 0.1 * np.cos(grid.mesh()[2]) * np.ones(grid.shape))
    lam, w = lowest_eigenpair((zero, zero), ScfConfig(), guess)
    spread = float(np.ptp(w.values))
    return abs(lam) <= 1e-10 and spread <= 1e-8, f"lambda {lam:.2e}, spread {spread:.2e}"


# -- scf --------------------------------------------------------------------

@check("scf")
def constant_density_exact():
    m_bar = 2.0
    grid = Grid3(4, 4, 8)
    res = scf_solve(NuclearModel.constant(m_bar), grid)
    e_ref = grid.volume * m_bar ** (5 / 3)
    lam_ref = (5 / 3) * m_bar ** (2 / 3)
    el, ll = _rel(res.energy.total, e_ref), _rel(res.lam, lam_ref)
    ok = res.iterations <= 3 and ll <= 1e-10 and el <= 1e-12
    return ok, f"{res.iterations} iterations, lambda {ll:.1e}, energy {el:.1e}"


@check("scf")
def dimensional_reduction():
    line = Grid3.line(64)
    profile = 5 * np.exp(-line.axes[2] ** 2 / 8)
    r1 = scf_solve_1d(profile, line)
    r3 = scf_solve(NuclearModel.x3_profile(profile), Grid3(4, 4, 64))
    gap = float(np.max(np.abs(r3.rho.values - r1.rho.values.reshape(1, 1, -1))))
    scale = float(r1.rho.values.max())
    return gap <= 1e-4 * scale, f"max |rho_3D - rho_1D| / max rho = {gap / scale:.2e}"


@check("scf")
def gauge_shift():
    line = Grid3.line(64)
    profile = 5 * np.exp(-line.axes[2] ** 2 / 8)
    # the two runs agree to the SCF tolerance, so it must sit below the check level
    cfg = ScfConfig(tolerance=1e-11, eigensolver_tol=1e-13)
    a = scf_solve_1d(profile, line, cfg)
    b = scf_solve_1d(profile, line, cfg, potential_shift=0.75)
    drho = float(np.max(np.abs(a.rho.values - b.rho.values)))
    dlam = abs((b.lam - a.lam) - 0.75)
    return drho <= 1e-10 and dlam <= 1e-10, f"density change {drho:.1e}, lambda shift error {dlam:.1e}"


@check("scf")
def benchmark_density_residual():
    grid = Grid3(32, 4, 64)
    res = scf_solve(NuclearModel.separable_cos_gauss(1), grid)
    r = el_residual(res)
    drift = max(res.charge_drift)
    return r <= 1e-5 and drift <= 1e-10, f"EL residual {r:.2e}, charge drift {drift:.1e}"


# -- slice charges ------------------------------------------------------------------

def slice_charge_deviation(p: float, n_values=(1, 2, 4), g1: int = 32) -> float:
    """Max relative deviation of slice integrals of m_N^p from the exact value."""
    from scipy.integrate import quad

    exact = quad(lambda y: abs(np.cos(np.pi * y)) ** p, -0.5, 0.5, points=[0.0])[0]
    base = NuclearModel.separable_cos_gauss()
    worst = 0.0
    for n in n_values:
        grid = Grid3(g1 * n, 4, 64)
        m = build_m_n(base, n, grid)
        x3 = grid.axes[2]
        ref = (base.amplitude * np.exp(-x3**2 / base.gauss_width)) ** p * exact
        slices = (m.values**p).mean(axis=(0, 1)) * grid.cell.area
        worst = max(worst, float(np.max(np.abs(slices / ref - 1))))
    return worst


@check("lemma")
def slice_charge_p1():
    dev = slice_charge_deviation(1.0)
    return dev <= 1e-3, f"max relative deviation {dev:.2e}"


@check("lemma")
def slice_charge_p53():
    dev = slice_charge_deviation(5 / 3)
    return dev <= 1e-2, f"max relative deviation {dev:.2e}"


# ---------------------------------------------------------------------------

def checks(only=None) -> list[Check]:
    if only is not None and only not in SUITES:
        raise ValueError(f"unknown suite {only!r}; choose from {', '.join(SUITES)}")
    return [c for c in _REGISTRY if only is None or c.suite == only]


def run_checks(only=None) -> list[CheckOutcome]:
    out = []
    for c in checks(only):
        t0 = time.perf_counter()
        try:
            ok, detail = c.func()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckOutcome(c.name, c.suite, bool(ok), detail, time.perf_counter() - t0))
    return out


def format_table(outcomes) -> str:
    width = max((len(o.name) for o in outcomes), default=4)
    lines = [f"{'suite':<9} {'check':<{width}}  result  detail"]
    for o in outcomes:
        lines.append(f"{o.suite:<9} {o.name:<{width}}  {'PASS' if o.passed else 'FAIL':<6}  {o.detail}")
    return "\n".join(lines)
