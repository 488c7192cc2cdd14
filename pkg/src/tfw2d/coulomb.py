"""Periodic Coulomb interaction: Poisson solver, Hartree forms, lattice Green function.

The spectral route solves -Laplacian(phi) = 4 pi f on the periodized cell with
the zero-mean gauge. The real-space route evaluates the 2D-lattice Green
function

    G(x) = -(2 pi/|Q|) |x3| + sum_k [ 1/|x - (k,0)| - (1/|Q|) int_Q dy/|x - (y+k,0)| ]

by a truncated lattice sum, and is used to validate the spectral route.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate as _quad

from .cell import Grid3, apply_symbol, fft_forward
from .errors import GridMismatch, NotNeutral, SingularPoint
from .fields import RealField, integrate, lp_norm

NEUTRALITY_TOL = 1e-8

# Sign of the Coulomb multiplier; the validation suite flips it to check that
# a broken Poisson symbol is detected.
_POISSON_SIGN = 1.0


def coulomb_multiplier(grid: Grid3) -> np.ndarray:
    """4 pi / (4 pi^2 |kappa|^2) on every mode, zero on the k = 0 mode."""
    sym = grid.laplacian_symbols
    mult = np.zeros(grid.shape)
    np.divide(4 * np.pi, sym, out=mult, where=sym > 0)
    return _POISSON_SIGN * mult


def is_neutral(f: RealField, tol: float = NEUTRALITY_TOL) -> bool:
    return abs(integrate(f)) <= tol * lp_norm(f, 1)


def check_neutral(f: RealField, tol: float = NEUTRALITY_TOL) -> None:
    if not is_neutral(f, tol):
        raise NotNeutral(
            f"net charge {integrate(f):.3e} exceeds {tol:g} x L1 norm {lp_norm(f, 1):.3e}"
        )


def neutralize(f: RealField) -> RealField:
    """Subtract the grid mean so that the field carries no net charge."""
    return f - f.mean()


def solve_poisson(f: RealField, zero_mode: float = 0.0) -> RealField:
    """Periodic solution of -Laplacian(phi) = 4 pi f with mean ``zero_mode``."""
    check_neutral(f)
    phi = apply_symbol(f.grid, f.values, coulomb_multiplier(f.grid))
    return RealField(f.grid, phi + zero_mode)


def _hartree(f: RealField, g: RealField) -> float:
    if f.grid != g.grid:
        raise GridMismatch(f"grids {f.grid.shape} and {g.grid.shape} differ")
    check_neutral(f)
    check_neutral(g)
    cf = fft_forward(f.grid, f.values)
    cg = fft_forward(g.grid, g.values)
    s = np.sum(coulomb_multiplier(f.grid) * (cf.real * cg.real + cf.imag * cg.imag))
    return f.grid.volume * float(s)


def hartree_dg(f: RealField, g: RealField) -> float:
    """D_G(f, g) for neutral fields on the periodized cell."""
    return _hartree(f, g)


def hartree_d1(f: RealField, g: RealField) -> float:
    """1D Hartree form on a line grid (periodized -2 pi |s - t| kernel).

    Differs from the whole-line kernel by -(4 pi/L) p_f p_g, with p the
    dipole moments; the two agree for dipole-free data.
    """
    for h in (f, g):
        if not h.grid.is_1d:
            raise GridMismatch(f"hartree_d1 needs a line grid, got {h.grid.shape}")
    return _hartree(f, g)


# ---------------------------------------------------------------------------
# real-space Green function


@dataclass(frozen=True)
class GreenEvalConfig:
    """Truncation of the lattice sum and resolution of the cell averages.

    ``cell_average`` selects the closed-form rectangle integral ("analytic")
    or tensor Gauss-Legendre quadrature with ``quad_points`` per axis ("gauss").
    """

    lattice_cutoff: int = 20
    quad_points: int = 16
    cell_average: str = "analytic"
    q_side: float = 1.0

    def __post_init__(self):
        if self.lattice_cutoff < 2:
            raise ValueError(f"lattice_cutoff must be >= 2, got {self.lattice_cutoff}")
        if self.quad_points < 16:
            raise ValueError(f"quad_points must be >= 16, got {self.quad_points}")
        if self.cell_average not in ("analytic", "gauss"):
            raise ValueError(f"unknown cell_average {self.cell_average!r}")


def _rect_primitive(u, v, z):
    # F with d2F/dudv = 1/sqrt(u^2 + v^2 + z^2)
    z = np.abs(z)
    r = np.sqrt(u * u + v * v + z * z)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(u == 0, 0.0, u * np.arcsinh(v / np.sqrt(u * u + z * z)))
        t2 = np.where(v == 0, 0.0, v * np.arcsinh(u / np.sqrt(v * v + z * z)))
        t3 = np.where(z == 0, 0.0, z * np.arctan(u * v / (z * r)))
    return t1 + t2 - t3


def rectangle_inverse_distance(x1, x2, x3, a1, b1, a2, b2):
    """Integral over [a1,b1] x [a2,b2] of dy / |(x1 - y1, x2 - y2, x3)|."""
    u0, u1 = a1 - x1, b1 - x1
    v0, v1 = a2 - x2, b2 - x2
    return (
        _rect_primitive(u1, v1, x3)
        - _rect_primitive(u0, v1, x3)
        - _rect_primitive(u1, v0, x3)
        + _rect_primitive(u0, v0, x3)
    )


def _gauss_cell_average(x1, x2, x3, k1, k2, q, npts):
    nodes, weights = np.polynomial.legendre.leggauss(npts)
    y = 0.5 * q * nodes
    w = 0.25 * np.outer(weights, weights).ravel()
    y1 = np.repeat(y, npts)
    y2 = np.tile(y, npts)
    d1 = x1[..., None] - (k1[..., None] + y1)
    d2 = x2[..., None] - (k2[..., None] + y2)
    return np.sum(w / np.sqrt(d1 * d1 + d2 * d2 + (x3 * x3)[..., None]), axis=-1)


def _lattice_points(radius: float) -> np.ndarray:
    m = int(np.ceil(radius))
    i, j = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    pts = np.stack([i.ravel(), j.ravel()], axis=1).astype(float)
    return pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius]


def _green_sum(points: np.ndarray, cfg: GreenEvalConfig, skip_origin: bool, chunk=64):
    q = cfg.q_side
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    # lattice sums are centred on the evaluation point (exact periodicity and
    # evenness of the truncated sum); offsets are in units of q
    reach = cfg.lattice_cutoff + np.max(np.abs(pts[:, :2]) / q, initial=0.0) * np.sqrt(2) + 1
    lattice = _lattice_points(reach) * q
    out = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        p = pts[start : start + chunk]
        x1, x2, x3 = (p[:, i : i + 1] for i in range(3))
        k1, k2 = lattice[None, :, 0], lattice[None, :, 1]
        d1, d2 = x1 - k1, x2 - k2
        inside = np.hypot(d1, d2) <= cfg.lattice_cutoff * q
        dist = np.sqrt(d1 * d1 + d2 * d2 + x3 * x3)
        if skip_origin:
            inside = inside & ~((k1 == 0) & (k2 == 0))
        elif np.any(inside & (dist < 1e-9)):
            raise SingularPoint("evaluation point coincides with a lattice site")
        k1b = np.broadcast_to(k1, d1.shape)
        k2b = np.broadcast_to(k2, d1.shape)
        x3b = np.broadcast_to(x3, d1.shape)
        if cfg.cell_average == "analytic":
            avg = rectangle_inverse_distance(
                np.broadcast_to(x1, d1.shape), np.broadcast_to(x2, d1.shape), x3b,
                k1b - q / 2, k1b + q / 2, k2b - q / 2, k2b + q / 2,
            ) / (q * q)
        else:
            avg = _gauss_cell_average(
                np.broadcast_to(x1, d1.shape), np.broadcast_to(x2, d1.shape), x3b,
                k1b, k2b, q, cfg.quad_points,
            )
        with np.errstate(divide="ignore"):
            point = np.where(dist > 0, 1.0 / dist, 0.0)
        if skip_origin:
            origin = (k1b == 0) & (k2b == 0)
            out_terms = np.where(inside, point, 0.0) - np.where(inside | origin, avg, 0.0)
        else:
            out_terms = np.where(inside, point - avg, 0.0)
        out[start : start + chunk] = out_terms.sum(axis=1)
    return out


def eval_green_realspace(x, cfg: GreenEvalConfig = GreenEvalConfig()) -> np.ndarray:
    """Truncated lattice-sum value of G at one point or an array of points (..., 3)."""
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 3)
    far = -2 * np.pi / cfg.q_side**2 * np.abs(pts[:, 2])
    val = far + _green_sum(pts, cfg, skip_origin=False)
    return val.reshape(shape) if shape else float(val[0])


def green_regular_part(x, cfg: GreenEvalConfig = GreenEvalConfig()) -> np.ndarray:
    """psi(x) = G(x) + (2 pi/|Q|)|x3| - 1/|x|, finite at the origin."""
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    val = _green_sum(x.reshape(-1, 3), cfg, skip_origin=True)
    return val.reshape(shape) if shape else float(val[0])


def box_inverse_distance_integral(a: float, b: float, c: float) -> float:
    """Integral of 1/|x| over the box [-a,a] x [-b,b] x [-c,c].

    Each octant splits into three pyramids with apex at the origin; on the
    pyramid facing the x = a side the integral is (a^2/2) J(b/a, c/a) with
    J(B, C) = int_0^B asinh(C / sqrt(1 + s^2)) ds.
    """

    def pyramid(h, s1, s2):
        j, _ = _quad.quad(lambda s: np.arcsinh(s2 / np.sqrt(1 + s * s)), 0.0, s1,
                          epsabs=1e-14, epsrel=1e-13)
        return 0.5 * h * h * j

    octant = pyramid(a, b / a, c / a) + pyramid(b, a / b, c / b) + pyramid(c, a / c, b / c)
    return 8 * octant


@lru_cache(maxsize=16)
def _difference_kernel(grid: Grid3, cfg: GreenEvalConfig) -> np.ndarray:
    """G on all grid offsets; x3 offsets are linear (-(n3-1)..n3-1), circular storage."""
    h1, h2, h3 = grid.spacing
    n1, n2, n3 = grid.shape
    i1 = np.fft.fftfreq(n1, 1.0 / n1)
    i2 = np.fft.fftfreq(n2, 1.0 / n2)
    i3 = np.fft.fftfreq(2 * n3, 1.0 / (2 * n3))
    d1, d2, d3 = np.meshgrid(np.abs(i1) * h1, np.abs(i2) * h2, np.abs(i3) * h3, indexing="ij")
    offsets = np.stack([d1.ravel(), d2.ravel(), d3.ravel()], axis=1)
    # G is even in each coordinate: evaluate once per distinct |offset|
    uniq, inverse = np.unique(offsets, axis=0, return_inverse=True)
    origin = np.all(uniq == 0, axis=1)
    vals = np.empty(len(uniq))
    if np.any(~origin):
        vals[~origin] = eval_green_realspace(uniq[~origin], cfg)
    # self cell: box average of 1/|x| + psi(0) + box average of -(2 pi/|Q|)|x3|
    box = box_inverse_distance_integral(h1 / 2, h2 / 2, h3 / 2) / (h1 * h2 * h3)
    psi0 = green_regular_part(np.zeros(3), cfg)
    vals[origin] = box + psi0 - 2 * np.pi / cfg.q_side**2 * h3 / 4
    kernel = vals[inverse.ravel()].reshape(d1.shape)
    return kernel


def realspace_potential(f: RealField, cfg: GreenEvalConfig = GreenEvalConfig()) -> RealField:
    """G * f by quadrature over the (non-periodized) cell, periodic in x1, x2 only."""
    grid = f.grid
    if cfg.q_side != grid.cell.q_side:
        raise GridMismatch("GreenEvalConfig.q_side differs from the grid cell")
    kernel = _difference_kernel(grid, cfg)
    n3 = grid.n3
    padded = np.zeros(grid.shape[:2] + (2 * n3,))
    padded[:, :, :n3] = f.values
    conv = np.fft.ifftn(np.fft.fftn(padded) * np.fft.fftn(kernel)).real
    h1, h2, h3 = grid.spacing
    return RealField(grid, conv[:, :, :n3] * (h1 * h2 * h3))


def validate_green_vs_spectral(f: RealField, cfg: GreenEvalConfig = GreenEvalConfig()) -> float:
    """Relative L2 gap between the real-space convolution and the spectral solve."""
    spectral = solve_poisson(f)
    norm = lp_norm(spectral - spectral.mean(), 2)
    if norm == 0 and lp_norm(f, 1) == 0:
        return 0.0
    direct = realspace_potential(f, cfg)
    gap = (direct - direct.mean()) - (spectral - spectral.mean())
    return lp_norm(gap, 2) / norm
