"""Self-consistent ground state of the periodic TFW model and of its 1D limit.

Each fixed-point step takes the lowest eigenpair of

    H_n = -Laplacian + V_n,    V[u] = p |u|^(2p-2) + Phi[u],    -Laplacian(Phi[u]) = 4 pi (u^2 - m),

and rescales the eigenfunction to carry the nuclear charge. V_n is V[u_n]
for the plain iteration, or an Anderson-mixed potential built from the
previous V_k and V[u_k].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .cell import Grid3, apply_symbol
from .coulomb import hartree_d1, hartree_dg, neutralize, solve_poisson
from .errors import EigensolverStalled, GridMismatch, ScfDiverged, UnsampleableModel
from .fields import (
    RealField,
    clamp_density,
    integrate,
    lp_norm,
    negative_laplacian,
    power_integral,
    spectral_gradient_sq_integral,
)

log = logging.getLogger(__name__)

DEFAULT_AMPLITUDE = 5 * np.pi / 2
DEFAULT_GAUSS_WIDTH = 8.0
DIVERGENCE_WINDOW = 10


@dataclass(frozen=True, eq=False)
class NuclearModel:
    """Nuclear charge density m.

    kinds:
      * ``separable_cos_gauss``: amplitude * |cos(n pi x1)| * exp(-x3^2 / gauss_width)
      * ``constant``: m = value everywhere
      * ``tabulated``: samples on a fixed grid
      * ``x3_profile``: 1D samples along x3, constant in x1 and x2
    """

    kind: str
    n: int = 1
    amplitude: float = DEFAULT_AMPLITUDE
    gauss_width: float = DEFAULT_GAUSS_WIDTH
    value: float = 0.0
    field: Optional[RealField] = None
    profile: Optional[np.ndarray] = None

    @classmethod
    def separable_cos_gauss(cls, n=1, amplitude=DEFAULT_AMPLITUDE, gauss_width=DEFAULT_GAUSS_WIDTH):
        if n < 1:
            raise ValueError(f"n must be a positive integer, got {n}")
        if gauss_width <= 0:
            raise ValueError(f"gauss_width must be positive, got {gauss_width}")
        return cls("separable_cos_gauss", n=int(n), amplitude=float(amplitude),
                   gauss_width=float(gauss_width))

    @classmethod
    def constant(cls, value):
        if value < 0:
            raise ValueError(f"constant nuclear density must be nonnegative, got {value}")
        return cls("constant", value=float(value))

    @classmethod
    def tabulated(cls, f: RealField):
        return cls("tabulated", field=f)

    @classmethod
    def x3_profile(cls, values):
        return cls("x3_profile", profile=np.asarray(values, dtype=float).copy())

    @property
    def is_x_invariant(self) -> bool:
        return self.kind in ("constant", "x3_profile")

    def sample(self, grid: Grid3) -> RealField:
        if self.kind == "separable_cos_gauss":
            x1, _, x3 = grid.mesh()
            vals = self.amplitude * np.abs(np.cos(self.n * np.pi * x1)) * np.exp(
                -(x3**2) / self.gauss_width
            )
            vals = np.broadcast_to(vals, grid.shape)
        elif self.kind == "constant":
            vals = np.full(grid.shape, self.value)
        elif self.kind == "tabulated":
            if self.field.grid != grid:
                raise UnsampleableModel(
                    f"tabulated model lives on {self.field.grid.shape}, requested {grid.shape}"
                )
            vals = self.field.values
        elif self.kind == "x3_profile":
            if self.profile.shape != (grid.n3,):
                raise UnsampleableModel(
                    f"x3 profile has {self.profile.size} samples, grid has n3 = {grid.n3}"
                )
            vals = np.broadcast_to(self.profile[None, None, :], grid.shape)
        else:
            raise ValueError(f"unknown nuclear model kind {self.kind!r}")
        return RealField(grid, vals, nonnegative=True)

    def total_charge(self, grid: Grid3) -> float:
        return integrate(self.sample(grid))


@dataclass(frozen=True)
class ScfConfig:
    """Fixed-point controls.

    The iteration mixes the effective potential: ``mixing`` is the step on
    the potential residual, accelerated by Anderson extrapolation over the
    last ``anderson_depth`` iterates. ``acceleration="none"`` with
    ``mixing=1`` is the plain iteration (u_{n+1} = ground state of H(u_n)).
    """

    tolerance: float = 1e-6
    max_iterations: int = 200
    mixing: float = 0.5
    eigensolver_tol: float = 1e-10
    eigensolver_max_iter: int = 500
    kinetic_exponent: float = 5.0 / 3.0
    acceleration: str = "anderson"
    anderson_depth: int = 6

    def __post_init__(self):
        if self.acceleration not in ("anderson", "none"):
            raise ValueError(f"acceleration must be 'anderson' or 'none', got {self.acceleration!r}")
        if self.anderson_depth < 0:
            raise ValueError(f"anderson_depth must be >= 0, got {self.anderson_depth}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 < self.mixing <= 1:
            raise ValueError(f"mixing must lie in (0, 1], got {self.mixing}")
        if not self.eigensolver_tol > 0:
            raise ValueError(f"eigensolver_tol must be positive, got {self.eigensolver_tol}")
        if self.eigensolver_max_iter < 1:
            raise ValueError(f"eigensolver_max_iter must be >= 1, got {self.eigensolver_max_iter}")
        if not self.kinetic_exponent > 1.5:
            raise ValueError(f"kinetic_exponent must exceed 3/2, got {self.kinetic_exponent}")


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic_grad: float
    kinetic_tf: float
    hartree: float

    @property
    def total(self) -> float:
        return self.kinetic_grad + self.kinetic_tf + self.hartree

    def as_dict(self) -> dict:
        return {
            "kinetic_grad": self.kinetic_grad,
            "kinetic_tf": self.kinetic_tf,
            "hartree": self.hartree,
            "total": self.total,
        }


@dataclass(frozen=True, eq=False)
class ScfResult:
    u: RealField
    rho: RealField
    phi: RealField
    lam: float
    energy: EnergyBreakdown
    iterations: int
    residual_trace: list = field(default_factory=list)
    charge_drift: list = field(default_factory=list)
    total_charge: float = 0.0
    kinetic_exponent: float = 5.0 / 3.0

    @property
    def grid(self) -> Grid3:
        return self.u.grid


# ---------------------------------------------------------------------------
# linear algebra


def apply_hamiltonian(u_prev_pow: RealField, phi: RealField, v: RealField) -> RealField:
    """(-Laplacian + u_prev_pow + phi) v, the Laplacian taken spectrally."""
    if not (u_prev_pow.grid == phi.grid == v.grid):
        raise GridMismatch("hamiltonian terms live on different grids")
    return RealField(v.grid, _hamiltonian_values(v.grid, u_prev_pow.values + phi.values, v.values))


def _hamiltonian_values(grid: Grid3, potential: np.ndarray, v: np.ndarray) -> np.ndarray:
    return apply_symbol(grid, v, grid.laplacian_symbols) + potential * v


def _orthonormal_basis(cols: list[np.ndarray]) -> np.ndarray:
    S = np.stack(cols, axis=1)
    Q, R = np.linalg.qr(S)
    diag = np.abs(np.diag(R))
    keep = diag > 1e-12 * diag[0]
    keep[0] = True
    return Q[:, keep]


def lowest_eigenpair(potential_terms, config: ScfConfig, initial_guess: RealField):
    """Lowest eigenpair of -Laplacian + sum(potential_terms).

    Locally optimal block preconditioned conjugate gradient with a single
    vector, preconditioned by (free Laplacian symbol + shift)^-1. Returns
    ``(lam, w)`` with ``w`` L2-normalized and of nonnegative integral.
    """
    grid = initial_guess.grid
    for t in potential_terms:
        if t.grid != grid:
            raise GridMismatch("potential and initial guess live on different grids")
    potential = np.sum([t.values for t in potential_terms], axis=0).ravel()
    sym = grid.laplacian_symbols

    def H(v):
        return _hamiltonian_values(grid, potential.reshape(grid.shape), v.reshape(grid.shape)).ravel()

    x = np.array(initial_guess.values, dtype=float).ravel()
    nx = np.linalg.norm(x)
    if nx == 0:
        x = np.ones(grid.size)
        nx = np.linalg.norm(x)
    x = x / nx
    Hx = H(x)
    lam = float(x @ Hx)
    shift = max(1.0, float(np.mean(potential)) - lam)
    precond = 1.0 / (sym + shift)
    p = None
    res = np.inf
    for it in range(1, config.eigensolver_max_iter + 1):
        r = Hx - lam * x
        res = float(np.linalg.norm(r))
        if res <= config.eigensolver_tol:
            break
        w = apply_symbol(grid, r.reshape(grid.shape), precond).ravel()
        cols = [x, w / np.linalg.norm(w)]
        if p is not None:
            npn = np.linalg.norm(p)
            if npn > 0:
                cols.append(p / npn)
        Q = _orthonormal_basis(cols)
        HQ = np.stack([H(Q[:, j]) for j in range(Q.shape[1])], axis=1)
        A = Q.T @ HQ
        evals, evecs = np.linalg.eigh(0.5 * (A + A.T))
        c = evecs[:, 0]
        x_new = Q @ c
        p = Q[:, 1:] @ c[1:]
        x = x_new / np.linalg.norm(x_new)
        Hx = H(x)
        lam = float(x @ Hx)
    else:
        r = Hx - lam * x
        res = float(np.linalg.norm(r))
        if res > config.eigensolver_tol:
            raise EigensolverStalled(config.eigensolver_max_iter, res)
    if x.sum() < 0:
        x = -x
    # unit vector in the discrete 2-norm -> unit L2 norm on the cell
    w = RealField(grid, x.reshape(grid.shape) / np.sqrt(grid.volume / grid.size))
    return lam, w


# ---------------------------------------------------------------------------
# fixed point


def _nonlinear_coefficient(u: np.ndarray, p: float) -> np.ndarray:
    return p * np.abs(u) ** (2 * p - 2)


def _energy(u: RealField, rho: RealField, m: RealField, p: float) -> EnergyBreakdown:
    diff = neutralize(rho - m)
    form = hartree_d1 if u.grid.is_1d else hartree_dg
    return EnergyBreakdown(
        kinetic_grad=spectral_gradient_sq_integral(u),
        kinetic_tf=power_integral(rho, p),
        hartree=0.5 * form(diff, diff),
    )


def _as_field(m: Union[NuclearModel, RealField], grid: Grid3) -> RealField:
    if isinstance(m, NuclearModel):
        return m.sample(grid)
    if m.grid != grid:
        raise GridMismatch(f"nuclear density on {m.grid.shape}, solver grid {grid.shape}")
    return RealField(grid, m.values, nonnegative=True)


def _effective_potential(u: RealField, m_field: RealField, p: float, shift: float) -> np.ndarray:
    phi = solve_poisson(neutralize(u * u - m_field), zero_mode=shift)
    return _nonlinear_coefficient(u.values, p) + phi.values


class _Anderson:
    """Type-II Anderson extrapolation of a fixed-point map on flat vectors."""

    def __init__(self, step: float, depth: int):
        self.step = step
        self.depth = depth
        self.xs: list[np.ndarray] = []
        self.rs: list[np.ndarray] = []

    def update(self, x: np.ndarray, r: np.ndarray) -> np.ndarray:
        x, r = x.ravel(), r.ravel()
        nxt = x + self.step * r
        if self.depth == 0:
            return nxt
        self.xs = (self.xs + [x.copy()])[-(self.depth + 1):]
        self.rs = (self.rs + [r.copy()])[-(self.depth + 1):]
        if len(self.xs) > 1:
            dX = np.diff(np.array(self.xs), axis=0).T
            dR = np.diff(np.array(self.rs), axis=0).T
            gamma = np.linalg.lstsq(dR, r, rcond=None)[0]
            nxt = nxt - (dX + self.step * dR) @ gamma
        return nxt


def _scf(
    m_field: RealField,
    config: ScfConfig,
    potential_shift: float = 0.0,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    callback: Optional[Callable] = None,
) -> ScfResult:
    grid = m_field.grid
    p = config.kinetic_exponent
    Z = integrate(m_field)
    if not Z > 0:
        raise ValueError("nuclear density must carry a positive total charge")
    u = RealField.constant(grid, np.sqrt(Z / grid.volume))
    v_in = _effective_potential(u, m_field, p, potential_shift)
    depth = config.anderson_depth if config.acceleration == "anderson" else 0
    mixer = _Anderson(config.mixing, depth)
    trace, drift = [], []
    growth = 0
    converged = False
    n = 0
    for n in range(1, config.max_iterations + 1):
        _, w = lowest_eigenpair((RealField(grid, v_in),), config, u)
        new = np.sqrt(Z) * w.values
        if project is not None:
            new = project(new)
            new = new * np.sqrt(Z / (grid.volume * np.mean(new * new)))
        u_next = RealField(grid, new)
        res = lp_norm(u_next - u, 2)
        drift.append(abs(integrate(u_next * u_next) - Z) / Z)
        growth = growth + 1 if trace and res > trace[-1] else 0
        trace.append(res)
        log.debug("scf iteration %d: |u_n - u_n+1| = %.3e", n, res)
        if callback is not None:
            callback(n, u_next, res)
        u = u_next
        if res <= config.tolerance:
            converged = True
            break
        if growth >= DIVERGENCE_WINDOW:
            raise ScfDiverged(
                f"fixed-point residual grew for {DIVERGENCE_WINDOW} consecutive iterations", trace
            )
        v_out = _effective_potential(u, m_field, p, potential_shift)
        v_in = mixer.update(v_in, v_out - v_in).reshape(grid.shape)
    if not converged:
        raise ScfDiverged(
            f"no convergence after {config.max_iterations} iterations "
            f"(last residual {trace[-1]:.3e})",
            trace,
        )
    rho = RealField(grid, u.values**2, nonnegative=True)
    phi = solve_poisson(neutralize(rho - m_field), zero_mode=potential_shift)
    hu = negative_laplacian(u).values + (_nonlinear_coefficient(u.values, p) + phi.values) * u.values
    lam = float(np.sum(hu * u.values) / np.sum(u.values * u.values))
    log.info("scf converged in %d iterations", n)
    return ScfResult(
        u=u,
        rho=rho,
        phi=phi,
        lam=lam,
        energy=_energy(u, rho, m_field, p),
        iterations=n,
        residual_trace=trace,
        charge_drift=drift,
        total_charge=Z,
        kinetic_exponent=p,
    )


def scf_solve(m, grid: Grid3, config: ScfConfig = ScfConfig(), *, potential_shift: float = 0.0,
              project=None, callback=None) -> ScfResult:
    """Ground state of the periodic 3D problem for nuclear density ``m``.

    ``potential_shift`` fixes the mean of the mean-field potential (gauge);
    ``project`` is applied to each new iterate before renormalization.
    """
    return _scf(_as_field(m, grid), config, potential_shift, project, callback)


def scf_solve_1d(mu, grid: Grid3, config: ScfConfig = ScfConfig(), *, potential_shift: float = 0.0,
                 project=None, callback=None) -> ScfResult:
    """Ground state of the 1D limit model on a line grid."""
    if not grid.is_1d:
        raise GridMismatch(f"scf_solve_1d needs a line grid, got {grid.shape}")
    if isinstance(mu, np.ndarray):
        mu = NuclearModel.x3_profile(mu)
    return _scf(_as_field(mu, grid), config, potential_shift, project, callback)


def el_residual(result: ScfResult, m=None) -> float:
    """|| -Lap u + p u^(2p-1) + Phi u - lam u ||_2 / ||u||_2."""
    u = result.u
    p = result.kinetic_exponent
    r = (
        negative_laplacian(u).values
        + _nonlinear_coefficient(u.values, p) * u.values
        + (result.phi.values - result.lam) * u.values
    )
    return lp_norm(RealField(u.grid, r), 2) / lp_norm(u, 2)
