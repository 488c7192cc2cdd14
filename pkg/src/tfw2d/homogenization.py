"""Homogenization study: m_N(x) = m(N x1, N x2, x3) against the 1D limit model."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cell import Grid3, UnitCell, fft_forward, fft_inverse
from .errors import DegenerateFit, TFWError, UnsampleableModel
from .fields import RealField, lp_norm, spectral_gradient_sq_integral
from .solver import NuclearModel, ScfConfig, ScfResult, el_residual, scf_solve, scf_solve_1d

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModeFilter:
    """Keep Fourier modes with |k_i| <= k_max_i, drop the rest."""

    k1_max: int
    k2_max: int
    k3_max: int

    @classmethod
    def for_n(cls, n: int) -> "ModeFilter":
        # positive modes up to (4N, 0, 6)
        return cls(4 * n, 0, 6)

    def mask(self, grid: Grid3) -> np.ndarray:
        k1, k2, k3 = grid.mode_indices
        return (
            (np.abs(k1)[:, None, None] <= self.k1_max)
            & (np.abs(k2)[None, :, None] <= self.k2_max)
            & (np.abs(k3)[None, None, :] <= self.k3_max)
        )

    def apply(self, grid: Grid3, values: np.ndarray) -> np.ndarray:
        c = np.fft.fftn(values.reshape(grid.shape))
        return np.fft.ifftn(c * self.mask(grid)).real


def abs_cos_coefficients(n_harmonics: int) -> np.ndarray:
    """Cosine-series coefficients a_j of |cos(pi y)| = sum_j a_j cos(2 pi j y), j = 0..n."""
    j = np.arange(n_harmonics + 1)
    a = (4 / np.pi) * (-1.0) ** (j + 1) / (4 * j**2 - 1)
    a[0] = 2 / np.pi
    return a


def build_m_n(base: NuclearModel, n: int, grid: Grid3, *, analytic: bool = False,
              max_mode: Optional[int] = None) -> RealField:
    """Sample m_N(x) = m(n x1, n x2, x3) on ``grid``.

    With ``analytic`` the |cos| factor of a separable model is summed from its
    closed-form Fourier series, keeping x1 modes up to ``max_mode`` (default:
    the grid Nyquist index); the slice charge is then exact.
    """
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if base.kind == "separable_cos_gauss":
        freq = n * base.n
        if not analytic:
            return NuclearModel.separable_cos_gauss(freq, base.amplitude, base.gauss_width).sample(grid)
        limit = grid.n1 // 2 if max_mode is None else min(max_mode, grid.n1 // 2)
        a = abs_cos_coefficients(limit // freq)
        x1, _, x3 = grid.mesh()
        profile = sum(a_j * np.cos(2 * np.pi * j * freq * x1) for j, a_j in enumerate(a))
        vals = base.amplitude * profile * np.exp(-(x3**2) / base.gauss_width)
        return RealField(grid, np.broadcast_to(vals, grid.shape), nonnegative=True)
    if base.is_x_invariant:
        return base.sample(grid)
    if base.kind == "tabulated":
        src = base.field.grid
        if src.cell != grid.cell or src.n3 != grid.n3 or grid.n1 != n * src.n1:
            raise UnsampleableModel(
                f"cannot rescale a tabulated model on {src.shape} to {grid.shape} with N = {n}"
            )
        vals = np.tile(base.field.values, (n, 1, 1))
        if grid.n2 == n * src.n2:
            vals = np.tile(vals, (1, n, 1))
        elif not (grid.n2 == src.n2 and np.allclose(base.field.values, base.field.values[:, :1, :])):
            raise UnsampleableModel("tabulated model varies in x2; grid n2 must scale with N")
        return RealField(grid, vals, nonnegative=True)
    raise UnsampleableModel(f"cannot build m_N for model kind {base.kind!r}")


def average_to_1d(m, grid: Optional[Grid3] = None) -> np.ndarray:
    """x1-x2 average of ``m`` on every x3 plane (a model is sampled on ``grid``)."""
    f = m.sample(grid) if isinstance(m, NuclearModel) else m
    return f.x3_profile()


def interpolate_x3(profile: np.ndarray, n3: int, length_x3: float = 2 * np.pi) -> np.ndarray:
    """Trigonometric interpolation of a periodic x3 profile onto ``n3`` points."""
    profile = np.asarray(profile, dtype=float).ravel()
    m = profile.size
    if m == n3:
        return profile.copy()
    src = Grid3.line(m, length_x3)
    dst = Grid3.line(n3, length_x3)
    c = fft_forward(src, profile.reshape(src.shape)).ravel()
    out = np.zeros(n3, dtype=complex)
    k_src = src.mode_indices[2]
    for k, ck in zip(k_src, c):
        if m < n3 and abs(k) == m // 2:
            # split the source Nyquist mode evenly between +k and -k
            out[k % n3] += 0.5 * ck
            out[-k % n3] += 0.5 * ck
        elif abs(k) < n3 // 2:
            out[k % n3] += ck
        elif abs(k) == n3 // 2:
            # +/- Nyquist of the target coincide on its grid
            out[n3 // 2] += ck
    return fft_inverse(dst, out.reshape(dst.shape), check=False).ravel()


@dataclass(frozen=True)
class GridRule:
    """Grid for index N: (g1 * N, n2, n3) on ``cell``."""

    g1: int = 32
    n2: int = 4
    n3: int = 64
    cell: UnitCell = UnitCell()

    def grid_for(self, n: int) -> Grid3:
        return Grid3(self.g1 * n, self.n2, self.n3, self.cell)

    def line_grid(self) -> Grid3:
        return Grid3.line(self.n3, self.cell.length_x3)


@dataclass(frozen=True, eq=False)
class HomogenizationPlan:
    n_values: Sequence[int] = (1, 2, 3, 4)
    base_model: NuclearModel = field(default_factory=NuclearModel.separable_cos_gauss)
    grid_rule: GridRule = GridRule()
    solver_config: ScfConfig = ScfConfig()
    norms: Sequence[float] = (1, 2, np.inf)
    mode_filter: bool = True
    filter_iterates: bool = False

    def __post_init__(self):
        ns = list(self.n_values)
        if not ns:
            raise ValueError("n_values must not be empty")
        if any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
            raise ValueError(f"n_values must be strictly increasing positive integers, got {ns}")
        if self.grid_rule.cell.q_side != 1.0:
            raise ValueError("the homogenization study uses the unit square base")


@dataclass
class StudyPoint:
    n: int
    energy: float
    errors: dict
    grad_error: float
    iterations: int
    el_residual: float
    xbar_variance: float


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float


@dataclass
class HomogenizationReport:
    per_n: list
    i0: float
    reference: Optional[ScfResult] = None
    fitted_rates: dict = field(default_factory=dict)
    failure: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.failure is None

    def series(self, name: str) -> list[tuple[int, float]]:
        """(N, value) pairs for 'energy_gap', 'grad_L2' or an error key like 'L1'."""
        if name == "energy_gap":
            return [(pt.n, abs(pt.energy - self.i0)) for pt in self.per_n]
        if name == "grad_L2":
            return [(pt.n, pt.grad_error) for pt in self.per_n]
        return [(pt.n, pt.errors[name]) for pt in self.per_n]


def norm_label(p) -> str:
    return "Linf" if p == np.inf else f"L{p:g}"


def fit_rate(points) -> RateFit:
    """Least-squares line through (log N, log value)."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise DegenerateFit(f"need at least 3 points, got {len(pts)}")
    ns = np.array([n for n, _ in pts])
    vs = np.array([v for _, v in pts])
    if np.any(vs <= 0) or np.any(ns <= 0):
        raise DegenerateFit("rate fit needs positive N and values")
    if np.all(ns == ns[0]):
        raise DegenerateFit("all N are equal")
    x, y = np.log(ns), np.log(vs)
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - intercept - slope * x) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(slope, intercept, r2)


def nuclear_density_for(plan: HomogenizationPlan, n: int, grid: Grid3) -> RealField:
    if plan.mode_filter:
        filt = ModeFilter.for_n(n)
        m = build_m_n(plan.base_model, n, grid, analytic=plan.base_model.kind == "separable_cos_gauss",
                      max_mode=filt.k1_max)
        return RealField(grid, filt.apply(grid, m.values), nonnegative=True)
    return build_m_n(plan.base_model, n, grid)


def reference_profile(plan: HomogenizationPlan) -> np.ndarray:
    n0 = plan.n_values[0]
    return average_to_1d(nuclear_density_for(plan, n0, plan.grid_rule.grid_for(n0)))


def _solve_point(plan: HomogenizationPlan, n: int, ref: ScfResult, i0: float) -> StudyPoint:
    grid = plan.grid_rule.grid_for(n)
    m = nuclear_density_for(plan, n, grid)
    project = None
    if plan.filter_iterates:
        filt = ModeFilter.for_n(n)
        project = lambda v: filt.apply(grid, v)  # noqa: E731
    res = scf_solve(m, grid, plan.solver_config, project=project)
    L = grid.cell.length_x3
    u0 = interpolate_x3(ref.u.values, grid.n3, L)
    rho0 = interpolate_x3(ref.rho.values, grid.n3, L)
    e = RealField(grid, res.rho.values - rho0[None, None, :])
    du = RealField(grid, res.u.values - u0[None, None, :])
    slice_var = res.rho.values.var(axis=(0, 1)).mean()
    log.info("N = %d: I_N = %.12g (%d iterations)", n, res.energy.total, res.iterations)
    return StudyPoint(
        n=n,
        energy=res.energy.total,
        errors={norm_label(p): lp_norm(e, p) for p in plan.norms},
        grad_error=float(np.sqrt(spectral_gradient_sq_integral(du))),
        iterations=res.iterations,
        el_residual=el_residual(res),
        xbar_variance=float(slice_var),
    )


def run_study(plan: HomogenizationPlan, threads: int = 1) -> HomogenizationReport:
    """Solve the 1D limit once and the 3D problem for every N of the plan."""
    profile = reference_profile(plan)
    line = plan.grid_rule.line_grid()
    ref = scf_solve_1d(NuclearModel.x3_profile(profile), line, plan.solver_config)
    i0 = ref.energy.total
    log.info("1D reference: I_0 = %.12g (%d iterations)", i0, ref.iterations)

    def task(n):
        try:
            return _solve_point(plan, n, ref, i0)
        except TFWError as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(task, plan.n_values))
    else:
        outcomes = []
        for n in plan.n_values:
            outcomes.append(task(n))
            if isinstance(outcomes[-1], Exception):
                break
    per_n, failure = [], None
    for n, out in zip(plan.n_values, outcomes):
        if isinstance(out, Exception):
            failure = f"N = {n}: {type(out).__name__}: {out}"
            break
        per_n.append(out)
    report = HomogenizationReport(per_n=per_n, i0=i0, reference=ref, failure=failure)
    if len(per_n) >= 3:
        names = ["energy_gap"] + [norm_label(p) for p in plan.norms] + ["grad_L2"]
        for name in names:
            try:
                report.fitted_rates[name] = fit_rate(report.series(name))
            except DegenerateFit as exc:
                log.warning("no rate for %s: %s", name, exc)
    return report
