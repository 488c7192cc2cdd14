"""Grid fields, quadrature, norms and the energy integrands."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import Grid3, apply_symbol, fft_forward, fft_inverse
from .errors import GridMismatch, InvalidExponent, NegativeDensity

NONNEGATIVE_TOL = 1e-12
CLAMP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples of a scalar function on every point of ``grid``."""

    grid: Grid3
    values: np.ndarray
    nonnegative: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise GridMismatch(
                f"{values.size} values do not fit a grid of shape {self.grid.shape}"
            )
        values = values.reshape(self.grid.shape)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.nonnegative:
            scale = float(np.max(np.abs(values), initial=0.0))
            if values.size and values.min() < -NONNEGATIVE_TOL * scale:
                raise NegativeDensity(f"field flagged nonnegative has min {values.min():.3e}")

    @classmethod
    def from_function(cls, grid: Grid3, func, **kw) -> "RealField":
        x1, x2, x3 = grid.mesh()
        return cls(grid, np.broadcast_to(func(x1, x2, x3), grid.shape), **kw)

    @classmethod
    def constant(cls, grid: Grid3, value: float) -> "RealField":
        return cls(grid, np.full(grid.shape, float(value)))

    def _other(self, other):
        if isinstance(other, RealField):
            if other.grid != self.grid:
                raise GridMismatch(f"grids {self.grid.shape} and {other.grid.shape} differ")
            return other.values
        return other

    def __add__(self, other):
        return RealField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return RealField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return RealField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return RealField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return RealField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return RealField(self.grid, -self.values)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def x3_profile(self) -> np.ndarray:
        """Average over x1, x2 for every x3 plane."""
        return self.values.mean(axis=(0, 1))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients in FFT storage order (see :mod:`tfw2d.cell`)."""

    grid: Grid3
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != self.grid.shape:
            raise GridMismatch(f"coefficient array {coeffs.shape} vs grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    def __getitem__(self, k) -> complex:
        return complex(self.coeffs[self.grid.storage_index(k)])

    @classmethod
    def from_modes(cls, grid: Grid3, modes: dict) -> "SpectralField":
        coeffs = np.zeros(grid.shape, dtype=complex)
        for k, c in modes.items():
            coeffs[grid.storage_index(k)] = c
        return cls(grid, coeffs)


def forward_transform(f: RealField) -> SpectralField:
    return SpectralField(f.grid, fft_forward(f.grid, f.values))


def inverse_transform(c: SpectralField) -> RealField:
    """Real field with the given coefficients; raises NonHermitianInput otherwise."""
    return RealField(c.grid, fft_inverse(c.grid, c.coeffs))


def integrate(f: RealField) -> float:
    return f.grid.volume * f.mean()


def lp_norm(f: RealField, p: float = 2) -> float:
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    if not p >= 1:
        raise InvalidExponent(f"L^p norm needs p >= 1, got {p}")
    a = np.abs(f.values)
    if p == 1:
        return f.grid.volume * float(a.mean())
    if p == 2:
        return float(np.sqrt(f.grid.volume * np.mean(a * a)))
    return float((f.grid.volume * np.mean(a**p)) ** (1.0 / p))


def weighted_l1_x3(f: RealField) -> float:
    """Integral of |x3| |f|, x3 measured from the cell centre."""
    x3 = np.abs(f.grid.mesh()[2])
    return f.grid.volume * float(np.mean(x3 * np.abs(f.values)))


def spectral_gradient_sq_integral(u: RealField) -> float:
    """Integral of |grad u|^2 evaluated on the Fourier side."""
    c = fft_forward(u.grid, u.values)
    return u.grid.volume * float(np.sum(u.grid.laplacian_symbols * (c.real**2 + c.imag**2)))


def spectral_gradient(u: RealField) -> tuple[RealField, RealField, RealField]:
    """Components of grad u; the odd Nyquist modes are dropped."""
    grid = u.grid
    c = np.fft.fftn(u.values)
    parts = []
    for axis, (kvec, n) in enumerate(zip(grid.wavevectors, grid.shape)):
        mult = 2j * np.pi * kvec
        if n > 1:
            nyq = [slice(None)] * 3
            nyq[axis] = n // 2
            mult = np.broadcast_to(mult, grid.shape).copy()
            mult[tuple(nyq)] = 0.0
        parts.append(RealField(grid, np.fft.ifftn(c * mult).real))
    return tuple(parts)


def negative_laplacian(u: RealField) -> RealField:
    return RealField(u.grid, apply_symbol(u.grid, u.values, u.grid.laplacian_symbols))


def clamp_density(rho: RealField) -> np.ndarray:
    """Values of ``rho`` with round-off negatives set to zero."""
    v = rho.values
    scale = float(np.max(np.abs(v), initial=0.0))
    if v.size and v.min() < -CLAMP_TOL * scale:
        raise NegativeDensity(f"density has min {v.min():.3e} (max {scale:.3e})")
    return np.maximum(v, 0.0)


def power_integral(rho: RealField, p: float = 5.0 / 3.0) -> float:
    """Integral of rho^p for a nonnegative density."""
    if not p > 1:
        raise InvalidExponent(f"power integral needs p > 1, got {p}")
    return rho.grid.volume * float(np.mean(clamp_density(rho) ** p))
