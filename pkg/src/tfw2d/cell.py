"""Unit cell, uniform periodic grids and the discrete Fourier transform pair.

Coefficients are cell averages::

    c_k = 1/(n1 n2 n3) * sum_x f(x) exp(-2i pi (k1 x1/q + k2 x2/q + k3 x3/L))

so ``c_0`` is the grid mean of ``f``. Grid points start at ``-side/2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NonHermitianInput

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class UnitCell:
    """Periodized cell Q x [-L/2, L/2] with a square base of side ``q_side``."""

    q_side: float = 1.0
    length_x3: float = 2 * np.pi

    def __post_init__(self):
        if not self.q_side > 0:
            raise ValueError(f"q_side must be positive, got {self.q_side}")
        if not self.length_x3 > 0:
            raise ValueError(f"length_x3 must be positive, got {self.length_x3}")

    @property
    def area(self) -> float:
        return self.q_side * self.q_side

    @property
    def volume(self) -> float:
        return self.q_side * self.q_side * self.length_x3

    @property
    def sides(self) -> tuple[float, float, float]:
        return (self.q_side, self.q_side, self.length_x3)


@dataclass(frozen=True)
class Grid3:
    """Uniform periodic grid on a :class:`UnitCell`.

    Axis sizes are even, or 1 for a collapsed axis (the 1D limit model
    lives on ``Grid3(1, 1, n3)``).
    """

    n1: int
    n2: int
    n3: int
    cell: UnitCell = UnitCell()

    def __post_init__(self):
        for name, n in zip(("n1", "n2", "n3"), self.shape):
            if int(n) != n or n < 1 or (n != 1 and n % 2):
                raise ValueError(f"{name} must be 1 or a positive even integer, got {n}")

    @classmethod
    def line(cls, n3: int, length_x3: float = 2 * np.pi) -> "Grid3":
        """A 1D grid along x3 (unit square base, collapsed x1 and x2)."""
        return cls(1, 1, n3, UnitCell(1.0, length_x3))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def size(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def is_1d(self) -> bool:
        return self.n1 == 1 and self.n2 == 1

    @property
    def volume(self) -> float:
        return self.cell.volume

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(s / n for s, n in zip(self.cell.sides, self.shape))

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            -s / 2 + np.arange(n) * (s / n) for s, n in zip(self.cell.sides, self.shape)
        )

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays of shapes (n1,1,1), (1,n2,1), (1,1,n3)."""
        x1, x2, x3 = self.axes
        return x1[:, None, None], x2[None, :, None], x3[None, None, :]

    @cached_property
    def mode_indices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Signed integer mode indices per axis, in FFT storage order."""
        return tuple(np.rint(np.fft.fftfreq(n, 1.0 / n)).astype(int) for n in self.shape)

    @cached_property
    def wavevectors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable frequency components k_i / side_i."""
        k1, k2, k3 = (k / s for k, s in zip(self.mode_indices, self.cell.sides))
        return k1[:, None, None], k2[None, :, None], k3[None, None, :]

    @cached_property
    def laplacian_symbols(self) -> np.ndarray:
        """Eigenvalues of -Laplacian on every mode, shape ``self.shape``."""
        k1, k2, k3 = self.wavevectors
        return 4 * np.pi**2 * (k1**2 + k2**2 + k3**2)

    @cached_property
    def _phase(self) -> np.ndarray:
        # grid origin at -side/2 multiplies mode k by (-1)^k
        k1, k2, k3 = self.mode_indices
        parity = (k1[:, None, None] + k2[None, :, None] + k3[None, None, :]) % 2
        return np.where(parity == 0, 1.0, -1.0)

    def check_mode(self, k) -> None:
        for ki, n in zip(k, self.shape):
            if abs(ki) > n // 2:
                raise ValueError(f"mode {tuple(k)} not representable on grid {self.shape}")

    def storage_index(self, k) -> tuple[int, int, int]:
        self.check_mode(k)
        return tuple(int(ki) % n for ki, n in zip(k, self.shape))


def laplacian_symbol(grid: Grid3, k) -> float:
    """Eigenvalue 4 pi^2 |kappa(k)|^2 of -Laplacian on basis mode ``k``."""
    grid.check_mode(k)
    q, _, length = grid.cell.sides
    k1, k2, k3 = k
    return 4 * np.pi**2 * ((k1 / q) ** 2 + (k2 / q) ** 2 + (k3 / length) ** 2)


def fft_forward(grid: Grid3, values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values) * (grid._phase / grid.size)


def fft_inverse(grid: Grid3, coeffs: np.ndarray, check: bool = True) -> np.ndarray:
    if check:
        mirrored = np.conj(np.roll(np.flip(coeffs), 1, axis=(0, 1, 2)))
        defect = np.max(np.abs(coeffs - mirrored), initial=0.0)
        scale = max(1.0, float(np.max(np.abs(coeffs), initial=0.0)))
        if defect > HERMITIAN_TOL * scale:
            raise NonHermitianInput(
                f"coefficients violate c(-k) = conj(c(k)) by {defect:.3e}"
            )
    return np.fft.ifftn(coeffs * (grid._phase * grid.size)).real


def apply_symbol(grid: Grid3, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Multiply by a real, even Fourier symbol (fast path via real FFTs)."""
    n3 = grid.n3
    half = symbol[:, :, : n3 // 2 + 1]
    return np.fft.irfftn(np.fft.rfftn(values, axes=(0, 1, 2)) * half, s=grid.shape, axes=(0, 1, 2))
