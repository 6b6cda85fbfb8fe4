"""Space-time grids and fields on the periodic unit interval."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class GridError(ValueError):
    """Inconsistent grid parameters."""


def _exact(value) -> Fraction:
    """Decimal-faithful rational of a float or string (``1e-4`` becomes ``1/10000``)."""
    return Fraction(str(value)) if not isinstance(value, Fraction) else value


@dataclass(frozen=True)
class Grid:
    """``Nx`` points on the torus ``[0, 1)`` and ``Nt = T/dt`` time steps."""

    Nx: int
    T: float
    dt: float

    def __post_init__(self) -> None:
        if self.Nx < 4 or self.Nx & (self.Nx - 1):
            raise GridError(f"Nx must be a power of two >= 4, got {self.Nx}")
        if self.dt <= 0 or self.T <= 0:
            raise GridError("T and dt must be positive")
        ratio = _exact(self.T) / _exact(self.dt)
        if ratio.denominator != 1:
            raise GridError(f"T = {self.T} is not an integer multiple of dt = {self.dt}")

    @property
    def Nt(self) -> int:
        return int(_exact(self.T) / _exact(self.dt))

    @property
    def dx(self) -> float:
        return 1.0 / self.Nx

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.Nt + 1) * self.dt

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nt + 1, self.Nx)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers of the real FFT."""
        return np.arange(self.Nx // 2 + 1)

    def heat_multiplier(self, tau: float) -> np.ndarray:
        """Fourier multiplier of ``exp(tau * Laplacian)``."""
        k = self.wavenumbers
        return np.exp(-4.0 * np.pi**2 * k**2 * tau)

    def refined(self, factor: int) -> "Grid":
        return Grid(self.Nx, self.T, float(_exact(self.dt) / factor))

    def zeros(self) -> "Field":
        return Field(np.zeros(self.shape), self)

    def evaluate(self, fn) -> "Field":
        """Field of ``fn(t, x)`` on the grid."""
        tt, xx = np.meshgrid(self.t, self.x, indexing="ij")
        values = np.broadcast_to(np.asarray(fn(tt, xx), dtype=float), self.shape).copy()
        return Field(values, self)


@dataclass
class Field:
    """Values at times ``t_0..t_Nt`` (rows) and points ``x_0..x_{Nx-1}`` (columns).

    For noise fields row ``n`` is the value on the cell ``[t_n, t_{n+1})``; the
    last row is kept for a uniform shape.
    """

    values: np.ndarray
    grid: Grid

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise GridError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    def __add__(self, other: "Field") -> "Field":
        return Field(self.values + other.values, self.grid)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.values - other.values, self.grid)

    def __mul__(self, c: float) -> "Field":
        return Field(self.values * c, self.grid)

    __rmul__ = __mul__

    def norm(self) -> float:
        """Discrete space-time L2 norm."""
        return float(np.sqrt(np.sum(self.values**2) * self.grid.dt * self.grid.dx))

    def coarsened(self, factor: int) -> "Field":
        """Average ``factor`` consecutive time cells (for noise-like fields)."""
        g = self.grid.refined(1)
        coarse = Grid(g.Nx, g.T, float(_exact(g.dt) * factor))
        body = self.values[:-1].reshape(coarse.Nt, factor, g.Nx).mean(axis=1)
        values = np.vstack([body, body[-1:]])
        return Field(values, coarse)

    def subsampled(self, factor: int) -> "Field":
        """Keep every ``factor``-th time row (for point-valued fields)."""
        g = self.grid
        coarse = Grid(g.Nx, g.T, float(_exact(g.dt) * factor))
        return Field(self.values[::factor].copy(), coarse)
