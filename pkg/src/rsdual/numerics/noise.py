"""White noise on a grid and its mollification by a compactly supported bump."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .grid import Field, Grid


class ResolutionError(ValueError):
    """The mollification scale is not resolved by the grid."""


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for ``(seed, stream)``; streams never overlap."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(stream)))


def white_noise_values(shape: tuple[int, int], dt: float, dx: float, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(shape) / np.sqrt(dt * dx)


def sample_white_noise(grid: Grid, seed: int, stream: int = 0) -> Field:
    """I.i.d. cell averages of space-time white noise, variance ``1/(dt dx)``."""
    return Field(white_noise_values(grid.shape, grid.dt, grid.dx, rng_for(seed, stream)), grid)


def bump(s: np.ndarray) -> np.ndarray:
    """``exp(-1/(1-s^2))`` on ``|s| < 1`` and zero elsewhere."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class MollifierSpec:
    """Product bump ``rho(t, x) = b(t) b(x)`` rescaled parabolically to ``(eps^2, eps)``."""

    eps: float

    def check(self, dt: float, dx: float) -> None:
        if self.eps < 4 * dx - 1e-15:
            raise ResolutionError(f"eps = {self.eps} < 4 dx = {4 * dx}")
        if self.eps**2 < 4 * dt - 1e-15:
            raise ResolutionError(f"eps^2 = {self.eps ** 2} < 4 dt = {4 * dt}")

    def time_weights(self, dt: float) -> np.ndarray:
        """Discrete weights ``w_m`` for offsets ``m = -M..M`` with ``sum w_m dt = 1``."""
        M = int(np.ceil(self.eps**2 / dt))
        w = bump(np.arange(-M, M + 1) * dt / self.eps**2)
        return w / (w.sum() * dt)

    def space_weights(self, dx: float) -> np.ndarray:
        M = int(np.ceil(self.eps / dx))
        w = bump(np.arange(-M, M + 1) * dx / self.eps)
        return w / (w.sum() * dx)

    def space_symbol(self, nx: int) -> np.ndarray:
        """Discrete Fourier multiplier of the spatial factor on an ``nx``-point torus."""
        dx = 1.0 / nx
        w = self.space_weights(dx)
        M = (len(w) - 1) // 2
        kernel = np.zeros(nx)
        for j, wj in zip(range(-M, M + 1), w):
            kernel[j % nx] += wj * dx
        return np.fft.rfft(kernel)


def mollify_array(values: np.ndarray, m: MollifierSpec, dt: float, dx: float) -> np.ndarray:
    """Circular convolution in space, zero-padded convolution in time (rows are times)."""
    m.check(dt, dx)
    nx = values.shape[1]
    spatial = np.fft.irfft(np.fft.rfft(values, axis=1) * m.space_symbol(nx), n=nx, axis=1)
    return convolve1d(spatial, m.time_weights(dt) * dt, axis=0, mode="constant", cval=0.0)


def mollify(noise: Field, m: MollifierSpec) -> Field:
    g = noise.grid
    return Field(mollify_array(noise.values, m, g.dt, g.dx), g)
