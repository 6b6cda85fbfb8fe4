"""Periodic one-dimensional solvers for the regularised renormalised equation,
its tangent equation and its dual.

All solvers share the integrating-factor step

    u^{n+1} = E (u^n + dt N(u^n, xi^n)),    E = exp(dt Laplacian),

with ``E`` applied exactly in Fourier space.  The tangent step is the
linearisation of this map and the adjoint recursion is its exact transpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .functions import ScalarFunction
from .grid import Field, Grid
from .noise import MollifierSpec


class BlowUp(RuntimeError):
    """The solution left the configured bound."""

    def __init__(self, step: int, value: float):
        super().__init__(f"numerical blow-up at step {step} (max |u| = {value:.3g})")
        self.step = step
        self.value = value


ZERO = ScalarFunction.parse("0")


@dataclass
class SimConfig:
    """Grid, mollifier, nonlinearities and counterterm of the scalar equation

        d_t u = Laplacian u + f(u) + g(u) xi_eps + R(u).
    """

    grid: Grid
    mollifier: MollifierSpec
    f: ScalarFunction
    g: ScalarFunction
    counterterm: ScalarFunction = field(default_factory=lambda: ZERO)
    u0: Callable[[np.ndarray], np.ndarray] = lambda x: np.zeros_like(x)
    seed: int = 0
    blowup: float = 1e8

    def self_check(self) -> None:
        for fn in (self.f, self.g, self.counterterm):
            fn.self_check()

    def with_grid(self, grid: Grid) -> "SimConfig":
        return SimConfig(grid, self.mollifier, self.f, self.g, self.counterterm, self.u0, self.seed, self.blowup)


def _heat(grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    mult = grid.heat_multiplier(grid.dt)
    n = grid.Nx
    return lambda a: np.fft.irfft(np.fft.rfft(a) * mult, n=n)


def drift(config: SimConfig, u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return config.f(u) + config.g(u) * xi + config.counterterm(u)


def linear_coefficient(config: SimConfig, u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``c = f'(u) + g'(u) xi + R'(u)``, the multiplier of the linearised step."""
    return config.f.d(1)(u) + config.g.d(1)(u) * xi + config.counterterm.d(1)(u)


def solve_forward(config: SimConfig, noise: Field) -> Field:
    """March the equation driven by the (already mollified) ``noise``."""
    g = config.grid
    heat = _heat(g)
    out = np.empty(g.shape)
    out[0] = config.u0(g.x)
    for n in range(g.Nt):
        u = out[n]
        out[n + 1] = heat(u + g.dt * drift(config, u, noise.values[n]))
        peak = np.max(np.abs(out[n + 1]))
        if not np.isfinite(peak) or peak > config.blowup:
            raise BlowUp(n + 1, float(peak))
    return Field(out, g)


def tangent_step(heat, c: np.ndarray, v: np.ndarray, dt: float, source: np.ndarray | None = None) -> np.ndarray:
    rhs = v + dt * c * v
    if source is not None:
        rhs = rhs + dt * source
    return heat(rhs)


def transpose_step(heat, c: np.ndarray, q: np.ndarray, dt: float) -> np.ndarray:
    """Transpose of ``v -> E (1 + dt c) v`` (``E`` is symmetric)."""
    return (1.0 + dt * c) * heat(q)


def solve_tangent(config: SimConfig, u: Field, noise: Field, h: Field, v0: np.ndarray | None = None) -> Field:
    """Directional derivative ``v_h`` with source ``g(u) h`` and ``v(0) = v0`` (default 0)."""
    g = config.grid
    heat = _heat(g)
    out = np.empty(g.shape)
    out[0] = 0.0 if v0 is None else v0
    for n in range(g.Nt):
        c = linear_coefficient(config, u.values[n], noise.values[n])
        out[n + 1] = tangent_step(heat, c, out[n], g.dt, config.g(u.values[n]) * h.values[n])
        peak = np.max(np.abs(out[n + 1]))
        if not np.isfinite(peak) or peak > config.blowup:
            raise BlowUp(n + 1, float(peak))
    return Field(out, g)


def solve_dual_adjoint(config: SimConfig, u: Field, noise: Field, phi: Field) -> Field:
    """Exact transpose of the tangent recursion, run backwards from ``w(T) = 0``:

        w^n = E (w^{n+1} + dt (c^{n+1} w^{n+1} + phi^{n+1})).
    """
    g = config.grid
    heat = _heat(g)
    out = np.zeros(g.shape)
    for n in range(g.Nt - 1, -1, -1):
        c = linear_coefficient(config, u.values[n + 1], noise.values[n + 1])
        out[n] = heat(out[n + 1] + g.dt * (c * out[n + 1] + phi.values[n + 1]))
    return Field(out, g)


def solve_dual_pde(config: SimConfig, u: Field, noise: Field, phi: Field) -> Field:
    """Independent discretisation of ``-d_t w = Laplacian w + c w + phi``, ``w(T) = 0``.

    Strang splitting in reversed time: half a reaction step with the
    coefficient at the later time, the exact heat flow, half a reaction step
    with the coefficient at the earlier time; the source enters by the
    trapezoidal rule applied to Duhamel's formula.
    """
    g = config.grid
    heat = _heat(g)
    half = 0.5 * g.dt
    out = np.zeros(g.shape)
    c = [linear_coefficient(config, u.values[n], noise.values[n]) for n in range(g.Nt + 1)]
    for n in range(g.Nt - 1, -1, -1):
        late = np.exp(half * c[n + 1])
        early = np.exp(half * c[n])
        carried = early * heat(late * (out[n + 1] + half * phi.values[n + 1]))
        out[n] = carried + half * phi.values[n]
    return Field(out, g)


@dataclass
class DualityPairing:
    """Both sides of the duality identity and the boundary term."""

    tangent_side: float
    dual_side: float
    boundary: float

    @property
    def residual(self) -> float:
        return abs(self.tangent_side - (self.dual_side + self.boundary)) / max(abs(self.tangent_side), 1e-300)

    def to_json(self) -> dict:
        return {
            "tangent_side": self.tangent_side,
            "dual_side": self.dual_side,
            "boundary": self.boundary,
            "relative_residual": self.residual,
        }


def duality_pairing(config: SimConfig, u: Field, noise: Field, h: Field, v: Field, w: Field, phi: Field) -> DualityPairing:
    """``sum_{n>=1} dt dx <v^n, phi^n>`` against ``sum_{n<Nt} dt dx <g(u^n) h^n, w^n>`` plus
    the initial pairing ``dx <v^0, (1 + dt c^0) w^0>``."""
    g = config.grid
    weight = g.dt * g.dx
    lhs = weight * float(np.sum(v.values[1:] * phi.values[1:]))
    rhs = weight * float(np.sum(config.g(u.values[:-1]) * h.values[:-1] * w.values[:-1]))
    c0 = linear_coefficient(config, u.values[0], noise.values[0])
    boundary = g.dx * float(np.sum(v.values[0] * (1.0 + g.dt * c0) * w.values[0]))
    return DualityPairing(lhs, rhs, boundary)


def stochastic_convolution(grid: Grid, noise: Field) -> Field:
    """``sum_{m<n} dt P_{(n-m) dt} xi^m`` with the discrete heat semigroup built as a dense matrix.

    Used as an independent oracle for the additive linear case.
    """
    x = grid.x
    k = np.fft.fftfreq(grid.Nx, d=1.0 / grid.Nx)
    phase = np.cos(2 * np.pi * np.subtract.outer(x, x)[..., None] * k)
    mult = np.exp(-4 * np.pi**2 * k**2 * grid.dt)
    P = (phase * mult).sum(axis=-1) / grid.Nx
    out = np.zeros(grid.shape)
    for n in range(1, grid.Nt + 1):
        out[n] = P @ (out[n - 1] + grid.dt * noise.values[n - 1])
    return Field(out, grid)
