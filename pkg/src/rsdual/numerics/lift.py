"""Quadrature evaluation of the canonical lift of a tree built from smooth functions.

The kernel attached to every kernel type is the periodic heat kernel
``K(s, y) = chi(s) p_s(y)``, with ``chi`` a smooth cutoff equal to one on
``s <= 1/2`` and vanishing for ``s >= 1``.  A kernel edge with decoration
``k`` convolves its subtree with ``D^k K``; a dual kernel uses the reflected
kernel ``K(-.)`` and therefore looks forward in time.  Noise edges evaluate the
function assigned to their type and node decorations multiply by
``(t - t0)^{n_0} (x - x0)^{n_1}``.  No recentering is applied, so the value is
multilinear in the assigned functions and identities between lifts can be
compared like for like.

Time integrals use the rectangle rule on ``s = j delta``, ``j = 1..M`` with
``M = 1/delta``; space convolutions are exact discrete circular convolutions
carried out in Fourier space.  Only the time rows that the root value
actually depends on are computed.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable, Mapping, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.polynomial import Polynomial

from ..core import DecoratedTree, is_dual

SMOOTHSTEP7 = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])


class LiftError(ValueError):
    """A tree cannot be evaluated (unassigned type, wrong dimension)."""


def chi(s: np.ndarray, n: int = 0) -> np.ndarray:
    """``n``-th derivative of the cutoff ``1 - S7(2s - 1)`` (clamped to ``[0, 1]`` outside)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    if n == 0:
        out[s <= 0.5] = 1.0
    mid = (s > 0.5) & (s < 1.0)
    poly = SMOOTHSTEP7.deriv(n) if n else SMOOTHSTEP7
    out[mid] = (1.0 if n == 0 else 0.0) - poly(2 * s[mid] - 1) * 2.0**n
    return out


@dataclass(frozen=True)
class LiftGrid:
    """Quadrature grid: ``nx`` periodic points starting at ``x0`` and time step ``1/steps``."""

    nx: int = 64
    steps: int = 64
    t0: float = 0.0
    x0: float = 0.0

    @property
    def delta(self) -> float:
        return 1.0 / self.steps

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def x(self) -> np.ndarray:
        return self.x0 + np.arange(self.nx) * self.dx

    def times(self, lo: int, hi: int) -> np.ndarray:
        return self.t0 + np.arange(lo, hi + 1) * self.delta

    @property
    def q(self) -> np.ndarray:
        """Non-negative wavenumbers of the real FFT."""
        return np.arange(self.nx // 2 + 1)

    def kernel_multipliers(self, k: tuple[int, ...], dual: bool) -> np.ndarray:
        """Rows ``j = 1..M`` of ``delta * F[D^k K](j delta, q)``, reflected for dual kernels."""
        k0, k1 = k
        s = np.arange(1, self.steps + 1)[:, None] * self.delta
        lam = -4.0 * np.pi**2 * self.q[None, :] ** 2
        time_part = sum(comb(k0, i) * chi(s, i) * lam ** (k0 - i) for i in range(k0 + 1)) * np.exp(lam * s)
        space_part = (2j * np.pi * self.q) ** k1
        if k1 % 2 and self.nx % 2 == 0:
            space_part[-1] = 0.0
        mult = self.delta * time_part * space_part[None, :]
        if dual:
            mult = (-1) ** (k0 + k1) * np.conj(mult)
        return mult


@dataclass
class SampledFunction:
    """Values on consecutive lift-grid time rows starting at index ``first``."""

    values: np.ndarray
    first: int

    def rows(self, lo: int, hi: int) -> np.ndarray:
        a, b = lo - self.first, hi - self.first + 1
        if a < 0 or b > len(self.values):
            raise LiftError(f"sampled function covers rows {self.first}..{self.first + len(self.values) - 1}, need {lo}..{hi}")
        return self.values[a:b]


Assignment = Union[Callable[[np.ndarray, np.ndarray], np.ndarray], SampledFunction]


def required_window(tree: DecoratedTree, steps: int) -> tuple[int, int]:
    """Range of time rows on which the noise functions are read for the root value."""
    lo_all, hi_all = 0, 0

    def walk(v: int, lo: int, hi: int) -> None:
        nonlocal lo_all, hi_all
        for c in tree.children(v):
            if tree.noise_leaf[c]:
                lo_all, hi_all = min(lo_all, lo), max(hi_all, hi)
            elif is_dual(tree.edge_type[c]):
                walk(c, lo + 1, hi + steps)
            else:
                walk(c, lo - steps, hi - 1)

    walk(tree.root, 0, 0)
    return lo_all, hi_all


class _Evaluator:
    def __init__(self, tree: DecoratedTree, functions: Mapping[str, Assignment], grid: LiftGrid):
        if tree.dim != 2:
            raise LiftError("lift evaluation supports one space dimension only")
        self.tree = tree
        self.functions = functions
        self.grid = grid
        self._mults: dict[tuple, np.ndarray] = {}

    def source(self, type_id: str, lo: int, hi: int) -> np.ndarray:
        if type_id not in self.functions:
            raise LiftError(f"no function assigned to the type {type_id!r}")
        fn = self.functions[type_id]
        if isinstance(fn, SampledFunction):
            return fn.rows(lo, hi)
        t = self.grid.times(lo, hi)[:, None]
        x = self.grid.x[None, :]
        return np.broadcast_to(np.asarray(fn(t, x), dtype=float), (hi - lo + 1, self.grid.nx))

    def multipliers(self, k: tuple[int, ...], dual: bool) -> np.ndarray:
        key = (tuple(k), dual)
        if key not in self._mults:
            self._mults[key] = self.grid.kernel_multipliers(tuple(k), dual)
        return self._mults[key]

    def monomial(self, n: tuple[int, ...], lo: int, hi: int) -> np.ndarray | float:
        if not any(n):
            return 1.0
        g = self.grid
        dt = (np.arange(lo, hi + 1) * g.delta)[:, None] ** n[0]
        offset = np.arange(g.nx) * g.dx
        wrapped = (offset + 0.5) % 1.0 - 0.5
        return dt * wrapped[None, :] ** n[1]

    def node(self, v: int, lo: int, hi: int) -> np.ndarray:
        value = np.ones((hi - lo + 1, self.grid.nx)) * self.monomial(self.tree.node_dec[v], lo, hi)
        for c in self.tree.children(v):
            value = value * self.edge(c, lo, hi)
        return value

    def edge(self, c: int, lo: int, hi: int) -> np.ndarray:
        tree = self.tree
        if tree.noise_leaf[c]:
            return self.source(tree.edge_type[c], lo, hi)
        M = self.grid.steps
        dual = is_dual(tree.edge_type[c])
        mult = self.multipliers(tree.edge_dec[c], dual)
        if dual:
            # output row i reads child row i + j, j = 1..M
            child = np.fft.rfft(self.node(c, lo + 1, hi + M), axis=1)
            weights = mult
        else:
            # output row i reads child row i - j, j = 1..M
            child = np.fft.rfft(self.node(c, lo - M, hi - 1), axis=1)
            weights = mult[::-1]
        windows = sliding_window_view(child, M, axis=0)
        acc = np.einsum("iqm,mq->iq", windows, weights)
        return np.fft.irfft(acc, n=self.grid.nx, axis=1)


def lift_eval(tree: DecoratedTree, functions: Mapping[str, Assignment], grid: LiftGrid | None = None) -> float:
    """Value of the lift of ``tree`` at the base point ``(grid.t0, grid.x0)``."""
    grid = grid or LiftGrid()
    return float(_Evaluator(tree, functions, grid).node(tree.root, 0, 0)[0, 0])


def lift_field(tree: DecoratedTree, functions: Mapping[str, Assignment], grid: LiftGrid, lo: int, hi: int) -> np.ndarray:
    """Rows ``lo..hi`` of the lift as a function of the evaluation point (decorations still centred at the base point)."""
    return _Evaluator(tree, functions, grid).node(tree.root, lo, hi)
