"""Monte-Carlo expectations of tree lifts driven by mollified white noise, and the
deterministic quadrature of the second-order expectation used to check them."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core import DecoratedTree, base_type
from .lift import LiftGrid, SampledFunction, chi, lift_eval, required_window
from .noise import MollifierSpec, mollify_array, rng_for, white_noise_values

THREADS_ENV = "RSDUAL_THREADS"


class BudgetError(ValueError):
    """The requested Monte-Carlo run is outside the supported budget."""


@dataclass
class MCResult:
    estimate: float
    stderr: float
    samples: int

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.estimate - value) <= k * self.stderr

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "samples": self.samples}


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def sample_mollified(grid: LiftGrid, m: MollifierSpec, lo: int, hi: int, seed: int, sample: int) -> SampledFunction:
    """Mollified white noise on the rows ``lo..hi`` of ``grid``.

    The white noise is drawn on a time range padded by the mollifier support
    so that the cropped rows are free of boundary effects.
    """
    pad = int(np.ceil(m.eps**2 / grid.delta)) + 1
    rows = hi - lo + 1 + 2 * pad
    raw = white_noise_values((rows, grid.nx), grid.delta, grid.dx, rng_for(seed, sample))
    smooth = mollify_array(raw, m, grid.delta, grid.dx)
    return SampledFunction(smooth[pad : pad + hi - lo + 1], lo)


def mc_expectation(
    tree: DecoratedTree,
    eps: float,
    samples: int,
    seed: int,
    grid: LiftGrid | None = None,
    max_noises: int = 4,
    max_samples: int = 10**6,
) -> MCResult:
    """Average of the lift at the base point over independent noise samples.

    Every noise type of the tree (hatted copies included) receives the same
    realisation of the noise of its base type.  Sample ``i`` uses the stream
    ``(seed, i)`` and the reduction runs in sample order, so the result does
    not depend on the thread count.
    """
    grid = grid or LiftGrid(nx=64, steps=256)
    noises = tree.noise_edges()
    if len(noises) > max_noises:
        raise BudgetError(f"tree has {len(noises)} noise edges; at most {max_noises} supported")
    if not 2 <= samples <= max_samples:
        raise BudgetError(f"samples must lie in [2, {max_samples}], got {samples}")
    m = MollifierSpec(eps)
    m.check(grid.delta, grid.dx)
    lo, hi = required_window(tree, grid.steps)
    types = {tree.edge_type[v] for v in noises}
    bases = sorted({base_type(t) for t in types})

    def one(i: int) -> float:
        fields = {xi: sample_mollified(grid, m, lo, hi, seed, i * len(bases) + j) for j, xi in enumerate(bases)}
        return lift_eval(tree, {t: fields[base_type(t)] for t in types}, grid)

    workers = thread_count()
    if workers == 1:
        values = np.array([one(i) for i in range(samples)])
    else:
        with ThreadPoolExecutor(workers) as pool:
            values = np.array(list(pool.map(one, range(samples))))
    return MCResult(float(values.mean()), float(values.std(ddof=1) / np.sqrt(samples)), samples)


def mollified_covariance(grid: LiftGrid, m: MollifierSpec, max_lag: int) -> np.ndarray:
    """``E[xi_eps(s, y) xi_eps(0, 0)]`` for time lags ``0..max_lag`` rows and all ``y``.

    Computed directly from the discrete mollifier weights: the product of the
    time autocorrelation and the circular space autocorrelation.
    """
    wt = m.time_weights(grid.delta)
    ws = m.space_weights(grid.dx)
    ct = np.array([grid.delta * np.sum(wt[: len(wt) - j] * wt[j:]) if j < len(wt) else 0.0 for j in range(max_lag + 1)])
    circ = np.zeros(grid.nx)
    M = (len(ws) - 1) // 2
    for j, w in zip(range(-M, M + 1), ws):
        circ[j % grid.nx] += w
    cs = np.array([grid.dx * np.sum(circ * np.roll(circ, -l)) for l in range(grid.nx)])
    return ct[:, None] * cs[None, :]


def heat_kernel_rows(grid: LiftGrid) -> np.ndarray:
    """``dx K(j delta, y)`` in real space for ``j = 1..M``: periodised heat kernel times ``chi``."""
    s = np.arange(1, grid.steps + 1)[:, None] * grid.delta
    mult = chi(s) * np.exp(-4.0 * np.pi**2 * grid.q[None, :] ** 2 * s)
    return np.fft.irfft(mult, n=grid.nx, axis=1)


def second_order_oracle(eps: float, grid: LiftGrid | None = None) -> float:
    """Quadrature of ``E[(K * xi_eps)(0) xi_eps(0)] = sum_j delta sum_y dx K(j delta, y) C(j delta, y)``."""
    grid = grid or LiftGrid(nx=64, steps=256)
    m = MollifierSpec(eps)
    cov = mollified_covariance(grid, m, grid.steps)
    K = heat_kernel_rows(grid)
    return float(grid.delta * np.sum(K * cov[1:]))
