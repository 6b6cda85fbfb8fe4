"""Numerical identity checks at fixed mollification: Fréchet consistency of the
tangent solver, discrete duality, agreement of the two dual solvers under
refinement, and the shift and telescope identities for tree lifts."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..core import DecoratedTree, hat_type
from ..extensions import HAT, shift_expand, telescope_A
from .config import SimulationSetup
from .grid import Field, Grid
from .lift import LiftGrid, lift_eval
from .noise import MollifierSpec, mollify, rng_for, sample_white_noise
from .functions import ScalarFunction
from .solvers import (
    SimConfig,
    duality_pairing,
    solve_dual_adjoint,
    solve_dual_pde,
    solve_forward,
    solve_tangent,
)

FRECHET_ORDER_TOLERANCE = 0.2
# Difference quotients of an affine solution map agree with v_h up to rounding;
# below this relative error no convergence order can be read off.
FRECHET_ROUNDOFF_FLOOR = 1e-9
ADJOINT_TOLERANCE = 1e-8
PDE_TOLERANCE = 0.05


# ---------------------------------------------------------------------------
# Fréchet derivative
# ---------------------------------------------------------------------------


@dataclass
class FrechetResult:
    rs: list[float]
    errors: list[float]

    @property
    def orders(self) -> list[float]:
        return [
            float(np.log(e0 / e1) / np.log(r0 / r1))
            for (r0, e0), (r1, e1) in zip(zip(self.rs, self.errors), zip(self.rs[1:], self.errors[1:]))
        ]

    @property
    def exact(self) -> bool:
        return all(e < FRECHET_ROUNDOFF_FLOOR for e in self.errors)

    @property
    def ok(self) -> bool:
        return self.exact or all(abs(p - 1.0) <= FRECHET_ORDER_TOLERANCE for p in self.orders)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "exact": self.exact,
            "table": [{"r": r, "relative_error": e} for r, e in zip(self.rs, self.errors)],
            "observed_orders": self.orders,
        }


def frechet_check(setup: SimulationSetup, rs: Sequence[float] = (1e-1, 1e-2, 1e-3)) -> FrechetResult:
    """Relative error of the difference quotient of the solution map against ``v_h``."""
    c = setup.config
    xi = setup.noise()
    h = setup.h_field()
    u = solve_forward(c, xi)
    v = solve_tangent(c, u, xi, h)
    errors = []
    for r in rs:
        ur = solve_forward(c, xi + r * h)
        errors.append(((ur - u) * (1.0 / r) - v).norm() / v.norm())
    return FrechetResult(list(rs), errors)


# ---------------------------------------------------------------------------
# Duality
# ---------------------------------------------------------------------------


@dataclass
class DualityResult:
    adjoint_residual: float
    pde_residual: float
    pde_gap: float
    pairing: dict

    @property
    def ok(self) -> bool:
        return (
            self.adjoint_residual <= ADJOINT_TOLERANCE
            and self.pde_residual <= PDE_TOLERANCE
            and self.pde_gap <= PDE_TOLERANCE
        )

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "adjoint_relative_residual": self.adjoint_residual,
            "pde_relative_residual": self.pde_residual,
            "pde_vs_adjoint_relative_l2": self.pde_gap,
            "pairing": self.pairing,
        }


def duality_fields(config: SimConfig, xi: Field, h: Field, phi: Field):
    u = solve_forward(config, xi)
    v = solve_tangent(config, u, xi, h)
    w = solve_dual_adjoint(config, u, xi, phi)
    wp = solve_dual_pde(config, u, xi, phi)
    return u, v, w, wp


def duality_check(config: SimConfig, xi: Field, h: Field, phi: Field) -> DualityResult:
    u, v, w, wp = duality_fields(config, xi, h, phi)
    adj = duality_pairing(config, u, xi, h, v, w, phi)
    pde = duality_pairing(config, u, xi, h, v, wp, phi)
    return DualityResult(adj.residual, pde.residual, (wp - w).norm() / w.norm(), adj.to_json())


def setup_duality_check(setup: SimulationSetup) -> DualityResult:
    return duality_check(setup.config, setup.noise(), setup.h_field(), setup.phi_field())


@dataclass
class RefinementResult:
    dts: list[float]
    gaps: list[float]

    @property
    def ratios(self) -> list[float]:
        return [a / b for a, b in zip(self.gaps, self.gaps[1:])]

    @property
    def halves(self) -> bool:
        """Each refinement reduces the gap by a factor in ``[1.6, 2.4]``."""
        return all(1.6 <= r <= 2.4 for r in self.ratios)

    def to_json(self) -> dict:
        return {"dt": self.dts, "gap": self.gaps, "ratios": self.ratios, "halves": self.halves}


def pde_refinement(setup: SimulationSetup, levels: int = 2) -> RefinementResult:
    """Gap between the two dual solvers for ``dt, dt/2, ..., dt/2^levels``.

    The white noise is drawn and mollified once on the finest grid and
    averaged over time cells for the coarser ones, so every level sees the
    same realisation.
    """
    base = setup.config.grid
    factor = 2**levels
    finest = base.refined(factor)
    xi_fine = setup.noise(finest)
    dts, gaps = [], []
    for level in range(levels + 1):
        k = 2 ** (levels - level)
        xi = xi_fine.coarsened(k) if k > 1 else xi_fine
        grid = xi.grid
        config = setup.config.with_grid(grid)
        u = solve_forward(config, xi)
        phi = setup.phi_field(grid)
        w = solve_dual_adjoint(config, u, xi, phi)
        wp = solve_dual_pde(config, u, xi, phi)
        dts.append(grid.dt)
        gaps.append((wp - w).norm() / w.norm())
    return RefinementResult(dts, gaps)


_NONLINEARITIES = [
    ("-u/2", "2+sin(u)"),
    ("-u", "1+u**2/4"),
    ("sin(u)", "1.5+cos(u)"),
    ("-u**3/3", "2+tanh(u)"),
    ("0", "1"),
]


def random_duality_configs(n: int, seed: int, grid: Grid, eps: float = 0.05) -> list[tuple[SimConfig, Field, Field, Field]]:
    """``n`` randomised scalar configurations: nonlinearity, counterterm coefficients, data and noise.

    The counterterm is a random combination of the three SHE structures
    ``g'g``, ``g'^3 g`` and ``g''g'g^2`` for the drawn ``g``.
    """
    import sympy

    from .functions import U

    rng = rng_for(seed, 2**32)
    out = []
    for i in range(n):
        f_text, g_text = _NONLINEARITIES[i % len(_NONLINEARITIES)]
        g = ScalarFunction.parse(g_text)
        c1, c2, c3 = rng.uniform(-1, 1, size=3)
        d1, d2 = (sympy.diff(g.expr, U, k) for k in (1, 2))
        R = c1 * d1 * g.expr + c2 * d1**3 * g.expr + c3 * d2 * d1 * g.expr**2
        config = SimConfig(
            grid=grid,
            mollifier=MollifierSpec(eps),
            f=ScalarFunction.parse(f_text),
            g=g,
            counterterm=ScalarFunction(sympy.sympify(R), str(R)),
            u0=(lambda a, b: (lambda x: a * np.sin(2 * np.pi * x) + b * np.cos(4 * np.pi * x)))(*rng.uniform(-1, 1, 2)),
            seed=int(rng.integers(0, 2**31)),
        )
        xi = mollify(sample_white_noise(grid, config.seed, i), config.mollifier)
        coeffs = rng.normal(size=(2, 3))
        modes = lambda t, x, a: a[0] * np.sin(2 * np.pi * x) + a[1] * np.cos(2 * np.pi * x) * (1 + t) + a[2] * np.sin(6 * np.pi * x)
        h = grid.evaluate(lambda t, x: modes(t, x, coeffs[0]))
        phi = grid.evaluate(lambda t, x: modes(t, x, coeffs[1]))
        out.append((config, xi, h, phi))
    return out


# ---------------------------------------------------------------------------
# Lift identities
# ---------------------------------------------------------------------------

SMOOTH_H = lambda t, x: np.sin(2 * np.pi * x) * np.exp(-t) + 0.25  # noqa: E731
SMOOTH_K = lambda t, x: np.cos(2 * np.pi * x) + 0.5 * np.sin(4 * np.pi * (x + t))  # noqa: E731
SMOOTH_M = lambda t, x: 1.0 + 0.3 * np.cos(2 * np.pi * (x - t))  # noqa: E731


@dataclass
class LiftCheck:
    name: str
    cases: int = 0
    worst: float = 0.0
    failures: list[dict] = field(default_factory=list)
    tolerance: float = 1e-6

    @property
    def ok(self) -> bool:
        return not self.failures

    def record(self, tree: str, lhs: float, rhs: float, extra: dict | None = None) -> None:
        self.cases += 1
        err = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
        self.worst = max(self.worst, err)
        if err > self.tolerance:
            self.failures.append({"tree": tree, "lhs": lhs, "rhs": rhs, "relative_error": err, **(extra or {})})

    def to_json(self) -> dict:
        return {"ok": self.ok, "cases": self.cases, "worst_relative_error": self.worst, "tolerance": self.tolerance, "failures": self.failures}


def _noise_types(tree: DecoratedTree) -> set[str]:
    return {tree.edge_type[v] for v in tree.noise_edges()}


def check_shift_identity(trees: Iterable[DecoratedTree], grid: LiftGrid, tolerance: float = 1e-6, h=SMOOTH_H, k=SMOOTH_K) -> LiftCheck:
    """Lift with every noise replaced by ``h + k`` against the shift expansion at ``r = 1``."""
    check = LiftCheck("shift", tolerance=tolerance)
    for tau in trees:
        base = _noise_types(tau)
        lhs_fns = {xi: (lambda t, x: h(t, x) + k(t, x)) for xi in base}
        rhs_fns = {xi: h for xi in base} | {hat_type(xi, HAT): k for xi in base}
        lhs = lift_eval(tau, lhs_fns, grid)
        rhs = sum(float(c) * lift_eval(tr, rhs_fns, grid) for tr, c in shift_expand(tau).at(1))
        check.record(tau.code, lhs, rhs)
    return check


def check_telescope_identity(
    trees: Iterable[DecoratedTree],
    grid: LiftGrid,
    tolerance: float = 1e-6,
    max_hatted: int = 3,
    h=SMOOTH_H,
    k=SMOOTH_K,
    m=SMOOTH_M,
) -> LiftCheck:
    """For each choice of at most ``max_hatted`` hatted leaves and every ordering of them,
    ``lift(all h) - lift(all k)`` against the sum of the telescope terms.

    Leaves that are not hatted carry the third function ``m``.
    """
    check = LiftCheck("telescope", tolerance=tolerance)
    for tau in trees:
        leaves = tau.noise_edges()
        for size in range(1, min(max_hatted, len(leaves)) + 1):
            for chosen in itertools.combinations(leaves, size):
                hatted = tau.retype({v: hat_type(tau.edge_type[v], HAT) for v in chosen})
                base = _noise_types(tau)
                fns = {xi: m for xi in base}
                for xi in base:
                    fns[hat_type(xi, "h")] = h
                    fns[hat_type(xi, "k")] = k
                    fns[hat_type(xi, "h-k")] = lambda t, x: h(t, x) - k(t, x)
                all_h = hatted.retype({v: hat_type(tau.edge_type[v], "h") for v in chosen})
                all_k = hatted.retype({v: hat_type(tau.edge_type[v], "k") for v in chosen})
                lhs = lift_eval(all_h, fns, grid) - lift_eval(all_k, fns, grid)
                for order in itertools.permutations(chosen):
                    rhs = sum(float(c) * lift_eval(tr, fns, grid) for tr, c in telescope_A(hatted, order))
                    check.record(tau.code, lhs, rhs, {"order": list(order)})
    return check
