"""Building a :class:`SimConfig` and the data fields from a spec's ``simulation`` section."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import sympy

from ..equations import renormalized_equation
from ..specfile import Problem, SpecError
from ..symbolic import DRIFT
from .functions import FunctionError, ScalarFunction, SpaceTimeFunction, U, constant_value, sympy_from_symexpr
from .grid import Field, Grid
from .noise import MollifierSpec, mollify, sample_white_noise
from .solvers import SimConfig


@dataclass
class SimulationSetup:
    """A configured scalar equation together with its direction ``h`` and test function ``phi``."""

    config: SimConfig
    h: SpaceTimeFunction
    phi: SpaceTimeFunction
    values: dict[str, float]

    def noise(self, grid: Grid | None = None, stream: int = 0) -> Field:
        """Mollified white noise on ``grid`` (default: the configured one)."""
        grid = grid or self.config.grid
        return mollify(sample_white_noise(grid, self.config.seed, stream), self.config.mollifier)

    def h_field(self, grid: Grid | None = None) -> Field:
        return (grid or self.config.grid).evaluate(self.h)

    def phi_field(self, grid: Grid | None = None) -> Field:
        return (grid or self.config.grid).evaluate(self.phi)


def _generic_formulas(problem: Problem, sim: Mapping) -> dict[str, sympy.Expr]:
    names = set()
    for expr in problem.nonlinearity.entries.values():
        names.update(a.symbol for a in expr.atoms())
    out = {}
    for name in sorted(names):
        if name not in sim:
            raise SpecError(f"simulation: no formula for the generic symbol {name!r}")
        out[name] = ScalarFunction.parse(sim[name]).expr
    return out


def counterterm_expr(problem: Problem, formulas: Mapping[str, sympy.Expr], values: Mapping[str, float]) -> sympy.Expr:
    """``sum_tau c_tau / S(tau) Upsilon[tau]`` with formulas and numerical constants substituted."""
    t = problem.target
    eq = renormalized_equation(problem)
    if eq.missing_constants:
        raise SpecError(f"constants missing for trees {eq.missing_constants}; give them in the spec file")
    total = sympy.Integer(0)
    for term in eq.counterterms(t):
        c = constant_value(term.constant, values)
        total += sympy.Float(c) / term.symmetry * sympy_from_symexpr(term.expr, formulas, t)
    return total


def setup_from_problem(problem: Problem, values: Mapping[str, float] | None = None, seed: int | None = None) -> SimulationSetup:
    """Translate the ``simulation`` section; ``values`` overrides the numerical constants."""
    sim = problem.simulation
    if not sim:
        raise SpecError("the spec file has no simulation section")
    if problem.dim != 2:
        raise SpecError("simulation is only available for one space dimension")
    t = problem.target
    noises = [xi for xi in problem.table.noise_types if not problem.nonlinearity.F(t, xi).is_zero()]
    if len(noises) != 1:
        raise SpecError(f"simulation needs exactly one active noise, found {noises}")
    try:
        formulas = _generic_formulas(problem, sim)
        f = sympy_from_symexpr(problem.nonlinearity.F(t, DRIFT), formulas, t)
        g = sympy_from_symexpr(problem.nonlinearity.F(t, noises[0]), formulas, t)
        merged = {k: float(v) for k, v in sim.get("values", {}).items()}
        merged.update(values or {})
        R = counterterm_expr(problem, formulas, merged)
        u0 = SpaceTimeFunction.parse(str(sim.get("u0", "0")))
        h = SpaceTimeFunction.parse(str(sim.get("h", "1")))
        phi = SpaceTimeFunction.parse(str(sim.get("phi", "1")))
    except FunctionError as exc:
        raise SpecError(f"simulation: {exc}") from exc
    grid = Grid(int(sim.get("Nx", 128)), float(sim.get("T", 0.05)), float(sim.get("dt", 1e-4)))
    mollifier = MollifierSpec(float(sim.get("eps", 0.05)))
    config = SimConfig(
        grid=grid,
        mollifier=mollifier,
        f=ScalarFunction(sympy.sympify(f), str(f)),
        g=ScalarFunction(sympy.sympify(g), str(g)),
        counterterm=ScalarFunction(sympy.sympify(R), str(R)),
        u0=lambda x: u0(np.zeros_like(x), x),
        seed=int(sim.get("seed", 0) if seed is None else seed),
        blowup=float(sim.get("blowup", 1e8)),
    )
    for fn in (config.f, config.g, config.counterterm):
        if fn.expr.free_symbols - {U}:
            raise SpecError(f"simulation: {fn.text} depends on more than the solution value")
    return SimulationSetup(config, h, phi, merged)
