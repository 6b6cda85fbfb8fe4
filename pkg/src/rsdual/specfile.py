"""Loading and validating problem specification files.

A spec file is a JSON document with the sections ``types``, ``rule``,
``nonlinearity`` and optionally ``constants``, ``simulation`` and
``verify``.  It is validated against the shipped JSON schema before any
computation; rationals may be written as ``"p/q"`` strings or as short
expressions in ``kappa`` and ``theta``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import sympy

from .core import Scaling, TypeTable
from .rules import Rule, check_normal, rule_from_json
from .symbolic import DRIFT, NonlinearitySpec, parse_expr

SCHEMA_VERSION = 1
DEFAULT_KAPPA = Fraction(1, 100)
DEFAULT_THETA = Fraction(1, 100)


class SpecError(ValueError):
    """The spec file is malformed or inconsistent."""


def load_schema(name: str = "spec.schema.json") -> dict:
    return json.loads(resources.files("rsdual.schemas").joinpath(name).read_text())


def parse_rational(value, env: Mapping[str, Fraction] | None = None) -> Fraction:
    """Exact rational from an integer, ``"p/q"`` or a linear expression in named parameters."""
    if isinstance(value, bool):
        raise SpecError(f"expected a rational, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if not isinstance(value, str):
        raise SpecError(f"expected a rational string, got {value!r}")
    try:
        return Fraction(value)
    except ValueError:
        pass
    local = {k: sympy.Rational(v.numerator, v.denominator) for k, v in (env or {}).items()}
    try:
        expr = sympy.sympify(value, locals=local, rational=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise SpecError(f"cannot parse rational {value!r}") from exc
    if not expr.is_Rational:
        raise SpecError(f"{value!r} does not evaluate to a rational (free symbols {sorted(map(str, expr.free_symbols))})")
    return Fraction(int(expr.p), int(expr.q))


@dataclass
class Problem:
    """Everything a spec file describes, in parsed form."""

    name: str
    table: TypeTable
    scaling: Scaling
    kappa: Fraction
    theta: Fraction
    rule: Rule
    nonlinearity: NonlinearitySpec
    mode: str
    constants: dict[str, Fraction | float | str]
    simulation: dict[str, Any] = field(default_factory=dict)
    verify: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.scaling.dim

    @property
    def target(self) -> str:
        """The unique kernel type of a single-equation problem."""
        kernels = self.table.base_kernel_types
        if len(kernels) != 1:
            raise SpecError(f"expected a single equation, found components {list(kernels)}")
        return kernels[0]

    @property
    def cutoff(self) -> Fraction:
        return parse_rational(self.verify.get("cutoff", 0), self.params)

    @property
    def node_cap(self) -> int:
        return int(self.verify.get("node_cap", 10))

    @property
    def dual_cap(self) -> int:
        return int(self.verify.get("dual_cap", 3))

    @property
    def params(self) -> dict[str, Fraction]:
        return {"kappa": self.kappa, "theta": self.theta}


def validate(doc: Mapping) -> None:
    """Raise :class:`SpecError` naming the first schema violation."""
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SpecError(f"schema violation at {where}: {exc.message}") from exc


def problem_from_dict(doc: Mapping) -> Problem:
    validate(doc)
    types = doc["types"]
    d = types["dimension"]
    scaling = Scaling(tuple(types["scaling"])) if "scaling" in types else Scaling.parabolic(d)
    if scaling.d != d:
        raise SpecError(f"scaling {list(scaling.s)} does not match dimension {d}")
    kappa = parse_rational(types.get("kappa", str(DEFAULT_KAPPA)))
    theta = parse_rational(types.get("theta", str(DEFAULT_THETA)))
    env = {"kappa": kappa, "theta": theta}

    hom: dict[str, Fraction] = {}
    reg: dict[str, Fraction] = {}
    for section in ("kernels", "noises"):
        for t, entry in types[section].items():
            for key, store in (("hom", hom), ("reg", reg)):
                try:
                    store[t] = parse_rational(entry[key], env)
                except SpecError as exc:
                    raise SpecError(f"type {t!r}: {key}: {exc}") from exc
    try:
        table = TypeTable(tuple(types["kernels"]), tuple(types["noises"]), hom, reg)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc

    try:
        rule = rule_from_json(doc["rule"], table, scaling.dim)
    except (ValueError, KeyError) as exc:
        raise SpecError(f"rule: {exc}") from exc
    not_normal = check_normal(rule)
    if not_normal:
        raise SpecError("rule is not normal: " + "; ".join(not_normal))

    nl = doc["nonlinearity"]
    entries = {}
    for t, parts in nl["components"].items():
        if not table.is_kernel(t):
            raise SpecError(f"nonlinearity given for unknown kernel type {t!r}")
        for key, expr in parts.items():
            xi = DRIFT if key == "drift" else key
            if xi is not DRIFT and not table.is_noise(xi):
                raise SpecError(f"nonlinearity of {t!r} refers to unknown noise {key!r}")
            try:
                entries[(t, xi)] = parse_expr(expr, scaling.dim)
            except ValueError as exc:
                raise SpecError(f"nonlinearity {t}/{key}: {exc}") from exc
    missing = [t for t in table.kernel_types if t not in nl["components"]]
    if missing:
        raise SpecError(f"no nonlinearity for kernel types {missing}")
    spec = NonlinearitySpec(tuple(table.kernel_types), entries, scaling.dim)
    for (t, xi), expr in entries.items():
        for v in expr.variables():
            if not table.is_kernel(v.component):
                raise SpecError(f"nonlinearity {t}/{xi or 'drift'} uses unknown component {v.component!r}")
    mode = nl.get("mode", "polynomial" if spec.is_polynomial() else "generic")
    if mode == "polynomial" and not spec.is_polynomial():
        raise SpecError("mode 'polynomial' declared but generic symbols are present")

    constants: dict[str, Fraction | float | str] = {}
    for code, value in doc.get("constants", {}).items():
        if isinstance(value, str):
            try:
                constants[code] = parse_rational(value, env)
            except SpecError:
                constants[code] = value
        else:
            constants[code] = value

    return Problem(
        name=doc.get("name", "unnamed"),
        table=table,
        scaling=scaling,
        kappa=kappa,
        theta=theta,
        rule=rule,
        nonlinearity=spec,
        mode=mode,
        constants=constants,
        simulation=dict(doc.get("simulation", {})),
        verify=dict(doc.get("verify", {})),
        raw=dict(doc),
    )


def load_problem(path: str | Path) -> Problem:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON: {exc}") from exc
    return problem_from_dict(doc)
