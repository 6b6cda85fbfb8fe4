from __future__ import annotations

import json
from pathlib import Path

import pytest

from rsdual.specfile import load_problem, problem_from_dict

SPECS = Path(__file__).resolve().parents[1] / "specs"


def spec_path(name: str) -> Path:
    return SPECS / f"{name}.json"


def spec_doc(name: str) -> dict:
    return json.loads(spec_path(name).read_text())


def problem_with(name: str, edit) -> object:
    """Load a shipped spec after applying ``edit`` to its JSON document."""
    doc = spec_doc(name)
    edit(doc)
    return problem_from_dict(doc)


@pytest.fixture(scope="session")
def she():
    return load_problem(spec_path("she"))


@pytest.fixture(scope="session")
def additive():
    return load_problem(spec_path("additive_she"))


@pytest.fixture(scope="session")
def phi4():
    return load_problem(spec_path("phi4_3"))


@pytest.fixture(scope="session")
def kpz():
    return load_problem(spec_path("kpz_like"))


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
