from __future__ import annotations

from pathlib import Path

import pytest

from bim2map.ifc_model import decode_ifc
from bim2map.step_parser import read_step
from bim2map.world_model import build_graph

FIXTURES = Path(__file__).parent / "fixtures"
FIXTURE_FILES = sorted(FIXTURES.glob("*.ifc"))


def load_fixture_graph(name: str):
    return build_graph(decode_ifc(read_step(FIXTURES / name)))


@pytest.fixture(scope="session")
def room_graph():
    return load_fixture_graph("room.ifc")


@pytest.fixture(scope="session")
def lab_graph():
    return load_fixture_graph("lab.ifc")


@pytest.fixture(scope="session")
def lab04_graph():
    return load_fixture_graph("lab_arch04.ifc")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", ""):
                continue
            if rep.when != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", []))
            name = props.get("criterion", rep.nodeid.split("::")[-1])
            detail = props.get("detail", "")
            lines.append((name, "PASS" if outcome == "passed" else "FAIL", detail))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status, detail in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}: {detail}")
