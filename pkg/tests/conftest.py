"""Shared fixtures: simulator harnesses and scenario building blocks."""

from pathlib import Path

import pytest

from whatif.dsl import Template, load_templates, parse_scenario
from whatif.events import EventQueue, SimClock
from whatif.executors.sim import SimExecutor
from whatif.telemetry import MetricsStore

REPO = Path(__file__).resolve().parent.parent
SCENARIOS = REPO / "scenarios"


def make_sim_harness():
    """A bare simulator bound to its own queue, clock, and store."""
    executor = SimExecutor()
    queue = EventQueue()
    clock = SimClock()
    store = MetricsStore()
    executor.bind(queue, clock, store)
    return executor, queue, clock, store


@pytest.fixture
def sim_harness():
    return make_sim_harness()


def script_template(name: str, lines: list) -> Template:
    body = "script:\n" + "\n".join(f"- {line}" for line in lines) + "\n"
    return Template(name, {}, body)


def stage_template() -> Template:
    """Parameterized single-stage call used by the scheduling-policy tests."""
    body = (
        "script:\n"
        "- { at: 0s, do: running }\n"
        "- { at: {{dur}}, do: success }\n"
    )
    return Template("stage", {"dur": None}, body)


@pytest.fixture
def partition_demo():
    doc = parse_scenario((SCENARIOS / "partition-demo.yaml").read_text())
    templates = load_templates(SCENARIOS / "templates")
    return doc, templates
