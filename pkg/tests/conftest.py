import json
from pathlib import Path

import pytest

from agentapps.agent import AgentScript, ScriptedAgent
from agentapps.environment import MockEnvironment
from agentapps.intent import IntentAnalyzer
from agentapps.service import SessionService
from agentapps.store import AppStore

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
DATASETS = FIXTURES / "datasets"
SCRIPT = FIXTURES / "scripts" / "all.json"
TRACES = FIXTURES / "traces"


@pytest.fixture
def env() -> MockEnvironment:
    e = MockEnvironment()
    e.load_dir(DATASETS)
    return e


@pytest.fixture
def agent() -> ScriptedAgent:
    return ScriptedAgent(AgentScript.load(SCRIPT))


@pytest.fixture
def analyzer() -> IntentAnalyzer:
    return IntentAnalyzer()


@pytest.fixture
def make_service(tmp_path, analyzer):
    """Factory: fresh service + store dir, optionally reusing a store."""

    def build(store_dir=None) -> SessionService:
        e = MockEnvironment()
        e.load_dir(DATASETS)
        a = ScriptedAgent(AgentScript.load(SCRIPT))
        store = AppStore(Path(store_dir) if store_dir else tmp_path / "store")
        return SessionService(e, a, analyzer, store)

    return build


@pytest.fixture
def service(make_service) -> SessionService:
    return make_service()


def load_trace(name: str) -> dict:
    return json.loads((TRACES / f"{name}.json").read_text(encoding="utf-8"))


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the run, past output capture."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    for line in getattr(mod, "VERDICTS", []):
        terminalreporter.write_line(line)
