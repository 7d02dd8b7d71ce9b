import pytest

from agentapps.agent import (
    AgentScript,
    CompatibilityReport,
    GenerationPlan,
    RenderRequest,
    ScriptedAgent,
    assess_compatibility,
    make_plan,
    select_strategy,
)
from agentapps.errors import SchemaViolation, ScriptMiss
from agentapps.intent import IntentAssessment
from agentapps.state import (
    AppState,
    EnvironmentRecordRef,
    ViewNode,
    apply_delta,
    empty_state,
    find_node,
)
from conftest import SCRIPT


def _view_with_group(fields):
    cards = tuple(
        ViewNode(f"c{i}", "card", {f: i for f in fields} | {"title": f"t{i}"},
                 source_refs=(EnvironmentRecordRef("s", f"r{i}", 1),))
        for i in range(2)
    )
    return ViewNode("root", "panel", children=(ViewNode("grp", "list", children=cards),))


def _data(fields):
    return [(EnvironmentRecordRef("s", "rx", 1), {f: 9 for f in fields})]


def test_compatibility_same_new_unrelated():
    view = _view_with_group(["price", "rating"])
    assert assess_compatibility(view, _data(["price", "rating"])).verdict == "same_shape"
    assert assess_compatibility(view, _data(["price", "warranty"])).verdict == "new_facet"
    assert assess_compatibility(view, _data(["humidity"])).verdict == "unrelated"
    assert assess_compatibility(view, []).verdict == "same_shape"


def test_presentational_fields_ignored_in_compat():
    view = _view_with_group(["price"])
    # title is presentational on both sides of the comparison
    assert assess_compatibility(view, _data(["price"])).verdict == "same_shape"


def test_strategy_selection_matrix():
    same = CompatibilityReport("same_shape")
    facet = CompatibilityReport("new_facet")
    assert select_strategy("replace", same) == "app_replacement"
    assert select_strategy("diverge", same) == "structural_extension"
    assert select_strategy("converge", facet) == "structural_extension"
    assert select_strategy("converge", same) == "element_update"


def test_make_plan_maps_category_to_architecture():
    a = IntentAssessment("structured_app", "monitoring", 0.9)
    assert make_plan(a, "watch rates").architecture == "dashboard_metrics"
    with pytest.raises(SchemaViolation):
        make_plan(IntentAssessment("plain_text"), "hello")


def _cold_plan(analyzer, text):
    return make_plan(analyzer.assess_cold_start(text), text)


def test_script_first_match_wins_and_misses_raise(analyzer, env):
    agent = ScriptedAgent(AgentScript.load(SCRIPT))
    plan = _cold_plan(analyzer, "help me rent a car this weekend")
    entry = agent.script.match(RenderRequest(None, plan))
    assert entry["id"] == "car_rental_cold"
    with pytest.raises(ScriptMiss):
        agent.script.match(RenderRequest(
            None, make_plan(IntentAssessment("structured_app", "creation", 0.8),
                            "write me a poem")))


def test_cold_start_render_binds_records(analyzer, env, agent):
    plan = _cold_plan(analyzer, "keep an eye on usd rates")
    retrieved = tuple(tuple(env.execute_query(q)) for q in plan.queries)
    delta = agent.render(RenderRequest(None, plan, retrieved))
    state = apply_delta(empty_state("app-t"), delta).next
    assert isinstance(state, AppState)
    metric = find_node(state.view, "fx_r_aud")
    assert metric.props["rate"] == 1.52
    assert metric.source_refs == (EnvironmentRecordRef("fx_rates", "r_aud", 1),)
    # the bound record landed in context
    assert any(r.ref.record_id == "r_aud" for r in state.context.retrieved)


def test_cold_start_requires_root_template(agent, analyzer):
    plan = _cold_plan(analyzer, "keep an eye on usd rates")
    entry = dict(agent.script.entries[-1])
    entry["view"] = dict(entry["view"], node_id="not_root")
    agent.script.entries = [dict(e) for e in agent.script.entries]
    agent.script.entries[-1] = entry
    with pytest.raises(SchemaViolation):
        agent.render(RenderRequest(None, plan, ((),)))


def test_plan_doc_round_trip(analyzer):
    plan = _cold_plan(analyzer, "rent a car for the coast trip")
    assert GenerationPlan.from_doc(plan.to_doc()) == plan
