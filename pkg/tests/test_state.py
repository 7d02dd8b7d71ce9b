import pytest

from agentapps.errors import DanglingNodeRef, SchemaViolation, StrategyViolation
from agentapps.state import (
    AffordanceSet,
    AgentContext,
    AppState,
    ContextUpdate,
    Delta,
    EnvironmentRecordRef,
    HistoryEntry,
    InsertChild,
    NewAppRequest,
    RemoveNode,
    RetrievedRecord,
    SetProps,
    StructuredAffordance,
    TextReply,
    ViewNode,
    apply_delta,
    diff_view,
    empty_state,
    validate_state,
)


def _simple_state() -> AppState:
    view = ViewNode("root", "panel", {"title": "t"}, children=(
        ViewNode("body", "panel", {}, children=(
            ViewNode("a", "text", {"label": "A"}),
            ViewNode("b", "text", {"label": "B"}),
        )),
    ))
    return AppState("app-x", 0, view, AffordanceSet(), AgentContext())


def test_set_props_merges_and_advances_seq():
    s0 = _simple_state()
    result = apply_delta(s0, Delta("element_update", (SetProps("a", {"label": "A2", "x": 1}),)))
    s1 = result.next
    assert isinstance(s1, AppState)
    assert s1.state_seq == 1 and s1.content_rev == 0 and s1.created_at == 1
    node = next(n for n in s1.view.children[0].children if n.node_id == "a")
    assert node.props == {"label": "A2", "x": 1}
    # prior state is untouched
    assert s0.view.children[0].children[0].props == {"label": "A"}


def test_insert_and_remove():
    s0 = _simple_state()
    delta = Delta("structural_extension", (
        InsertChild("body", 1, ViewNode("c", "text", {"label": "C"})),
        RemoveNode("b"),
    ))
    s1 = apply_delta(s0, delta).next
    assert [n.node_id for n in s1.view.children[0].children] == ["a", "c"]


def test_remove_root_rejected():
    with pytest.raises(StrategyViolation):
        apply_delta(_simple_state(), Delta("structural_extension", (RemoveNode("root"),)))


def test_missing_targets_raise_dangling():
    s0 = _simple_state()
    with pytest.raises(DanglingNodeRef):
        apply_delta(s0, Delta("element_update", (SetProps("ghost", {}),)))
    with pytest.raises(DanglingNodeRef):
        apply_delta(s0, Delta("structural_extension",
                              (InsertChild("ghost", 0, ViewNode("n", "text")),)))


def test_duplicate_insert_rejected():
    with pytest.raises(SchemaViolation):
        apply_delta(_simple_state(), Delta("structural_extension",
                                           (InsertChild("body", 0, ViewNode("a", "text")),)))


def test_element_update_rejects_shallow_layout_changes():
    s0 = _simple_state()
    tab_group = ViewNode("tg", "tab_group", children=(ViewNode("t1", "tab"),))
    with pytest.raises(StrategyViolation):
        apply_delta(s0, Delta("element_update", (InsertChild("root", 0, tab_group),)))
    with pytest.raises(StrategyViolation):
        apply_delta(s0, Delta("element_update", (RemoveNode("body"),)))
    # the same ops are fine as a structural extension
    assert apply_delta(s0, Delta("structural_extension",
                                 (InsertChild("root", 0, tab_group),))).next.state_seq == 1


def test_element_update_allows_deep_content_edits():
    s0 = _simple_state()
    out = apply_delta(s0, Delta("element_update",
                                (InsertChild("body", -1, ViewNode("d", "text")),)))
    assert "d" in {n.node_id for n in out.next.view.children[0].children}


def test_text_reply_and_replacement_results():
    s0 = _simple_state()
    r = apply_delta(s0, Delta("text_reply", reply_text="hello"))
    assert r.next == TextReply("hello") and r.strategy == "text_reply"
    r = apply_delta(s0, Delta("app_replacement", replacement_seed={"utterance": "x"}))
    assert isinstance(r.next, NewAppRequest)
    with pytest.raises(StrategyViolation):
        apply_delta(s0, Delta("text_reply", (SetProps("a", {}),), reply_text="no"))
    with pytest.raises(SchemaViolation):
        apply_delta(s0, Delta("app_replacement"))
    with pytest.raises(SchemaViolation):
        apply_delta(s0, Delta("bogus_strategy"))


def test_validate_state_catches_structural_violations():
    ref = EnvironmentRecordRef("src", "r1", 1)
    view = ViewNode("root", "panel", children=(
        ViewNode("dup", "text"),
        ViewNode("dup", "weird_kind"),
        ViewNode("stray_tab", "tab"),
        ViewNode("cited", "card", source_refs=(ref,)),
    ))
    affs = AffordanceSet(structured=(
        StructuredAffordance("f1", "missing", "sort"),
        StructuredAffordance("f1", "root", "frobnicate",
                             resolved_params={"x": 1}),
    ))
    state = AppState("a", 0, view, affs, AgentContext())
    codes = {v.code for v in validate_state(state)}
    assert codes == {
        "DuplicateNodeId", "UnknownNodeKind", "TabOutsideTabGroup",
        "DanglingAffordanceAnchor", "DuplicateAffordanceId", "UnknownVerb",
        "ResolvedParamsNotInSchema", "UnresolvableSourceRef",
    }


def test_source_ref_resolvable_via_context():
    ref = EnvironmentRecordRef("src", "r1", 1)
    view = ViewNode("root", "panel", children=(ViewNode("c", "card", source_refs=(ref,)),))
    ctx = AgentContext(retrieved=(RetrievedRecord(ref, {"f": 1}),))
    assert validate_state(AppState("a", 0, view, AffordanceSet(), ctx)) == []


def test_diff_view_partitions():
    old = _simple_state().view
    new_body = ViewNode("body", "panel", {}, children=(
        ViewNode("a", "text", {"label": "A!"}),
        ViewNode("c", "text", {"label": "C"}),
    ))
    new = ViewNode("root", "panel", {"title": "t"}, children=(new_body,))
    d = diff_view(old, new)
    assert d["added_ids"] == {"c"}
    assert d["removed_ids"] == {"b"}
    assert d["mutated_ids"] == {"a"}
    # body only changed children, so it is preserved
    assert d["preserved_ids"] == {"root", "body"}


def test_context_merge_and_history_compression():
    s = _simple_state()
    for i in range(14):
        entry = HistoryEntry(f"ev{i}", "element_update", f"sum{i}")
        s = apply_delta(s, Delta("element_update",
                                 context_ops=ContextUpdate(history_append=(entry,)))).next
    assert len(s.context.history) <= 12
    assert s.context.compressed_summary and "sum0" in s.context.compressed_summary
    # most recent entries stay verbatim
    assert s.context.history[-1].event == "ev13"


def test_empty_state_is_pre_initial():
    s = empty_state("app-z")
    assert s.state_seq == -1 and s.view.node_id == "root"
    grown = apply_delta(s, Delta("structural_extension",
                                 (InsertChild("root", 0, ViewNode("x", "text")),))).next
    assert grown.state_seq == 0
