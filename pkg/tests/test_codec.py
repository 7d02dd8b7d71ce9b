import pytest

from agentapps import codec
from agentapps.errors import DecodeError
from agentapps.state import (
    AffordanceSet,
    AgentContext,
    AnticipatoryAffordance,
    AppState,
    EnvironmentRecordRef,
    Event,
    HistoryEntry,
    RetrievedRecord,
    StructuredAffordance,
    ViewNode,
)


def _rich_state() -> AppState:
    ref = EnvironmentRecordRef("src", "r1", 2)
    view = ViewNode("root", "panel", {"title": "x"}, children=(
        ViewNode("c1", "card", {"n": 3, "s": "ünïcode"}, source_refs=(ref,)),
    ))
    affs = AffordanceSet(
        structured=(StructuredAffordance("f1", "c1", "sort",
                                         {"field": {"type": "string"}},
                                         {"field": "n"}),),
        anticipatory=(AnticipatoryAffordance("a1", "Do It", "do the thing"),),
    )
    ctx = AgentContext(
        retrieved=(RetrievedRecord(ref, {"n": 3, "s": "ünïcode"}),),
        preferences={"p": 1},
        task_progress={"t": "x"},
        history=(HistoryEntry("e", "element_update", "s"),),
        compressed_summary="older stuff",
    )
    return AppState("app-1", 4, view, affs, ctx, content_rev=2, created_at=4)


def test_state_round_trip_identity():
    s = _rich_state()
    assert codec.deserialize_state(codec.serialize_state(s)) == s


def test_serialization_is_canonical():
    s = _rich_state()
    assert codec.serialize_state(s) == codec.serialize_state(codec.deserialize_state(codec.serialize_state(s)))
    raw = codec.serialize_state(s)
    assert b": " not in raw and b", " not in raw  # compact separators
    assert "ünïcode".encode("utf-8") in raw  # ensure_ascii off


def test_decode_error_carries_offset():
    with pytest.raises(DecodeError) as exc:
        codec.decode_document(b'{"a": 1, "b": }')
    assert exc.value.offset == 14


def test_deserialize_rejects_wrong_format():
    doc = codec.state_to_doc(_rich_state())
    doc["format"] = "something/9"
    with pytest.raises(DecodeError):
        codec.deserialize_state(codec.canonical_bytes(doc))
    with pytest.raises(DecodeError):
        codec.deserialize_state(b'"just a string"')
    with pytest.raises(DecodeError):
        codec.deserialize_state(codec.canonical_bytes({"format": "appstate/1"}))


def test_event_round_trip():
    ev = Event("e-1", "s-1", "structured", {"affordance_id": "f1", "params": {"x": 1}}, 3)
    assert codec.event_from_doc(codec.event_to_doc(ev)) == ev


def test_view_hash_stable_and_content_sensitive():
    s = _rich_state()
    h1 = codec.view_hash(s.view)
    assert h1 == codec.view_hash(s.view) and len(h1) == 12
    other = ViewNode("root", "panel", {"title": "y"})
    assert codec.view_hash(other) != h1
