"""Canonical serialization: one self-describing UTF-8 JSON document per value.

The same format is the wire format, the on-disk snapshot format, and the
share-package body. Key order is canonicalized (sorted) so serialization is
deterministic: equal values always produce identical bytes.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

from .errors import DecodeError
from .state import (
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

STATE_FORMAT = "appstate/1"


def canonical_bytes(doc: Any) -> bytes:
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_document(data: bytes) -> Any:
    try:
        return json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise DecodeError(f"invalid utf-8: {exc}", exc.start) from exc
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid document: {exc.msg}", exc.pos) from exc


# --- docs ---------------------------------------------------------------

def ref_to_doc(ref: EnvironmentRecordRef) -> dict:
    return {"source": ref.source, "record_id": ref.record_id, "version": ref.version}


def ref_from_doc(doc: Mapping) -> EnvironmentRecordRef:
    return EnvironmentRecordRef(doc["source"], doc["record_id"], int(doc["version"]))


def node_to_doc(node: ViewNode) -> dict:
    return {
        "node_id": node.node_id,
        "kind": node.kind,
        "props": dict(node.props),
        "source_refs": [ref_to_doc(r) for r in node.source_refs],
        "children": [node_to_doc(c) for c in node.children],
    }


def node_from_doc(doc: Mapping) -> ViewNode:
    return ViewNode(
        node_id=doc["node_id"],
        kind=doc["kind"],
        props=dict(doc.get("props", {})),
        children=tuple(node_from_doc(c) for c in doc.get("children", [])),
        source_refs=tuple(ref_from_doc(r) for r in doc.get("source_refs", [])),
    )


def affordances_to_doc(aff: AffordanceSet) -> dict:
    return {
        "structured": [
            {
                "affordance_id": a.affordance_id,
                "anchor_node": a.anchor_node,
                "verb": a.verb,
                "param_schema": {k: dict(v) for k, v in a.param_schema.items()},
                "resolved_params": None if a.resolved_params is None else dict(a.resolved_params),
            }
            for a in aff.structured
        ],
        "anticipatory": [
            {"affordance_id": a.affordance_id, "label": a.label, "intent_text": a.intent_text}
            for a in aff.anticipatory
        ],
        "nl_enabled": aff.nl_enabled,
    }


def affordances_from_doc(doc: Mapping) -> AffordanceSet:
    return AffordanceSet(
        structured=tuple(
            StructuredAffordance(
                affordance_id=a["affordance_id"],
                anchor_node=a["anchor_node"],
                verb=a["verb"],
                param_schema={k: dict(v) for k, v in a.get("param_schema", {}).items()},
                resolved_params=None if a.get("resolved_params") is None else dict(a["resolved_params"]),
            )
            for a in doc.get("structured", [])
        ),
        anticipatory=tuple(
            AnticipatoryAffordance(a["affordance_id"], a["label"], a["intent_text"])
            for a in doc.get("anticipatory", [])
        ),
        nl_enabled=bool(doc.get("nl_enabled", True)),
    )


def context_to_doc(ctx: AgentContext) -> dict:
    return {
        "retrieved": [
            {"ref": ref_to_doc(r.ref), "payload": dict(r.payload)} for r in ctx.retrieved
        ],
        "preferences": dict(ctx.preferences),
        "task_progress": dict(ctx.task_progress),
        "history": [
            {"event": h.event, "strategy": h.strategy, "summary": h.summary} for h in ctx.history
        ],
        "compressed_summary": ctx.compressed_summary,
    }


def context_from_doc(doc: Mapping) -> AgentContext:
    return AgentContext(
        retrieved=tuple(
            RetrievedRecord(ref_from_doc(r["ref"]), dict(r["payload"]))
            for r in doc.get("retrieved", [])
        ),
        preferences=dict(doc.get("preferences", {})),
        task_progress=dict(doc.get("task_progress", {})),
        history=tuple(
            HistoryEntry(h["event"], h["strategy"], h["summary"]) for h in doc.get("history", [])
        ),
        compressed_summary=doc.get("compressed_summary"),
    )


def state_to_doc(state: AppState) -> dict:
    return {
        "format": STATE_FORMAT,
        "app_id": state.app_id,
        "state_seq": state.state_seq,
        "content_rev": state.content_rev,
        "created_at": state.created_at,
        "view": node_to_doc(state.view),
        "affordances": affordances_to_doc(state.affordances),
        "context": context_to_doc(state.context),
    }


def state_from_doc(doc: Mapping) -> AppState:
    if doc.get("format") != STATE_FORMAT:
        raise DecodeError(f"unexpected format {doc.get('format')!r}")
    return AppState(
        app_id=doc["app_id"],
        state_seq=int(doc["state_seq"]),
        view=node_from_doc(doc["view"]),
        affordances=affordances_from_doc(doc["affordances"]),
        context=context_from_doc(doc["context"]),
        content_rev=int(doc["content_rev"]),
        created_at=int(doc["created_at"]),
    )


def serialize_state(state: AppState) -> bytes:
    return canonical_bytes(state_to_doc(state))


def deserialize_state(data: bytes) -> AppState:
    doc = decode_document(data)
    if not isinstance(doc, Mapping):
        raise DecodeError("state document must be an object")
    try:
        return state_from_doc(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"malformed state document: {exc!r}") from exc


def event_to_doc(event: Event) -> dict:
    return {
        "event_id": event.event_id,
        "session_id": event.session_id,
        "channel": event.channel,
        "payload": dict(event.payload),
        "basis_state_seq": event.basis_state_seq,
    }


def event_from_doc(doc: Mapping) -> Event:
    return Event(
        event_id=doc["event_id"],
        session_id=doc["session_id"],
        channel=doc["channel"],
        payload=dict(doc.get("payload", {})),
        basis_state_seq=int(doc["basis_state_seq"]),
    )


def view_hash(node: ViewNode) -> str:
    """Stable short digest of a view subtree."""
    import hashlib

    return hashlib.sha256(canonical_bytes(node_to_doc(node))).hexdigest()[:12]
