"""The agent participant behind a single render contract.

Ships a deterministic scripted backend: ordered trigger -> recipe entries
loaded from a script file turn fixture data into deltas and affordances.
The render contract (RenderRequest -> Delta) is the extension point for a
real LLM backend; nothing else in the engine knows what produced the delta.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from .environment import QuerySpec
from .errors import SchemaViolation, ScriptMiss
from .intent import IntentAssessment, InterpretedEvent
from .state import (
    AffordanceSet,
    AgentContext,
    AnticipatoryAffordance,
    AppState,
    ContextUpdate,
    Delta,
    EnvironmentRecordRef,
    HistoryEntry,
    InsertChild,
    NodeOp,
    RemoveNode,
    RetrievedRecord,
    SetProps,
    StructuredAffordance,
    ViewNode,
    _apply_op,
    node_ids,
)

# Table 2 row: intent category -> information architecture.
ARCHITECTURE_BY_CATEGORY = {
    "selection": "parallel_items",
    "exploration": "hierarchical_progressive",
    "execution": "sequential_steps",
    "monitoring": "dashboard_metrics",
    "creation": "editable_workspace",
}

# Prop keys that describe presentation, not record fields.
_PRESENTATIONAL_KEYS = frozenset({"derived", "title", "label", "level", "icon", "image"})

QueryResults = tuple[tuple[tuple[EnvironmentRecordRef, Mapping[str, Any]], ...], ...]


@dataclass(frozen=True)
class GenerationPlan:
    assessment: IntentAssessment
    architecture: str
    queries: tuple[QuerySpec, ...]
    utterance: str = ""

    def to_doc(self) -> dict:
        return {
            "assessment": self.assessment.to_doc(),
            "architecture": self.architecture,
            "queries": [q.to_doc() for q in self.queries],
            "utterance": self.utterance,
        }

    @staticmethod
    def from_doc(doc: Mapping) -> "GenerationPlan":
        return GenerationPlan(
            assessment=IntentAssessment.from_doc(doc["assessment"]),
            architecture=doc["architecture"],
            queries=tuple(QuerySpec.from_doc(q) for q in doc.get("queries", [])),
            utterance=doc.get("utterance", ""),
        )


def make_plan(assessment: IntentAssessment, utterance: str) -> GenerationPlan:
    if assessment.category not in ARCHITECTURE_BY_CATEGORY:
        raise SchemaViolation(f"no architecture for category {assessment.category!r}")
    return GenerationPlan(
        assessment=assessment,
        architecture=ARCHITECTURE_BY_CATEGORY[assessment.category],
        queries=assessment.data_requirements,
        utterance=utterance,
    )


@dataclass(frozen=True)
class RenderRequest:
    prior_state: Optional[AppState]
    interpreted: Union[InterpretedEvent, GenerationPlan]
    retrieved: QueryResults = ()


@dataclass(frozen=True)
class CompatibilityReport:
    verdict: str  # "same_shape" | "new_facet" | "unrelated"


def assess_compatibility(view: ViewNode, new_data: Sequence[tuple[EnvironmentRecordRef, Mapping]]) -> CompatibilityReport:
    """Field-set algebra: equal rendered field-sets are same_shape, overlapping
    ones a new facet, disjoint ones unrelated."""
    if not new_data:
        return CompatibilityReport("same_shape")
    new_fields = set()
    for _ref, payload in new_data:
        new_fields |= set(payload)
    group_fields: list[set[str]] = []

    def collect(node: ViewNode) -> None:
        data_children = [c for c in node.children if c.source_refs]
        if len(data_children) >= 2:
            fields = set()
            for c in data_children:
                fields |= set(c.props) - _PRESENTATIONAL_KEYS
            if fields:
                group_fields.append(fields)
        for c in node.children:
            collect(c)

    collect(view)
    if any(fields == new_fields for fields in group_fields):
        return CompatibilityReport("same_shape")
    if any(fields & new_fields for fields in group_fields):
        return CompatibilityReport("new_facet")
    return CompatibilityReport("unrelated")


def select_strategy(hint: str, compat: CompatibilityReport) -> str:
    """Ordered rule, first match: replacement, then extension, then in-place update."""
    if hint == "replace":
        return "app_replacement"
    if hint == "diverge" or compat.verdict != "same_shape":
        return "structural_extension"
    return "element_update"


# --- script -------------------------------------------------------------

@dataclass
class AgentScript:
    entries: list[dict] = field(default_factory=list)

    @staticmethod
    def load(path: Path) -> "AgentScript":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return AgentScript(entries=list(doc.get("entries", [])))

    def match(self, req: RenderRequest) -> dict:
        for entry in self.entries:
            if self._trigger_matches(entry.get("trigger", {}), req):
                return entry
        raise ScriptMiss(self._describe(req))

    @staticmethod
    def _describe(req: RenderRequest) -> str:
        if isinstance(req.interpreted, GenerationPlan):
            return f"cold_start utterance={req.interpreted.utterance!r}"
        return f"evolution intent={req.interpreted.resolved_intent!r}"

    @staticmethod
    def _trigger_matches(trigger: Mapping, req: RenderRequest) -> bool:
        cold = isinstance(req.interpreted, GenerationPlan)
        phase = trigger.get("phase")
        if phase and phase != ("cold_start" if cold else "evolution"):
            return False
        if cold:
            plan = req.interpreted
            if trigger.get("category") and plan.assessment.category != trigger["category"]:
                return False
            subs = trigger.get("utterance_any")
            if subs and not any(s.lower() in plan.utterance.lower() for s in subs):
                return False
            if trigger.get("modality") and plan.assessment.modality != trigger["modality"]:
                return False
        else:
            interp = req.interpreted
            if trigger.get("channel") and interp.source.channel != trigger["channel"]:
                return False
            if trigger.get("affordance_id"):
                if interp.source.payload.get("affordance_id") != trigger["affordance_id"]:
                    return False
            subs = trigger.get("intent_any")
            if subs and not any(s.lower() in interp.resolved_intent for s in subs):
                return False
        return True


@dataclass
class _BoundNodes:
    nodes: list[ViewNode]
    records: list[RetrievedRecord]


def _lookup(retrieved: QueryResults, result_idx: int, record_id: str):
    for ref, payload in retrieved[result_idx]:
        if ref.record_id == record_id:
            return ref, payload
    raise SchemaViolation(f"record {record_id!r} not in query result {result_idx}")


def _build_node(template: Mapping, retrieved: QueryResults) -> _BoundNodes:
    """Instantiate a node template, expanding repeats and resolving bindings."""
    repeat = template.get("repeat")
    if repeat is not None:
        out = _BoundNodes([], [])
        for ref, payload in retrieved[repeat["result"]]:
            inner = dict(template)
            inner.pop("repeat")
            bound = _build_single(inner, retrieved, (ref, payload))
            out.nodes.append(bound.nodes[0])
            out.records.extend(bound.records)
        return out
    return _build_single(template, retrieved, None)


def _build_single(template: Mapping, retrieved: QueryResults, record) -> _BoundNodes:
    records: list[RetrievedRecord] = []
    refs: list[EnvironmentRecordRef] = []
    props: dict[str, Any] = {}
    for key, value in template.get("props", {}).items():
        if isinstance(value, Mapping) and "$field" in value:
            if record is None:
                raise SchemaViolation(f"$field binding outside a repeat: {key}")
            ref, payload = record
            props[key] = payload[value["$field"]]
            if ref not in refs:
                refs.append(ref)
                records.append(RetrievedRecord(ref, dict(payload)))
        elif isinstance(value, Mapping) and "$ref" in value:
            spec = value["$ref"]
            ref, payload = _lookup(retrieved, spec["result"], spec["record_id"])
            props[key] = payload[spec["field"]]
            if ref not in refs:
                refs.append(ref)
                records.append(RetrievedRecord(ref, dict(payload)))
        else:
            props[key] = value
    node_id = template["node_id"]
    if record is not None:
        node_id = node_id.replace("{record_id}", record[0].record_id)
    children: list[ViewNode] = []
    for child_tpl in template.get("children", []):
        bound = _build_node(child_tpl, retrieved)
        children.extend(bound.nodes)
        records.extend(bound.records)
    return _BoundNodes(
        [ViewNode(node_id=node_id, kind=template["kind"], props=props,
                  children=tuple(children), source_refs=tuple(refs))],
        records,
    )


def _build_ops(op_docs: Sequence[Mapping], retrieved: QueryResults) -> tuple[list[NodeOp], list[RetrievedRecord]]:
    ops: list[NodeOp] = []
    records: list[RetrievedRecord] = []
    for doc in op_docs:
        kind = doc["op"]
        if kind == "set_props":
            ops.append(SetProps(doc["node_id"], dict(doc["props"])))
        elif kind == "insert_child":
            bound = _build_node(doc["node"], retrieved)
            records.extend(bound.records)
            index = doc.get("index", -1)
            for offset, node in enumerate(bound.nodes):
                ops.append(InsertChild(doc["parent"], index if index < 0 else index + offset, node))
        elif kind == "remove_node":
            ops.append(RemoveNode(doc["node_id"]))
        else:
            raise SchemaViolation(f"unknown node op {kind!r} in script")
    return ops, records


def generate_affordances(view: ViewNode, context: AgentContext, spec: Optional[Mapping]) -> AffordanceSet:
    """Instantiate an affordance block against a view; anchors must exist."""
    if spec is None:
        return AffordanceSet()
    ids = node_ids(view)
    structured = []
    for doc in spec.get("structured", []):
        if doc["anchor"] not in ids:
            raise SchemaViolation(f"affordance {doc['affordance_id']!r} anchors missing node {doc['anchor']!r}")
        structured.append(StructuredAffordance(
            affordance_id=doc["affordance_id"],
            anchor_node=doc["anchor"],
            verb=doc["verb"],
            param_schema={k: dict(v) for k, v in doc.get("param_schema", {}).items()},
            resolved_params=doc.get("resolved_params"),
        ))
    anticipatory = [
        AnticipatoryAffordance(doc["affordance_id"], doc["label"], doc["intent_text"])
        for doc in spec.get("anticipatory", [])
    ]
    return AffordanceSet(tuple(structured), tuple(anticipatory), nl_enabled=True)


class ScriptedAgent:
    """Deterministic test double for the LLM behind the render contract."""

    def __init__(self, script: AgentScript):
        self.script = script

    def plan_retrieval(self, interpreted: InterpretedEvent, prior_state: AppState) -> tuple[QuerySpec, ...]:
        entry = self.script.match(RenderRequest(prior_state, interpreted))
        return tuple(QuerySpec.from_doc(q) for q in entry.get("queries", []))

    def render(self, req: RenderRequest) -> Delta:
        entry = self.script.match(req)
        if entry.get("strategy") == "text_reply":
            return Delta(strategy="text_reply", reply_text=entry["reply_text"])
        if entry.get("strategy") == "app_replacement":
            return Delta(strategy="app_replacement", replacement_seed=dict(entry["seed"]))
        if isinstance(req.interpreted, GenerationPlan):
            return self._render_cold_start(entry, req)
        return self._render_evolution(entry, req)

    def _render_cold_start(self, entry: Mapping, req: RenderRequest) -> Delta:
        plan = req.interpreted
        tpl = entry["view"]
        if tpl.get("node_id") != "root":
            raise SchemaViolation("cold start view template must be rooted at 'root'")
        ops: list[NodeOp] = []
        records: list[RetrievedRecord] = []
        if tpl.get("props"):
            ops.append(SetProps("root", dict(tpl["props"])))
        for i, child_tpl in enumerate(tpl.get("children", [])):
            bound = _build_node(child_tpl, req.retrieved)
            records.extend(bound.records)
            for node in bound.nodes:
                ops.append(InsertChild("root", -1, node))
        view = ViewNode("root", "panel")
        for op in ops:
            view = _apply_op(view, op)
        affordances = generate_affordances(view, AgentContext(), entry.get("affordances"))
        history = HistoryEntry(
            event=f"utterance: {plan.utterance}",
            strategy="structural_extension",
            summary=entry.get("summary", entry["id"]),
        )
        return Delta(
            strategy="structural_extension",
            node_ops=tuple(ops),
            structured=affordances.structured,
            anticipatory=affordances.anticipatory,
            context_ops=ContextUpdate(
                retrieved_add=tuple(_dedupe(records)),
                preferences=dict(entry.get("preferences", {})),
                task_progress=dict(entry.get("task_progress", {})),
                history_append=(history,),
            ),
        )

    def _render_evolution(self, entry: Mapping, req: RenderRequest) -> Delta:
        interp = req.interpreted
        prior = req.prior_state
        if prior is None:
            raise SchemaViolation("evolution render requires a prior state")
        flat = [pair for result in req.retrieved for pair in result]
        compat = assess_compatibility(prior.view, flat)
        strategy = select_strategy(interp.suggested_strategy_hint, compat)
        if strategy == "app_replacement":
            seed = entry.get("seed")
            if seed is None:
                raise ScriptMiss(f"entry {entry['id']!r} has no seed for app_replacement")
            return Delta(strategy="app_replacement", replacement_seed=dict(seed))
        ops, records = _build_ops(entry.get("node_ops", []), req.retrieved)
        view = prior.view
        for op in ops:
            view = _apply_op(view, op)
        aff_spec = entry.get("affordances")
        if aff_spec is not None:
            affordances = generate_affordances(view, prior.context, aff_spec)
            structured, anticipatory = affordances.structured, affordances.anticipatory
        else:
            structured, anticipatory = None, None
        history = HistoryEntry(
            event=interp.resolved_intent,
            strategy=strategy,
            summary=entry.get("summary", entry["id"]),
        )
        return Delta(
            strategy=strategy,
            node_ops=tuple(ops),
            structured=structured,
            anticipatory=anticipatory,
            context_ops=ContextUpdate(
                retrieved_add=tuple(_dedupe(records)),
                preferences=dict(entry.get("preferences", {})),
                task_progress=dict(entry.get("task_progress", {})),
                history_append=(history,),
            ),
        )


def _dedupe(records: list[RetrievedRecord]) -> list[RetrievedRecord]:
    """Collapse duplicate refs; differently-projected payloads of the same
    record version merge into one."""
    seen: dict[tuple, RetrievedRecord] = {}
    for rec in records:
        key = (rec.ref.source, rec.ref.record_id, rec.ref.version)
        if key in seen:
            merged = {**dict(seen[key].payload), **dict(rec.payload)}
            seen[key] = RetrievedRecord(rec.ref, merged)
        else:
            seen[key] = rec
    return list(seen.values())
