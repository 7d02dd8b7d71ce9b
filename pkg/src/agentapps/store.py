"""History tree, persistence, and the distribution layer.

On-disk layout: <store>/<app_id>/history.index plus one immutable
state-<seq>.snap per state (canonical serialization). Share packages are
single-file containers with a kind header and a serialized body.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from . import codec
from .agent import GenerationPlan, RenderRequest, ScriptedAgent
from .environment import MockEnvironment
from .errors import DecodeError, SchemaViolation, SeqConflict, UnknownSource
from .state import (
    AffordanceSet,
    AgentContext,
    AppState,
    NewAppRequest,
    RetrievedRecord,
    TextReply,
    TransitionResult,
    ViewNode,
    apply_delta,
    empty_state,
    iter_nodes,
)

TEMPLATE_FORMAT = "apptemplate/1"
SHARE_FORMAT = "sharepkg/1"

# Presentational prop keys that survive template extraction.
_SKELETON_KEYS = frozenset({"title", "label", "derived", "icon", "variant", "placeholder"})


@dataclass
class HistoryNode:
    parent_seq: Optional[int]
    event_summary: str
    strategy: str
    annotations: list[str] = field(default_factory=list)


@dataclass
class StateHistory:
    app_id: str
    nodes: dict[int, HistoryNode] = field(default_factory=dict)
    forks: list[tuple[int, str]] = field(default_factory=list)

    def current_seq(self) -> Optional[int]:
        return max(self.nodes) if self.nodes else None


def record_transition(history: StateHistory, result: TransitionResult,
                      event_summary: str = "", child_app_id: str = "") -> StateHistory:
    """Append the outcome of apply_delta to the history tree."""
    nxt = result.next
    if isinstance(nxt, AppState):
        seq = nxt.state_seq
        if seq in history.nodes:
            raise SeqConflict(f"state_seq {seq} already recorded for {history.app_id}")
        parent = seq - 1 if seq > 0 else None
        if parent is not None and parent not in history.nodes:
            raise SeqConflict(f"parent seq {parent} missing for {history.app_id}")
        history.nodes[seq] = HistoryNode(parent, event_summary, result.strategy)
    elif isinstance(nxt, TextReply):
        cur = history.current_seq()
        if cur is not None:
            history.nodes[cur].annotations.append(f"text_reply: {event_summary or nxt.text}")
    elif isinstance(nxt, NewAppRequest):
        cur = history.current_seq()
        history.forks.append((cur if cur is not None else -1, child_app_id))
    else:
        raise SchemaViolation(f"unexpected transition result {nxt!r}")
    return history


# --- templates ----------------------------------------------------------

@dataclass(frozen=True)
class AppTemplate:
    template_id: str
    plan: GenerationPlan
    skeleton: ViewNode
    affordances: AffordanceSet

    @property
    def architecture(self) -> str:
        return self.plan.architecture


def template_to_doc(t: AppTemplate) -> dict:
    return {
        "format": TEMPLATE_FORMAT,
        "template_id": t.template_id,
        "plan": t.plan.to_doc(),
        "skeleton": codec.node_to_doc(t.skeleton),
        "affordances": codec.affordances_to_doc(t.affordances),
    }


def template_from_doc(doc: Mapping) -> AppTemplate:
    if doc.get("format") != TEMPLATE_FORMAT:
        raise DecodeError(f"unexpected format {doc.get('format')!r}")
    return AppTemplate(
        template_id=doc["template_id"],
        plan=GenerationPlan.from_doc(doc["plan"]),
        skeleton=codec.node_from_doc(doc["skeleton"]),
        affordances=codec.affordances_from_doc(doc["affordances"]),
    )


def extract_template(state: AppState) -> AppTemplate:
    """Keep the generative structure, strip everything user- or data-specific."""
    plan_doc = state.context.task_progress.get("origin_plan")
    if plan_doc is None:
        raise SchemaViolation("state carries no origin plan; cannot extract a template")
    plan = GenerationPlan.from_doc(plan_doc)
    data_values = set()
    for rec in state.context.retrieved:
        data_values.update(v for v in rec.payload.values() if isinstance(v, (int, float, str, bool)))

    def blank(node: ViewNode) -> ViewNode:
        props = {}
        for key, value in node.props.items():
            if key in _SKELETON_KEYS and value not in data_values:
                props[key] = value
        return replace(node, props=props, source_refs=(),
                       children=tuple(blank(c) for c in node.children))

    structured = tuple(
        replace(a, resolved_params=_blank_params(a.resolved_params, data_values))
        for a in state.affordances.structured
    )
    return AppTemplate(
        template_id=f"tpl-{state.app_id}-{state.state_seq}",
        plan=plan,
        skeleton=blank(state.view),
        affordances=AffordanceSet(structured, state.affordances.anticipatory, True),
    )


def _blank_params(params: Optional[Mapping], data_values: set) -> Optional[Mapping]:
    if params is None:
        return None
    return {k: v for k, v in params.items() if v not in data_values}


def scan_template(t: AppTemplate) -> list[str]:
    """Exhaustive purity scan: returns descriptions of any leaked payloads."""
    leaks: list[str] = []
    for node, _ in iter_nodes(t.skeleton):
        if node.source_refs:
            leaks.append(f"node {node.node_id}: source_refs present")
        for key, value in node.props.items():
            if key not in _SKELETON_KEYS:
                leaks.append(f"node {node.node_id}: data prop {key!r}")
    doc = json.dumps(template_to_doc(t))
    for marker in ("\"retrieved\"", "\"preferences\""):
        if marker in doc:
            leaks.append(f"document contains {marker}")
    return leaks


def instantiate_template(t: AppTemplate, utterance: str, env: MockEnvironment,
                         agent: ScriptedAgent, app_id: str = "app-from-template") -> AppState:
    """Run the generation pipeline with the template's plan against fresh data."""
    plan = replace(t.plan, utterance=utterance or t.plan.utterance)
    retrieved = tuple(tuple(env.execute_query(q)) for q in plan.queries)
    delta = agent.render(RenderRequest(None, plan, retrieved))
    delta = replace(delta, context_ops=replace(
        delta.context_ops,
        task_progress={**dict(delta.context_ops.task_progress), "origin_plan": plan.to_doc()},
    ))
    result = apply_delta(empty_state(app_id), delta)
    if not isinstance(result.next, AppState):
        raise SchemaViolation("template instantiation did not produce an app state")
    return result.next


# --- data-driven refresh --------------------------------------------------

def refresh_data(state: AppState, env: MockEnvironment) -> AppState:
    """Rewrite stale record-backed content in place; never advances state_seq.

    content_rev bumps even when nothing was stale, giving clients a monotone
    checked-at signal.
    """
    refs = [rec.ref for rec in state.context.retrieved]
    for node, _ in iter_nodes(state.view):
        refs.extend(node.source_refs)
    latest = env.current_versions(list(dict.fromkeys(refs)))
    old_payloads = {(r.ref.source, r.ref.record_id): r.payload for r in state.context.retrieved}

    def fresh_ref(ref):
        cur = latest[ref]
        return replace(ref, version=cur) if cur != ref.version else ref

    new_retrieved = []
    new_payloads = {}
    for rec in state.context.retrieved:
        ref = fresh_ref(rec.ref)
        if ref is not rec.ref:
            payload = env.payload_at(ref)
            keep = set(rec.payload)
            payload = {k: v for k, v in payload.items() if k in keep}
            rec = RetrievedRecord(ref, payload)
        new_retrieved.append(rec)
        new_payloads[(ref.source, ref.record_id)] = rec.payload

    def refresh_node(node: ViewNode) -> ViewNode:
        props = dict(node.props)
        refs_out = []
        for ref in node.source_refs:
            new = fresh_ref(ref)
            refs_out.append(new)
            if new is ref:
                continue
            old = old_payloads.get((ref.source, ref.record_id), {})
            fresh = new_payloads.get((ref.source, ref.record_id), {})
            for key, value in list(props.items()):
                for f, old_val in old.items():
                    if value == old_val and f in fresh:
                        props[key] = fresh[f]
        return replace(node, props=props, source_refs=tuple(refs_out),
                       children=tuple(refresh_node(c) for c in node.children))

    context = replace(state.context, retrieved=tuple(new_retrieved))
    return replace(state, view=refresh_node(state.view), context=context,
                   content_rev=state.content_rev + 1)


# --- share packages -------------------------------------------------------

@dataclass(frozen=True)
class SharePackage:
    kind: str  # "state" | "template"
    body: bytes
    data_policy: Optional[str] = None  # state kind only: static_snapshot | live_reference


def export_share(obj: Union[AppState, AppTemplate], policy: Optional[str] = None) -> SharePackage:
    if isinstance(obj, AppState):
        if policy not in ("static_snapshot", "live_reference"):
            raise SchemaViolation(f"state share requires a data policy, got {policy!r}")
        return SharePackage("state", codec.serialize_state(obj), policy)
    if isinstance(obj, AppTemplate):
        return SharePackage("template", codec.canonical_bytes(template_to_doc(obj)), None)
    raise SchemaViolation(f"cannot share {type(obj).__name__}")


def package_to_bytes(pkg: SharePackage) -> bytes:
    return codec.canonical_bytes({
        "format": SHARE_FORMAT,
        "kind": pkg.kind,
        "data_policy": pkg.data_policy,
        "body": codec.decode_document(pkg.body),
    })


def package_from_bytes(data: bytes) -> SharePackage:
    doc = codec.decode_document(data)
    if not isinstance(doc, Mapping) or doc.get("format") != SHARE_FORMAT:
        raise DecodeError("not a share package")
    return SharePackage(doc["kind"], codec.canonical_bytes(doc["body"]), doc.get("data_policy"))


def import_share(pkg: SharePackage, env: MockEnvironment,
                 agent: Optional[ScriptedAgent] = None, app_id: str = "") -> AppState:
    if pkg.kind == "state":
        state = codec.deserialize_state(pkg.body)
        if app_id:
            state = replace(state, app_id=app_id)
        if pkg.data_policy == "live_reference":
            return refresh_data(state, env)
        return state
    if pkg.kind == "template":
        if agent is None:
            raise SchemaViolation("importing a template requires an agent backend")
        template = template_from_doc(codec.decode_document(pkg.body))
        return instantiate_template(template, "", env, agent,
                                    app_id=app_id or f"app-{template.template_id}")
    raise DecodeError(f"unknown package kind {pkg.kind!r}")


# --- persistence ----------------------------------------------------------

class AppStore:
    """File-per-snapshot persistence under a per-app directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _app_dir(self, app_id: str) -> Path:
        d = self.root / app_id
        d.mkdir(parents=True, exist_ok=True)
        return d

    def save_state(self, state: AppState) -> Path:
        path = self._app_dir(state.app_id) / f"state-{state.state_seq}.snap"
        path.write_bytes(codec.serialize_state(state))
        return path

    def save_history(self, history: StateHistory) -> Path:
        doc = {
            "app_id": history.app_id,
            "nodes": {
                str(seq): {
                    "parent_seq": n.parent_seq,
                    "event_summary": n.event_summary,
                    "strategy": n.strategy,
                    "annotations": n.annotations,
                }
                for seq, n in history.nodes.items()
            },
            "forks": [list(f) for f in history.forks],
        }
        path = self._app_dir(history.app_id) / "history.index"
        path.write_bytes(codec.canonical_bytes(doc))
        return path

    def load_history(self, app_id: str) -> StateHistory:
        path = self.root / app_id / "history.index"
        doc = codec.decode_document(path.read_bytes())
        return StateHistory(
            app_id=doc["app_id"],
            nodes={
                int(seq): HistoryNode(n["parent_seq"], n["event_summary"],
                                      n["strategy"], list(n.get("annotations", [])))
                for seq, n in doc["nodes"].items()
            },
            forks=[(f[0], f[1]) for f in doc.get("forks", [])],
        )

    def load_state(self, app_id: str, seq: int) -> AppState:
        path = self.root / app_id / f"state-{seq}.snap"
        return codec.deserialize_state(path.read_bytes())

    def latest_state(self, app_id: str) -> AppState:
        history = self.load_history(app_id)
        cur = history.current_seq()
        if cur is None:
            raise SeqConflict(f"app {app_id} has no recorded states")
        return self.load_state(app_id, cur)

    def list_apps(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "history.index").exists())

    def snapshots(self, app_id: str) -> list[Path]:
        return sorted((self.root / app_id).glob("state-*.snap"),
                      key=lambda p: int(p.stem.split("-")[1]))
