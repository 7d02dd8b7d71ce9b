"""Core application state: the (view, affordances, context) triple and its transition operator.

Every other module consumes these types. States and deltas are immutable
values; apply_delta is a pure function of (state, delta).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping, Optional, Union

from .errors import DanglingNodeRef, SchemaViolation, StrategyViolation

NODE_KINDS = frozenset({
    "text", "heading", "badge", "card", "table", "tab_group", "tab",
    "panel", "list", "map_view", "stepper", "checklist", "image_ref", "metric",
})

AFFORDANCE_VERBS = frozenset({
    "filter", "sort", "select", "toggle_view", "expand", "trigger_action",
})

STRATEGIES = ("element_update", "structural_extension", "app_replacement", "text_reply")

# Strategies that produce a successor AppState.
STATE_STRATEGIES = frozenset({"element_update", "structural_extension"})

# Kinds an element_update may not insert/remove near the top of the tree.
_LAYOUT_KINDS = frozenset({"tab", "tab_group", "panel"})
_LAYOUT_DEPTH_LIMIT = 2

# History entries kept verbatim before older ones fold into compressed_summary.
HISTORY_KEEP = 6
HISTORY_COMPRESS_THRESHOLD = 12


@dataclass(frozen=True)
class EnvironmentRecordRef:
    source: str
    record_id: str
    version: int


@dataclass(frozen=True)
class ViewNode:
    node_id: str
    kind: str
    props: Mapping[str, Any] = field(default_factory=dict)
    children: tuple["ViewNode", ...] = ()
    source_refs: tuple[EnvironmentRecordRef, ...] = ()

    def local_content(self) -> tuple:
        """Identity-relevant content excluding children (used by diff_view)."""
        return (self.kind, tuple(sorted(self.props.items(), key=lambda kv: kv[0])),
                self.source_refs)


@dataclass(frozen=True)
class StructuredAffordance:
    affordance_id: str
    anchor_node: str
    verb: str
    param_schema: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    resolved_params: Optional[Mapping[str, Any]] = None


@dataclass(frozen=True)
class AnticipatoryAffordance:
    affordance_id: str
    label: str
    intent_text: str


@dataclass(frozen=True)
class AffordanceSet:
    structured: tuple[StructuredAffordance, ...] = ()
    anticipatory: tuple[AnticipatoryAffordance, ...] = ()
    nl_enabled: bool = True


@dataclass(frozen=True)
class RetrievedRecord:
    ref: EnvironmentRecordRef
    payload: Mapping[str, Any]


@dataclass(frozen=True)
class HistoryEntry:
    event: str
    strategy: str
    summary: str


@dataclass(frozen=True)
class AgentContext:
    retrieved: tuple[RetrievedRecord, ...] = ()
    preferences: Mapping[str, Any] = field(default_factory=dict)
    task_progress: Mapping[str, Any] = field(default_factory=dict)
    history: tuple[HistoryEntry, ...] = ()
    compressed_summary: Optional[str] = None


@dataclass(frozen=True)
class AppState:
    app_id: str
    state_seq: int
    view: ViewNode
    affordances: AffordanceSet
    context: AgentContext
    content_rev: int = 0
    created_at: int = 0


@dataclass(frozen=True)
class Event:
    event_id: str
    session_id: str
    channel: str  # "structured" | "nl"
    payload: Mapping[str, Any]
    basis_state_seq: int


# --- node ops -----------------------------------------------------------

@dataclass(frozen=True)
class SetProps:
    node_id: str
    props: Mapping[str, Any]


@dataclass(frozen=True)
class InsertChild:
    parent_id: str
    index: int
    node: ViewNode


@dataclass(frozen=True)
class RemoveNode:
    node_id: str


NodeOp = Union[SetProps, InsertChild, RemoveNode]


@dataclass(frozen=True)
class ContextUpdate:
    retrieved_add: tuple[RetrievedRecord, ...] = ()
    preferences: Mapping[str, Any] = field(default_factory=dict)
    task_progress: Mapping[str, Any] = field(default_factory=dict)
    history_append: tuple[HistoryEntry, ...] = ()


@dataclass(frozen=True)
class Delta:
    strategy: str
    node_ops: tuple[NodeOp, ...] = ()
    # None means "keep the current list" (identity delta); otherwise wholesale replacement.
    structured: Optional[tuple[StructuredAffordance, ...]] = None
    anticipatory: Optional[tuple[AnticipatoryAffordance, ...]] = None
    context_ops: Optional[ContextUpdate] = None
    reply_text: Optional[str] = None
    replacement_seed: Optional[Mapping[str, Any]] = None


@dataclass(frozen=True)
class TextReply:
    text: str


@dataclass(frozen=True)
class NewAppRequest:
    seed: Mapping[str, Any]


@dataclass(frozen=True)
class TransitionResult:
    next: Union[AppState, TextReply, NewAppRequest]
    strategy: str


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str


# --- tree helpers -------------------------------------------------------

def iter_nodes(root: ViewNode, depth: int = 0) -> Iterator[tuple[ViewNode, int]]:
    yield root, depth
    for child in root.children:
        yield from iter_nodes(child, depth + 1)


def node_ids(root: ViewNode) -> set[str]:
    return {n.node_id for n, _ in iter_nodes(root)}


def find_node(root: ViewNode, node_id: str) -> Optional[ViewNode]:
    for n, _ in iter_nodes(root):
        if n.node_id == node_id:
            return n
    return None


def tree_depth(root: ViewNode) -> int:
    return max(d for _, d in iter_nodes(root))


def _apply_op(root: ViewNode, op: NodeOp) -> ViewNode:
    if isinstance(op, SetProps):
        found = [False]

        def set_props(n: ViewNode) -> ViewNode:
            if n.node_id == op.node_id:
                found[0] = True
                merged = dict(n.props)
                merged.update(op.props)
                return replace(n, props=merged)
            return replace(n, children=tuple(set_props(c) for c in n.children))

        out = set_props(root)
        if not found[0]:
            raise DanglingNodeRef(f"set_props targets missing node {op.node_id!r}")
        return out

    if isinstance(op, InsertChild):
        found = [False]

        def insert(n: ViewNode) -> ViewNode:
            if n.node_id == op.parent_id:
                found[0] = True
                kids = list(n.children)
                idx = len(kids) if op.index < 0 else min(op.index, len(kids))
                kids.insert(idx, op.node)
                return replace(n, children=tuple(kids))
            return replace(n, children=tuple(insert(c) for c in n.children))

        out = insert(root)
        if not found[0]:
            raise DanglingNodeRef(f"insert_child targets missing parent {op.parent_id!r}")
        return out

    if isinstance(op, RemoveNode):
        if root.node_id == op.node_id:
            raise StrategyViolation("cannot remove the view root")
        found = [False]

        def remove(n: ViewNode) -> ViewNode:
            kids = []
            for c in n.children:
                if c.node_id == op.node_id:
                    found[0] = True
                    continue
                kids.append(remove(c))
            return replace(n, children=tuple(kids))

        out = remove(root)
        if not found[0]:
            raise DanglingNodeRef(f"remove_node targets missing node {op.node_id!r}")
        return out

    raise SchemaViolation(f"unknown node op {op!r}")


def _node_depth(root: ViewNode, node_id: str) -> Optional[int]:
    for n, d in iter_nodes(root):
        if n.node_id == node_id:
            return d
    return None


def _check_element_update_op(view: ViewNode, op: NodeOp) -> None:
    """element_update may not insert/remove tab/tab_group/panel nodes at depth <= 2."""
    if isinstance(op, InsertChild):
        base = _node_depth(view, op.parent_id)
        if base is None:
            raise DanglingNodeRef(f"insert_child targets missing parent {op.parent_id!r}")
        for n, rel in iter_nodes(op.node):
            if n.kind in _LAYOUT_KINDS and base + 1 + rel <= _LAYOUT_DEPTH_LIMIT:
                raise StrategyViolation(
                    f"element_update inserts {n.kind} node {n.node_id!r} at depth {base + 1 + rel}")
    elif isinstance(op, RemoveNode):
        base = _node_depth(view, op.node_id)
        if base is None:
            raise DanglingNodeRef(f"remove_node targets missing node {op.node_id!r}")
        target = find_node(view, op.node_id)
        assert target is not None
        for n, rel in iter_nodes(target):
            if n.kind in _LAYOUT_KINDS and base + rel <= _LAYOUT_DEPTH_LIMIT:
                raise StrategyViolation(
                    f"element_update removes {n.kind} node {n.node_id!r} at depth {base + rel}")


def _merge_context(ctx: AgentContext, update: Optional[ContextUpdate]) -> AgentContext:
    if update is None:
        return ctx
    by_key = {(r.ref.source, r.ref.record_id, r.ref.version): r for r in ctx.retrieved}
    for rec in update.retrieved_add:
        key = (rec.ref.source, rec.ref.record_id, rec.ref.version)
        if key in by_key:
            # Same immutable record version, possibly a different projection:
            # union the fields rather than dropping either view of it.
            merged = {**dict(by_key[key].payload), **dict(rec.payload)}
            by_key[key] = RetrievedRecord(rec.ref, merged)
        else:
            by_key[key] = rec
    prefs = dict(ctx.preferences)
    prefs.update(update.preferences)
    progress = dict(ctx.task_progress)
    progress.update(update.task_progress)
    history = ctx.history + tuple(update.history_append)
    summary = ctx.compressed_summary
    if len(history) > HISTORY_COMPRESS_THRESHOLD:
        folded, history = history[:-HISTORY_KEEP], history[-HISTORY_KEEP:]
        lines = [f"{h.strategy}: {h.summary}" for h in folded]
        summary = "\n".join(([summary] if summary else []) + lines)
    return AgentContext(
        retrieved=tuple(by_key.values()),
        preferences=prefs,
        task_progress=progress,
        history=history,
        compressed_summary=summary,
    )


# --- operations ---------------------------------------------------------

def apply_delta(state: AppState, delta: Delta) -> TransitionResult:
    """The transition operator: state ⊕ delta.

    element_update / structural_extension produce the successor AppState;
    text_reply leaves the state untouched and carries the reply; app_replacement
    hands back the seed for a fresh application.
    """
    if delta.strategy not in STRATEGIES:
        raise SchemaViolation(f"unknown strategy {delta.strategy!r}")

    if delta.strategy == "text_reply":
        if delta.node_ops or delta.structured is not None or delta.anticipatory is not None:
            raise StrategyViolation("text_reply delta must carry no node or affordance ops")
        if delta.reply_text is None:
            raise SchemaViolation("text_reply delta missing reply_text")
        return TransitionResult(TextReply(delta.reply_text), "text_reply")

    if delta.strategy == "app_replacement":
        if delta.replacement_seed is None:
            raise SchemaViolation("app_replacement delta missing replacement_seed")
        return TransitionResult(NewAppRequest(delta.replacement_seed), "app_replacement")

    view = state.view
    for op in delta.node_ops:
        if delta.strategy == "element_update":
            _check_element_update_op(view, op)
        if isinstance(op, InsertChild):
            clash = node_ids(view) & node_ids(op.node)
            if clash:
                raise SchemaViolation(f"insert_child duplicates node ids {sorted(clash)}")
        view = _apply_op(view, op)

    affordances = AffordanceSet(
        structured=state.affordances.structured if delta.structured is None else delta.structured,
        anticipatory=state.affordances.anticipatory if delta.anticipatory is None else delta.anticipatory,
        nl_enabled=True,
    )
    context = _merge_context(state.context, delta.context_ops)
    nxt = AppState(
        app_id=state.app_id,
        state_seq=state.state_seq + 1,
        view=view,
        affordances=affordances,
        context=context,
        content_rev=0,
        created_at=state.state_seq + 1,
    )
    violations = validate_state(nxt)
    if violations:
        raise SchemaViolation("; ".join(f"{v.code}({v.subject})" for v in violations))
    return TransitionResult(nxt, delta.strategy)


def validate_state(state: AppState) -> list[Violation]:
    """Check the structural invariants; violations are data, not failures."""
    out: list[Violation] = []
    seen: set[str] = set()
    for node, _depth in iter_nodes(state.view):
        if node.node_id in seen:
            out.append(Violation("DuplicateNodeId", node.node_id, "node_id appears twice in the tree"))
        seen.add(node.node_id)
        if node.kind not in NODE_KINDS:
            out.append(Violation("UnknownNodeKind", node.node_id, f"kind {node.kind!r}"))
        for child in node.children:
            if child.kind == "tab" and node.kind != "tab_group":
                out.append(Violation("TabOutsideTabGroup", child.node_id,
                                     f"tab under {node.kind} node {node.node_id!r}"))
    if not state.affordances.nl_enabled:
        out.append(Violation("NLChannelDisabled", state.app_id, "nl_enabled must always be true"))
    ids = seen
    aff_ids: set[str] = set()
    for aff in state.affordances.structured:
        if aff.affordance_id in aff_ids:
            out.append(Violation("DuplicateAffordanceId", aff.affordance_id, "structured id reused"))
        aff_ids.add(aff.affordance_id)
        if aff.anchor_node not in ids:
            out.append(Violation("DanglingAffordanceAnchor", aff.affordance_id,
                                 f"anchor {aff.anchor_node!r} not in view"))
        if aff.verb not in AFFORDANCE_VERBS:
            out.append(Violation("UnknownVerb", aff.affordance_id, f"verb {aff.verb!r}"))
        if aff.resolved_params is not None:
            extra = set(aff.resolved_params) - set(aff.param_schema)
            if extra:
                out.append(Violation("ResolvedParamsNotInSchema", aff.affordance_id,
                                     f"params {sorted(extra)} missing from schema"))
    for ant in state.affordances.anticipatory:
        if ant.affordance_id in aff_ids:
            out.append(Violation("DuplicateAffordanceId", ant.affordance_id, "anticipatory id reused"))
        aff_ids.add(ant.affordance_id)
    resolvable = {(r.ref.source, r.ref.record_id, r.ref.version) for r in state.context.retrieved}
    for node, _depth in iter_nodes(state.view):
        for ref in node.source_refs:
            if (ref.source, ref.record_id, ref.version) not in resolvable:
                out.append(Violation("UnresolvableSourceRef", node.node_id,
                                     f"{ref.source}/{ref.record_id}@{ref.version} not in context.retrieved"))
    if state.content_rev < 0:
        out.append(Violation("NegativeContentRev", state.app_id, str(state.content_rev)))
    return out


def diff_view(old: ViewNode, new: ViewNode) -> dict[str, set[str]]:
    """Partition old∪new node ids into preserved / added / removed / mutated.

    Mutation is judged on local content only (kind, props, source_refs);
    reordering or gaining children does not mutate the parent.
    """
    old_nodes = {n.node_id: n for n, _ in iter_nodes(old)}
    new_nodes = {n.node_id: n for n, _ in iter_nodes(new)}
    preserved, mutated = set(), set()
    for nid in old_nodes.keys() & new_nodes.keys():
        if old_nodes[nid].local_content() == new_nodes[nid].local_content():
            preserved.add(nid)
        else:
            mutated.add(nid)
    return {
        "preserved_ids": preserved,
        "added_ids": set(new_nodes) - set(old_nodes),
        "removed_ids": set(old_nodes) - set(new_nodes),
        "mutated_ids": mutated,
    }


def empty_state(app_id: str) -> AppState:
    """Internal pre-state for cold start; apply_delta over it yields s0 (seq 0)."""
    return AppState(
        app_id=app_id,
        state_seq=-1,
        view=ViewNode(node_id="root", kind="panel"),
        affordances=AffordanceSet(),
        context=AgentContext(),
        created_at=-1,
    )
