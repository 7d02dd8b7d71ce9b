"""Post-hoc quality gate: runnability, content fidelity, information-architecture lint.

Every candidate state passes the gate before emission. Thresholds are
calibration constants, overridable via QaConfig.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .environment import MockEnvironment
from .state import AppState, ViewNode, iter_nodes, node_ids, tree_depth

FINDING_CLASSES = ("runnability", "fidelity_accuracy", "fidelity_richness", "architecture")


@dataclass(frozen=True)
class QaConfig:
    max_flat_children: int = 25
    max_tree_depth: int = 8
    min_fields_per_record: int = 2


@dataclass(frozen=True)
class Finding:
    cls: str
    severity: str  # "error" | "warn"
    locus: str
    message: str


@dataclass(frozen=True)
class QaReport:
    verdict: str  # "pass" | "fail"
    findings: tuple[Finding, ...] = ()


def check_runnability(state: AppState, env: MockEnvironment) -> list[Finding]:
    """Interactive elements must be operable and referenced resources reachable."""
    out: list[Finding] = []
    ids = node_ids(state.view)
    for aff in state.affordances.structured:
        if aff.anchor_node not in ids:
            out.append(Finding("runnability", "error", aff.affordance_id,
                               f"affordance anchored to missing node {aff.anchor_node!r}"))
            continue
        params = aff.resolved_params or {}
        if "field" in params:
            anchor = _find(state.view, aff.anchor_node)
            visible = _fields_under(anchor, state)
            if params["field"] not in visible:
                out.append(Finding("runnability", "error", aff.affordance_id,
                                   f"param field {params['field']!r} absent from anchored content"))
    for node, _depth in iter_nodes(state.view):
        for ref in node.source_refs:
            if not env.has_record(ref):
                out.append(Finding("runnability", "error", node.node_id,
                                   f"source_ref {ref.source}/{ref.record_id}@{ref.version} unresolvable in env"))
    return out


def check_fidelity(state: AppState, config: QaConfig = QaConfig()) -> list[Finding]:
    """Accuracy: numeric props must match a cited record field exactly.
    Richness: warn when a data-bearing group renders too few fields per record."""
    out: list[Finding] = []
    payload_by_ref = {
        (r.ref.source, r.ref.record_id, r.ref.version): r.payload
        for r in state.context.retrieved
    }
    for node, _depth in iter_nodes(state.view):
        if node.props.get("derived") is True:
            continue
        cited_values = set()
        for ref in node.source_refs:
            payload = payload_by_ref.get((ref.source, ref.record_id, ref.version), {})
            cited_values.update(v for v in payload.values() if _is_scalar(v))
        for key, value in node.props.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                continue
            if value not in cited_values:
                out.append(Finding("fidelity_accuracy", "error", node.node_id,
                                   f"prop {key}={value!r} not grounded in any cited record"))
    for node, _depth in iter_nodes(state.view):
        data_children = [c for c in node.children if c.source_refs]
        if len(data_children) < 2:
            continue
        richest = max(len(set(c.props) - {"derived"}) for c in data_children)
        if richest < config.min_fields_per_record:
            out.append(Finding("fidelity_richness", "warn", node.node_id,
                               f"data group renders only {richest} field(s) per record"))
    return out


def lint_architecture(state: AppState, config: QaConfig = QaConfig()) -> list[Finding]:
    out: list[Finding] = []
    for node, _depth in iter_nodes(state.view):
        if node.kind in ("list", "table") and len(node.children) > config.max_flat_children:
            if not any(c.kind in ("panel", "tab_group", "list") for c in node.children):
                out.append(Finding("architecture", "warn", node.node_id,
                                   f"flat {node.kind} with {len(node.children)} ungrouped children"))
        if node.kind == "tab_group" and sum(1 for c in node.children if c.kind == "tab") == 1:
            out.append(Finding("architecture", "warn", node.node_id, "tab_group with a single tab"))
    depth = tree_depth(state.view)
    if depth > config.max_tree_depth:
        out.append(Finding("architecture", "error", state.view.node_id,
                           f"tree depth {depth} exceeds {config.max_tree_depth}"))
    return out


def gate(state: AppState, env: MockEnvironment, config: QaConfig = QaConfig()) -> QaReport:
    """Union of the three checks; fail iff any error-severity finding."""
    findings = tuple(
        check_runnability(state, env)
        + check_fidelity(state, config)
        + lint_architecture(state, config)
    )
    verdict = "fail" if any(f.severity == "error" for f in findings) else "pass"
    return QaReport(verdict, findings)


def _is_scalar(value) -> bool:
    return isinstance(value, (int, float, str, bool))


def _find(root: ViewNode, node_id: str) -> ViewNode:
    for n, _ in iter_nodes(root):
        if n.node_id == node_id:
            return n
    raise KeyError(node_id)


def _fields_under(node: ViewNode, state: AppState) -> set[str]:
    payload_by_ref = {
        (r.ref.source, r.ref.record_id, r.ref.version): r.payload
        for r in state.context.retrieved
    }
    fields: set[str] = set()
    for n, _ in iter_nodes(node):
        fields |= set(n.props)
        for ref in n.source_refs:
            fields |= set(payload_by_ref.get((ref.source, ref.record_id, ref.version), {}))
    return fields
