"""Intent analysis: modality assessment, category classification, event interpretation.

The classifier is a transparent, ordered rule table loaded from a data file
(see docs/formats.md), not a model. First match wins; unknown utterances fall
back to plain text with confidence 0.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import StaleEvent, UnknownAffordance
from .environment import QuerySpec
from .state import AppState, Event, iter_nodes

INTENT_CATEGORIES = ("selection", "exploration", "execution", "monitoring", "creation")
BOUNDARY_FLAGS = ("socio_emotional", "pre_structural")
STRATEGY_HINTS = ("converge", "diverge", "replace")

# Structured verbs that operate on data already visible in the view;
# trigger_action starts a new agent action instead.
_VISIBLE_DATA_VERBS = frozenset({"filter", "sort", "select", "toggle_view", "expand"})


@dataclass(frozen=True)
class IntentAssessment:
    modality: str  # "structured_app" | "plain_text"
    category: Optional[str] = None
    confidence: float = 0.0
    boundary_flag: Optional[str] = None
    data_requirements: tuple[QuerySpec, ...] = ()

    def to_doc(self) -> dict:
        return {
            "modality": self.modality,
            "category": self.category,
            "confidence": self.confidence,
            "boundary_flag": self.boundary_flag,
            "data_requirements": [q.to_doc() for q in self.data_requirements],
        }

    @staticmethod
    def from_doc(doc: Mapping) -> "IntentAssessment":
        return IntentAssessment(
            modality=doc["modality"],
            category=doc.get("category"),
            confidence=float(doc.get("confidence", 0.0)),
            boundary_flag=doc.get("boundary_flag"),
            data_requirements=tuple(QuerySpec.from_doc(q) for q in doc.get("data_requirements", [])),
        )


@dataclass(frozen=True)
class InterpretedEvent:
    source: Event
    resolved_intent: str
    references_visible_data: bool
    suggested_strategy_hint: str


@dataclass
class _Rule:
    pattern: re.Pattern
    payload: dict = field(default_factory=dict)


def _compile(entries: list[Mapping], keys: tuple[str, ...]) -> list[_Rule]:
    return [
        _Rule(re.compile(e["pattern"], re.IGNORECASE), {k: e.get(k) for k in keys})
        for e in entries
    ]


class IntentAnalyzer:
    """Ordered rule-table classifier; pure functions of (rules, inputs)."""

    def __init__(self, rules_path: Optional[Path] = None):
        if rules_path is None:
            text = resources.files("agentapps").joinpath("data/default_rules.json").read_text("utf-8")
            doc = json.loads(text)
        else:
            doc = json.loads(Path(rules_path).read_text(encoding="utf-8"))
        self._boundary = _compile(doc.get("boundary", []), ("boundary", "confidence"))
        self._plain = _compile(doc.get("plain_text", []), ("confidence",))
        self._categories = _compile(doc.get("categories", []),
                                    ("category", "confidence", "queries"))
        self._hints = _compile(doc.get("hints", []), ("hint",))
        self._default_hint = doc.get("default_hint", "diverge")

    def assess_cold_start(self, utterance: str) -> IntentAssessment:
        if not utterance or not utterance.strip():
            raise ValueError("empty utterance")
        text = utterance.strip()
        for rule in self._boundary:
            if rule.pattern.search(text):
                return IntentAssessment(
                    modality="plain_text",
                    boundary_flag=rule.payload["boundary"],
                    confidence=float(rule.payload.get("confidence") or 0.5),
                )
        for rule in self._plain:
            if rule.pattern.search(text):
                return IntentAssessment(modality="plain_text",
                                        confidence=float(rule.payload.get("confidence") or 0.5))
        for rule in self._categories:
            if rule.pattern.search(text):
                queries = tuple(QuerySpec.from_doc(q) for q in (rule.payload.get("queries") or []))
                return IntentAssessment(
                    modality="structured_app",
                    category=rule.payload["category"],
                    confidence=float(rule.payload.get("confidence") or 0.5),
                    data_requirements=queries,
                )
        return IntentAssessment(modality="plain_text", confidence=0.0)

    def interpret_event(self, event: Event, state: AppState) -> InterpretedEvent:
        if event.basis_state_seq != state.state_seq:
            raise StaleEvent(
                f"event basis {event.basis_state_seq} != current {state.state_seq}")
        if event.channel == "structured":
            return self._interpret_structured(event, state)
        return self._interpret_nl(event, state)

    def _interpret_structured(self, event: Event, state: AppState) -> InterpretedEvent:
        aff_id = event.payload.get("affordance_id")
        aff = next((a for a in state.affordances.structured if a.affordance_id == aff_id), None)
        if aff is None:
            raise UnknownAffordance(str(aff_id))
        verb = event.payload.get("verb", aff.verb)
        params = dict(aff.resolved_params or {})
        params.update(event.payload.get("params", {}))
        param_str = " ".join(f"{k}={params[k]}" for k in sorted(params))
        references = verb in _VISIBLE_DATA_VERBS
        # Structured events never signal replacement: a structured operation is
        # always scoped to the current application.
        hint = "converge" if references else "diverge"
        return InterpretedEvent(
            source=event,
            resolved_intent=f"{verb} {param_str}".strip(),
            references_visible_data=references,
            suggested_strategy_hint=hint,
        )

    def _interpret_nl(self, event: Event, state: AppState) -> InterpretedEvent:
        text = str(event.payload.get("text", "")).strip()
        hint = self._default_hint
        for rule in self._hints:
            if rule.pattern.search(text):
                hint = rule.payload["hint"]
                break
        return InterpretedEvent(
            source=event,
            resolved_intent=text.lower(),
            references_visible_data=self._mentions_visible(text, state),
            suggested_strategy_hint=hint,
        )

    @staticmethod
    def _mentions_visible(text: str, state: AppState) -> bool:
        lowered = text.lower()
        for node, _ in iter_nodes(state.view):
            for value in node.props.values():
                if isinstance(value, str) and len(value) >= 3 and value.lower() in lowered:
                    return True
        return False
