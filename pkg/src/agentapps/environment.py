"""The environment participant: versioned record registry with scripted writes.

Backed by fixture files so retrieval is deterministic. A (source, record_id,
version) payload is immutable; writes create new versions.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import BadPredicate, UnknownAction, UnknownSource
from .state import EnvironmentRecordRef

_PREDICATE_OPS = {
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
    "contains": lambda a, b: b in a,
    "in": lambda a, b: a in b,
}


@dataclass(frozen=True)
class QuerySpec:
    source: str
    predicate: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    projection: tuple[str, ...] = ()
    limit: Optional[int] = None

    @staticmethod
    def from_doc(doc: Mapping) -> "QuerySpec":
        return QuerySpec(
            source=doc["source"],
            predicate={k: dict(v) for k, v in doc.get("predicate", {}).items()},
            projection=tuple(doc.get("projection", [])),
            limit=doc.get("limit"),
        )

    def to_doc(self) -> dict:
        return {
            "source": self.source,
            "predicate": {k: dict(v) for k, v in self.predicate.items()},
            "projection": list(self.projection),
            "limit": self.limit,
        }


@dataclass(frozen=True)
class WriteResult:
    status: str  # "ok" | "rejected"
    detail: str
    resulting_refs: tuple[EnvironmentRecordRef, ...] = ()


class MockEnvironment:
    """Fixture-backed registry. Readers-writer contract: queries are pure
    lookups between writes; writes take the lock exclusively."""

    def __init__(self):
        # source -> record_id -> list of payload dicts (index i = version i+1)
        self._records: dict[str, dict[str, list[dict]]] = {}
        # action name -> list of scripted effects
        self._actions: dict[str, list[dict]] = {}
        self._lock = threading.RLock()

    # --- fixture loading ----------------------------------------------

    def load_fixture(self, path: Path) -> None:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        source = doc["source"]
        with self._lock:
            recs = self._records.setdefault(source, {})
            for rec in doc.get("records", []):
                recs[rec["record_id"]] = [dict(rec["fields"])]
            for name, effects in doc.get("actions", {}).items():
                self._actions[name] = [dict(e, source=e.get("source", source)) for e in effects]

    def load_dir(self, path: Path) -> None:
        for f in sorted(Path(path).glob("*.json")):
            self.load_fixture(f)

    def register_records(self, source: str, records: Mapping[str, Mapping[str, Any]]) -> None:
        with self._lock:
            recs = self._records.setdefault(source, {})
            for rid, fields in records.items():
                recs[rid] = [dict(fields)]

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(sorted(self._records))

    # --- operations -----------------------------------------------------

    def execute_query(self, q: QuerySpec) -> list[tuple[EnvironmentRecordRef, dict]]:
        with self._lock:
            if q.source not in self._records:
                raise UnknownSource(q.source)
            out = []
            for rid in sorted(self._records[q.source]):
                versions = self._records[q.source][rid]
                payload = versions[-1]
                if not self._matches(payload, q.predicate):
                    continue
                if q.projection:
                    projected = {f: payload[f] for f in q.projection if f in payload}
                else:
                    projected = dict(payload)
                out.append((EnvironmentRecordRef(q.source, rid, len(versions)), projected))
                if q.limit is not None and len(out) >= q.limit:
                    break
            return out

    def execute_write(self, action: str, params: Mapping[str, Any]) -> WriteResult:
        with self._lock:
            if action not in self._actions:
                raise UnknownAction(action)
            refs = []
            for effect in self._actions[action]:
                source = effect["source"]
                recs = self._records.setdefault(source, {})
                if "set" in effect:
                    rid = self._subst(effect["record_id"], params)
                    if rid not in recs:
                        return WriteResult("rejected", f"no record {rid!r} in {source!r}")
                    payload = dict(recs[rid][-1])
                    for fld, val in effect["set"].items():
                        payload[fld] = self._subst(val, params)
                    recs[rid].append(payload)
                    refs.append(EnvironmentRecordRef(source, rid, len(recs[rid])))
                elif "create" in effect:
                    spec = effect["create"]
                    rid = self._subst(spec["record_id"], params)
                    fields = {k: self._subst(v, params) for k, v in spec["fields"].items()}
                    recs.setdefault(rid, []).append(fields)
                    refs.append(EnvironmentRecordRef(source, rid, len(recs[rid])))
                else:
                    raise UnknownAction(f"{action}: effect has neither 'set' nor 'create'")
            return WriteResult("ok", f"applied {action}", tuple(refs))

    def current_versions(self, refs: list[EnvironmentRecordRef]) -> dict[EnvironmentRecordRef, int]:
        with self._lock:
            out = {}
            for ref in refs:
                if ref.source not in self._records or ref.record_id not in self._records[ref.source]:
                    raise UnknownSource(f"{ref.source}/{ref.record_id}")
                out[ref] = len(self._records[ref.source][ref.record_id])
            return out

    def payload_at(self, ref: EnvironmentRecordRef) -> dict:
        with self._lock:
            try:
                versions = self._records[ref.source][ref.record_id]
            except KeyError:
                raise UnknownSource(f"{ref.source}/{ref.record_id}") from None
            if not 1 <= ref.version <= len(versions):
                raise UnknownSource(f"{ref.source}/{ref.record_id}@{ref.version}")
            return dict(versions[ref.version - 1])

    def has_record(self, ref: EnvironmentRecordRef) -> bool:
        with self._lock:
            versions = self._records.get(ref.source, {}).get(ref.record_id)
            return versions is not None and 1 <= ref.version <= len(versions)

    # --- helpers --------------------------------------------------------

    @staticmethod
    def _subst(value: Any, params: Mapping[str, Any]) -> Any:
        if isinstance(value, Mapping) and "$param" in value:
            return params.get(value["$param"])
        return value

    @staticmethod
    def _matches(payload: Mapping, predicate: Mapping[str, Mapping[str, Any]]) -> bool:
        for fld, cond in predicate.items():
            if not isinstance(cond, Mapping) or "op" not in cond or "value" not in cond:
                raise BadPredicate(f"field {fld!r}: expected {{op, value}}")
            op = _PREDICATE_OPS.get(cond["op"])
            if op is None:
                raise BadPredicate(f"unknown op {cond['op']!r}")
            if fld not in payload:
                return False
            try:
                if not op(payload[fld], cond["value"]):
                    return False
            except TypeError as exc:
                raise BadPredicate(f"field {fld!r}: {exc}") from exc
        return True
