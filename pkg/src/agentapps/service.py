"""Session service: hosts the interaction cycle and the wire protocol.

Orchestrates intent analysis -> environment -> agent -> transition -> QA gate
-> persistence. Per-session processing is strictly serial; distinct sessions
run in parallel; all emitted values are immutable.
"""

from __future__ import annotations

import queue
import socketserver
import threading
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional

from . import codec, protocol
from .agent import GenerationPlan, RenderRequest, ScriptedAgent, make_plan
from .environment import MockEnvironment
from .errors import (
    EngineError,
    NoApp,
    PipelineFault,
    SchemaViolation,
    ScriptMiss,
    StaleEvent,
    UnknownAffordance,
)
from .intent import IntentAnalyzer
from .qa import QaConfig, gate
from .state import (
    AppState,
    Delta,
    Event,
    NewAppRequest,
    TextReply,
    apply_delta,
    empty_state,
)
from .store import (
    AppStore,
    HistoryNode,
    SharePackage,
    StateHistory,
    export_share,
    extract_template,
    import_share,
    record_transition,
    refresh_data,
)

FALLBACK_REPLY = "Happy to keep talking — tell me more about what you have in mind."


@dataclass(frozen=True)
class Outcome:
    kind: str  # "text_reply" | "app_created" | "app_updated"
    text: Optional[str] = None
    state: Optional[AppState] = None
    strategy: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "kind": self.kind,
            "text": self.text,
            "strategy": self.strategy,
            "state": None if self.state is None else codec.state_to_doc(self.state),
        }


@dataclass
class Session:
    session_id: str
    active_app_id: Optional[str] = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list[queue.SimpleQueue] = field(default_factory=list)
    outcome_count: int = 0


class SessionService:
    def __init__(self, env: MockEnvironment, agent: ScriptedAgent,
                 analyzer: IntentAnalyzer, store: AppStore,
                 qa_config: QaConfig = QaConfig()):
        self.env = env
        self.agent = agent
        self.analyzer = analyzer
        self.store = store
        self.qa_config = qa_config
        self._sessions: dict[str, Session] = {}
        self._states: dict[str, AppState] = {}
        self._histories: dict[str, StateHistory] = {}
        self._counter_lock = threading.Lock()
        self._session_counter = 0
        self._event_counter = 0
        self._app_counter = len(store.list_apps())

    # --- session lifecycle ----------------------------------------------

    def open_session(self, resume_app_id: Optional[str] = None) -> str:
        with self._counter_lock:
            self._session_counter += 1
            sid = f"s-{self._session_counter:04d}"
        session = Session(sid)
        if resume_app_id is not None:
            state = self.store.latest_state(resume_app_id)
            self._states[resume_app_id] = state
            self._histories[resume_app_id] = self.store.load_history(resume_app_id)
            session.active_app_id = resume_app_id
        self._sessions[sid] = session
        return sid

    def _session(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise NoApp(f"unknown session {session_id}") from None

    def get_state(self, session_id: str) -> AppState:
        session = self._session(session_id)
        if session.active_app_id is None:
            raise NoApp(session_id)
        return self._states[session.active_app_id]

    def subscribe(self, session_id: str) -> queue.SimpleQueue:
        session = self._session(session_id)
        q: queue.SimpleQueue = queue.SimpleQueue()
        with session.lock:
            if session.active_app_id is not None:
                q.put((session.outcome_count,
                       Outcome("app_updated", state=self._states[session.active_app_id],
                               strategy="snapshot")))
            session.subscribers.append(q)
        return q

    def _publish(self, session: Session, outcome: Outcome) -> None:
        session.outcome_count += 1
        for q in session.subscribers:
            q.put((session.outcome_count, outcome))

    def _next_event_id(self) -> str:
        with self._counter_lock:
            self._event_counter += 1
            return f"e-{self._event_counter:04d}"

    def _next_app_id(self) -> str:
        with self._counter_lock:
            self._app_counter += 1
            return f"app-{self._app_counter:04d}"

    # --- pipeline ---------------------------------------------------------

    def submit_utterance(self, session_id: str, text: str) -> Outcome:
        session = self._session(session_id)
        with session.lock:
            assessment = self.analyzer.assess_cold_start(text)
            if session.active_app_id is None or assessment.boundary_flag is not None:
                if assessment.modality == "plain_text":
                    outcome = Outcome("text_reply", text=self._text_reply(assessment, text))
                else:
                    outcome = self._cold_start(session, make_plan(assessment, text))
            else:
                event = Event(
                    event_id=self._next_event_id(),
                    session_id=session_id,
                    channel="nl",
                    payload={"text": text},
                    basis_state_seq=self._states[session.active_app_id].state_seq,
                )
                outcome = self._evolve(session, event)
            self._publish(session, outcome)
            return outcome

    def dispatch_affordance(self, session_id: str, event: Event) -> Outcome:
        session = self._session(session_id)
        with session.lock:
            if session.active_app_id is None:
                raise NoApp(session_id)
            state = self._states[session.active_app_id]
            if event.basis_state_seq != state.state_seq:
                raise StaleEvent(
                    f"basis {event.basis_state_seq} != current {state.state_seq}")
            event = self._resolve_dispatch(event, state)
            outcome = self._evolve(session, event)
            self._publish(session, outcome)
            return outcome

    def _resolve_dispatch(self, event: Event, state: AppState) -> Event:
        aff_id = event.payload.get("affordance_id")
        structured = {a.affordance_id: a for a in state.affordances.structured}
        if aff_id in structured:
            _validate_params(structured[aff_id], event.payload.get("params", {}))
            return replace(event, channel="structured")
        anticipatory = {a.affordance_id: a for a in state.affordances.anticipatory}
        if aff_id in anticipatory:
            # Anticipatory dispatch is semantically identical to typing the intent.
            ant = anticipatory[aff_id]
            return replace(event, channel="nl",
                           payload={"text": ant.intent_text, "via_anticipatory": aff_id})
        raise UnknownAffordance(str(aff_id))

    def _text_reply(self, assessment, text: str) -> str:
        plan = GenerationPlan(assessment=assessment, architecture="", queries=(), utterance=text)
        try:
            delta = self.agent.render(RenderRequest(None, plan, ()))
        except ScriptMiss:
            return FALLBACK_REPLY
        if delta.strategy != "text_reply" or delta.reply_text is None:
            raise PipelineFault("agent", "plain_text route produced a non-text delta")
        return delta.reply_text

    def _cold_start(self, session: Session, plan: GenerationPlan) -> Outcome:
        retrieved = self._retrieve(plan.queries)
        try:
            delta = self.agent.render(RenderRequest(None, plan, retrieved))
        except ScriptMiss as exc:
            raise PipelineFault("agent", f"ScriptMiss: {exc}") from exc
        if delta.strategy == "text_reply":
            return Outcome("text_reply", text=delta.reply_text)
        delta = _attach_plan(delta, plan)
        app_id = self._next_app_id()
        try:
            result = apply_delta(empty_state(app_id), delta)
        except EngineError as exc:
            raise PipelineFault("core-state", str(exc)) from exc
        state = result.next
        assert isinstance(state, AppState)
        self._gate(state)
        history = record_transition(StateHistory(app_id), result, plan.utterance)
        self._commit(state, history)
        session.active_app_id = app_id
        return Outcome("app_created", state=state, strategy=result.strategy)

    def _evolve(self, session: Session, event: Event) -> Outcome:
        app_id = session.active_app_id
        state = self._states[app_id]
        interp = self.analyzer.interpret_event(event, state)
        try:
            queries = self.agent.plan_retrieval(interp, state)
            retrieved = self._retrieve(queries)
            delta = self.agent.render(RenderRequest(state, interp, retrieved))
        except ScriptMiss as exc:
            # Unscripted structured dispatches are a backend defect; unscripted
            # free text just gets a conversational reply.
            if event.channel == "structured":
                raise PipelineFault("agent", f"ScriptMiss: {exc}") from exc
            return Outcome("text_reply", text=FALLBACK_REPLY, strategy="text_reply")
        try:
            result = apply_delta(state, delta)
        except EngineError as exc:
            raise PipelineFault("core-state", str(exc)) from exc
        history = self._histories[app_id]
        nxt = result.next
        if isinstance(nxt, TextReply):
            record_transition(history, result, interp.resolved_intent)
            self.store.save_history(history)
            return Outcome("text_reply", text=nxt.text, strategy="text_reply")
        if isinstance(nxt, NewAppRequest):
            seed_plan = self._plan_from_seed(nxt.seed)
            outcome = self._cold_start(session, seed_plan)
            record_transition(history, result, interp.resolved_intent,
                              child_app_id=outcome.state.app_id)
            self.store.save_history(history)
            return outcome
        assert isinstance(nxt, AppState)
        self._gate(nxt)
        record_transition(history, result, interp.resolved_intent)
        self._commit(nxt, history)
        return Outcome("app_updated", state=nxt, strategy=result.strategy)

    def _plan_from_seed(self, seed: Mapping[str, Any]) -> GenerationPlan:
        if "assessment" in seed:
            return GenerationPlan.from_doc(seed)
        utterance = seed.get("utterance", "")
        assessment = self.analyzer.assess_cold_start(utterance)
        return make_plan(assessment, utterance)

    def _retrieve(self, queries) -> tuple:
        try:
            return tuple(tuple(self.env.execute_query(q)) for q in queries)
        except EngineError as exc:
            raise PipelineFault("environment", str(exc)) from exc

    def _gate(self, state: AppState) -> None:
        report = gate(state, self.env, self.qa_config)
        if report.verdict != "pass":
            errors = "; ".join(f"{f.cls}@{f.locus}: {f.message}"
                               for f in report.findings if f.severity == "error")
            raise PipelineFault("qa", errors)

    def _commit(self, state: AppState, history: StateHistory) -> None:
        self.store.save_state(state)
        self.store.save_history(history)
        self._states[state.app_id] = state
        self._histories[state.app_id] = history

    # --- distribution -----------------------------------------------------

    def refresh(self, session_id: str) -> AppState:
        session = self._session(session_id)
        with session.lock:
            if session.active_app_id is None:
                raise NoApp(session_id)
            state = refresh_data(self._states[session.active_app_id], self.env)
            self.store.save_state(state)
            self._states[state.app_id] = state
            return state

    def share_export(self, session_id: str, kind: str,
                     data_policy: Optional[str] = None) -> SharePackage:
        state = self.get_state(session_id)
        if kind == "state":
            return export_share(state, data_policy or "static_snapshot")
        if kind == "template":
            return export_share(extract_template(state))
        raise SchemaViolation(f"unknown share kind {kind!r}")

    def share_import(self, session_id: str, pkg: SharePackage) -> Outcome:
        session = self._session(session_id)
        with session.lock:
            app_id = self._next_app_id()
            state = import_share(pkg, self.env, self.agent, app_id=app_id)
            history = StateHistory(app_id)
            history.nodes[state.state_seq] = HistoryNode(
                None, f"imported ({pkg.kind})", "import")
            self._commit(state, history)
            session.active_app_id = app_id
            outcome = Outcome("app_created", state=state, strategy="import")
            self._publish(session, outcome)
            return outcome


def _attach_plan(delta: Delta, plan: GenerationPlan) -> Delta:
    """Stamp the generation plan into task progress so templates can be
    extracted from any descendant state later."""
    ctx = delta.context_ops
    progress = {**dict(ctx.task_progress), "origin_plan": plan.to_doc()}
    return replace(delta, context_ops=replace(ctx, task_progress=progress))


def _validate_params(aff, params: Mapping[str, Any]) -> None:
    schema = aff.param_schema
    for name, value in params.items():
        if name not in schema:
            raise SchemaViolation(f"param {name!r} not in schema of {aff.affordance_id}")
        spec = schema[name]
        expected = spec.get("type")
        if expected == "string" and not isinstance(value, str):
            raise SchemaViolation(f"param {name!r} must be a string")
        if expected == "number" and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise SchemaViolation(f"param {name!r} must be a number")
        if expected == "boolean" and not isinstance(value, bool):
            raise SchemaViolation(f"param {name!r} must be a boolean")
        allowed = spec.get("allowed_values")
        if allowed is not None and value not in allowed:
            raise SchemaViolation(f"param {name!r}={value!r} not in allowed_values")
        rng = spec.get("range")
        if rng is not None and not (rng[0] <= value <= rng[1]):
            raise SchemaViolation(f"param {name!r}={value!r} outside range {rng}")


# --- wire server ----------------------------------------------------------

class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        service: SessionService = self.server.service  # type: ignore[attr-defined]
        while True:
            try:
                msg = protocol.recv_frame(self.request)
            except (ValueError, ConnectionError, OSError):
                return
            if msg is None:
                return
            mtype = msg.get("type")
            try:
                if mtype == "SUBSCRIBE":
                    self._serve_subscription(service, msg)
                    return
                protocol.send_frame(self.request, self._dispatch(service, msg))
            except EngineError as exc:
                protocol.send_frame(self.request, _error_doc(exc))
            except (ValueError, KeyError, TypeError) as exc:
                protocol.send_frame(self.request,
                                    {"ok": False, "error": {"code": "BadRequest",
                                                            "message": str(exc)}})

    def _dispatch(self, service: SessionService, msg: Mapping) -> dict:
        mtype = msg["type"]
        if mtype == "OPEN":
            sid = service.open_session(msg.get("resume_app_id"))
            return {"ok": True, "session_id": sid}
        if mtype == "UTTER":
            outcome = service.submit_utterance(msg["session_id"], msg["text"])
            return {"ok": True, "outcome": outcome.to_doc()}
        if mtype == "DISPATCH":
            event = codec.event_from_doc(msg["event"])
            outcome = service.dispatch_affordance(msg["session_id"], event)
            return {"ok": True, "outcome": outcome.to_doc()}
        if mtype == "GET":
            state = service.get_state(msg["session_id"])
            return {"ok": True, "state": codec.state_to_doc(state)}
        if mtype == "REFRESH":
            state = service.refresh(msg["session_id"])
            return {"ok": True, "state": codec.state_to_doc(state)}
        if mtype == "SHARE_EXPORT":
            pkg = service.share_export(msg["session_id"], msg["kind"], msg.get("data_policy"))
            from .store import package_to_bytes
            return {"ok": True, "package": codec.decode_document(package_to_bytes(pkg))}
        if mtype == "SHARE_IMPORT":
            from .store import package_from_bytes
            pkg = package_from_bytes(codec.canonical_bytes(msg["package"]))
            outcome = service.share_import(msg["session_id"], pkg)
            return {"ok": True, "outcome": outcome.to_doc()}
        raise ValueError(f"unknown message type {mtype!r}")

    def _serve_subscription(self, service: SessionService, msg: Mapping) -> None:
        q = service.subscribe(msg["session_id"])
        protocol.send_frame(self.request, {"ok": True})
        while not self.server.stopping:  # type: ignore[attr-defined]
            try:
                seq_no, outcome = q.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                protocol.send_frame(self.request,
                                    {"type": "UPDATE", "seq_no": seq_no,
                                     "outcome": outcome.to_doc()})
            except OSError:
                return


def _error_doc(exc: EngineError) -> dict:
    doc = {"ok": False, "error": {"code": type(exc).__name__, "message": str(exc)}}
    if isinstance(exc, PipelineFault):
        doc["error"]["stage"] = exc.stage
    return doc


class WireServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str, port: int, service: SessionService):
        super().__init__((host, port), _Handler)
        self.service = service
        self.stopping = False

    def shutdown(self):
        self.stopping = True
        super().shutdown()
