"""Command line entry points: serve, replay, validate.

Exit codes: 0 success, 1 assertion/validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Mapping, Optional

from . import codec
from .agent import AgentScript, ScriptedAgent
from .environment import MockEnvironment
from .errors import DecodeError, EngineError, NoApp
from .intent import IntentAnalyzer
from .qa import gate
from .service import Outcome, SessionService, WireServer
from .state import AppState, Event, diff_view, find_node, iter_nodes, validate_state
from .store import AppStore


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, NotADirectoryError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentapps")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the wire-protocol server")
    _common_flags(serve)
    serve.add_argument("--port", type=int, default=7333)
    serve.add_argument("--host", default="127.0.0.1")
    serve.set_defaults(func=cmd_serve)

    replay = sub.add_parser("replay", help="run recorded interaction traces in-process")
    _common_flags(replay)
    replay.add_argument("traces", nargs="+", help="trace JSON files")
    replay.set_defaults(func=cmd_replay)

    validate = sub.add_parser("validate", help="check every snapshot in a store")
    validate.add_argument("--store", default=None)
    validate.add_argument("--fixtures", default=None,
                          help="fixture dir; enables environment-backed checks")
    validate.set_defaults(func=cmd_validate)
    return parser


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fixtures", required=True, help="directory of dataset fixture files")
    p.add_argument("--script", required=True, help="agent script file")
    p.add_argument("--store", default=None,
                   help="state store directory (default: $SAC_STORE)")
    p.add_argument("--rules", default=None, help="intent rule table (default: built-in)")


def _resolve_store(args, allow_temp: bool = False) -> Path:
    store = args.store or os.environ.get("SAC_STORE")
    if store is None:
        if allow_temp:
            return Path(tempfile.mkdtemp(prefix="agentapps-store-"))
        print("config error: no store directory (--store or SAC_STORE)", file=sys.stderr)
        raise SystemExit(2)
    return Path(store)


def _build_service(args, store_dir: Path) -> SessionService:
    fixtures = Path(args.fixtures)
    if not fixtures.is_dir():
        raise NotADirectoryError(str(fixtures))
    env = MockEnvironment()
    env.load_dir(fixtures)
    agent = ScriptedAgent(AgentScript.load(Path(args.script)))
    analyzer = IntentAnalyzer(Path(args.rules) if args.rules else None)
    return SessionService(env, agent, analyzer, AppStore(store_dir))


def cmd_serve(args) -> int:
    service = _build_service(args, _resolve_store(args))
    server = WireServer(args.host, args.port, service)
    print(f"listening on {args.host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return 0


def cmd_replay(args) -> int:
    store_dir = _resolve_store(args, allow_temp=True)
    failures = 0
    for trace_path in args.traces:
        doc = json.loads(Path(trace_path).read_text(encoding="utf-8"))
        service = _build_service(args, store_dir / Path(trace_path).stem)
        failures += _run_trace(service, doc, trace_path)
    return 1 if failures else 0


def _run_trace(service: SessionService, doc: Mapping, label: str) -> int:
    session_id = service.open_session()
    failures = 0
    prev_state: Optional[AppState] = None
    for i, step in enumerate(doc.get("steps", [])):
        outcome, state = _run_step(service, session_id, step, prev_state)
        transcript = {"step": i, "trace": Path(label).name, "outcome": outcome.to_doc()}
        sys.stdout.buffer.write(codec.canonical_bytes(transcript) + b"\n")
        for problem in _check_expect(step.get("expect", {}), outcome, state,
                                     prev_state, service, session_id):
            failures += 1
            print(f"FAIL {label} step {i}: {problem}", file=sys.stderr)
        if state is not None:
            prev_state = state
    return failures


def _run_step(service: SessionService, session_id: str, step: Mapping,
              prev_state: Optional[AppState]):
    do = step["do"]
    if do == "utter":
        outcome = service.submit_utterance(session_id, step["text"])
    elif do == "dispatch":
        basis = prev_state.state_seq if prev_state is not None else -1
        event = Event(
            event_id=f"trace-{step['affordance_id']}",
            session_id=session_id,
            channel="structured",
            payload={"affordance_id": step["affordance_id"],
                     "params": step.get("params", {})},
            basis_state_seq=step.get("basis_state_seq", basis),
        )
        outcome = service.dispatch_affordance(session_id, event)
    elif do == "refresh":
        state = service.refresh(session_id)
        return Outcome("app_updated", state=state, strategy="data_refresh"), state
    elif do == "action":
        service.env.execute_write(step["name"], step.get("params", {}))
        return Outcome("text_reply", text=f"action {step['name']} applied"), None
    else:
        raise ValueError(f"unknown trace step {do!r}")
    return outcome, outcome.state


def _check_expect(expect: Mapping, outcome: Outcome, state: Optional[AppState],
                  prev: Optional[AppState], service: SessionService,
                  session_id: str) -> list[str]:
    problems: list[str] = []

    def want(cond: bool, msg: str) -> None:
        if not cond:
            problems.append(msg)

    if "outcome" in expect:
        want(outcome.kind == expect["outcome"],
             f"outcome {outcome.kind!r} != {expect['outcome']!r}")
    if "strategy" in expect:
        want(outcome.strategy == expect["strategy"],
             f"strategy {outcome.strategy!r} != {expect['strategy']!r}")
    if "text_contains" in expect:
        want(outcome.text is not None and expect["text_contains"].lower() in outcome.text.lower(),
             f"reply text lacks {expect['text_contains']!r}")
    if expect.get("no_app"):
        try:
            service.get_state(session_id)
            want(False, "expected no active app, but one exists")
        except NoApp:
            pass

    needs_state = {"tabs", "badges", "anticipatory_labels", "structured_labels",
                   "checklist_items", "architecture", "state_seq", "content_rev",
                   "gate", "has_node", "prop_equals"}
    if needs_state & set(expect) and state is None:
        if prev is not None:
            state = prev
        else:
            return problems + ["expectations need a state but none exists"]

    if "tabs" in expect:
        count = sum(1 for n, _ in iter_nodes(state.view) if n.kind == "tab")
        want(count == expect["tabs"], f"tab count {count} != {expect['tabs']}")
    if "badges" in expect:
        count = sum(1 for n, _ in iter_nodes(state.view) if n.kind == "badge")
        want(count == expect["badges"], f"badge count {count} != {expect['badges']}")
    if "anticipatory_labels" in expect:
        labels = [a.label for a in state.affordances.anticipatory]
        want(labels == list(expect["anticipatory_labels"]),
             f"anticipatory labels {labels} != {expect['anticipatory_labels']}")
    if "structured_labels" in expect:
        labels = [(a.resolved_params or {}).get("label") for a in state.affordances.structured]
        missing = [l for l in expect["structured_labels"] if l not in labels]
        want(not missing, f"missing structured affordance labels {missing}")
    if "checklist_items" in expect:
        checklist = next((n for n, _ in iter_nodes(state.view) if n.kind == "checklist"), None)
        count = len(checklist.children) if checklist else -1
        want(count == expect["checklist_items"],
             f"checklist item count {count} != {expect['checklist_items']}")
    if "architecture" in expect:
        plan = state.context.task_progress.get("origin_plan", {})
        want(plan.get("architecture") == expect["architecture"],
             f"architecture {plan.get('architecture')!r} != {expect['architecture']!r}")
    if "state_seq" in expect:
        want(state.state_seq == expect["state_seq"],
             f"state_seq {state.state_seq} != {expect['state_seq']}")
    if "content_rev" in expect:
        want(state.content_rev == expect["content_rev"],
             f"content_rev {state.content_rev} != {expect['content_rev']}")
    if "has_node" in expect:
        for node_id in expect["has_node"]:
            want(find_node(state.view, node_id) is not None, f"missing node {node_id!r}")
    if "prop_equals" in expect:
        for node_id, props in expect["prop_equals"].items():
            node = find_node(state.view, node_id)
            if node is None:
                want(False, f"missing node {node_id!r}")
                continue
            for key, value in props.items():
                want(node.props.get(key) == value,
                     f"{node_id}.{key} = {node.props.get(key)!r} != {value!r}")
    if "gate" in expect:
        report = gate(state, service.env, service.qa_config)
        want(report.verdict == expect["gate"],
             f"gate verdict {report.verdict!r} != {expect['gate']!r}")

    if expect.get("view_hash_unchanged"):
        want(prev is not None and state is not None
             and codec.view_hash(prev.view) == codec.view_hash(state.view),
             "view hash changed")
    if expect.get("seq_unchanged"):
        want(prev is not None and state is not None
             and prev.state_seq == state.state_seq, "state_seq advanced")

    diff_keys = {"added_tab_titles", "removed_count", "removed_kinds",
                 "preserved_contains", "added_contains", "mutated_contains"}
    if diff_keys & set(expect):
        if prev is None or state is None:
            return problems + ["diff expectations need both a prior and a next state"]
        diff = diff_view(prev.view, state.view)
        if "added_tab_titles" in expect:
            titles = [n.props.get("title") for n, _ in iter_nodes(state.view)
                      if n.kind == "tab" and n.node_id in diff["added_ids"]]
            want(titles == list(expect["added_tab_titles"]),
                 f"added tab titles {titles} != {expect['added_tab_titles']}")
        if "removed_count" in expect:
            want(len(diff["removed_ids"]) == expect["removed_count"],
                 f"removed {sorted(diff['removed_ids'])} (count != {expect['removed_count']})")
        if "removed_kinds" in expect:
            kinds = sorted(n.kind for n, _ in iter_nodes(prev.view)
                           if n.node_id in diff["removed_ids"])
            want(kinds == sorted(expect["removed_kinds"]),
                 f"removed kinds {kinds} != {expect['removed_kinds']}")
        if "preserved_contains" in expect:
            kept = set(diff["preserved_ids"]) | set(diff["mutated_ids"])
            missing = [i for i in expect["preserved_contains"] if i not in kept]
            want(not missing, f"nodes not preserved: {missing}")
        if "added_contains" in expect:
            missing = [i for i in expect["added_contains"] if i not in diff["added_ids"]]
            want(not missing, f"nodes not added: {missing}")
        if "mutated_contains" in expect:
            missing = [i for i in expect["mutated_contains"] if i not in diff["mutated_ids"]]
            want(not missing, f"nodes not mutated: {missing}")
    return problems


def cmd_validate(args) -> int:
    store = args.store or os.environ.get("SAC_STORE")
    if store is None:
        print("config error: no store directory (--store or SAC_STORE)", file=sys.stderr)
        return 2
    root = Path(store)
    if not root.is_dir():
        print(f"config error: store {root} is not a directory", file=sys.stderr)
        return 2
    env = None
    if args.fixtures:
        env = MockEnvironment()
        env.load_dir(Path(args.fixtures))
    app_store = AppStore(root)
    problems = 0
    for app_id in app_store.list_apps():
        for path in app_store.snapshots(app_id):
            try:
                state = codec.deserialize_state(path.read_bytes())
            except DecodeError as exc:
                print(f"BAD  {path}: {exc} (offset {exc.offset})")
                problems += 1
                continue
            violations = validate_state(state)
            for v in violations:
                print(f"BAD  {path}: {v.code} {v.subject}: {v.message}")
                problems += 1
            if env is not None and not violations:
                report = gate(state, env)
                for f in report.findings:
                    if f.severity == "error":
                        print(f"BAD  {path}: {f.cls} {f.locus}: {f.message}")
                        problems += 1
            if not violations:
                print(f"OK   {path}")
    print(f"{problems} problem(s)")
    return 1 if problems else 0


if __name__ == "__main__":
    raise SystemExit(main())
