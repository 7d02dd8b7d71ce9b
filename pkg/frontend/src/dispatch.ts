import type {
  AnticipatoryAffordanceDoc,
  EventDoc,
  ParamSpec,
  StateDoc,
  StructuredAffordanceDoc,
} from "./types.js";

let eventCounter = 0;

function nextEventId(): string {
  eventCounter += 1;
  return `ui-${eventCounter.toString().padStart(4, "0")}`;
}

/** Pick a schema-valid value for one parameter. Prefers the value the server
 * already resolved, then the first allowed value, then a type-appropriate
 * default clamped to the declared range. */
export function fillParam(spec: ParamSpec, resolved: unknown): unknown {
  if (resolved !== undefined && resolved !== null) return resolved;
  if (spec.allowed_values && spec.allowed_values.length > 0) return spec.allowed_values[0];
  if (spec.type === "number") return spec.range ? spec.range[0] : 1;
  if (spec.type === "boolean") return true;
  return "example";
}

export function fillParams(aff: StructuredAffordanceDoc): Record<string, unknown> {
  const params: Record<string, unknown> = {};
  const resolved = aff.resolved_params ?? {};
  for (const [name, spec] of Object.entries(aff.param_schema)) {
    params[name] = fillParam(spec, resolved[name]);
  }
  return params;
}

/** Event for a structured affordance, stamped with the sequence number of the
 * state it was built from so the server can reject stale interactions. */
export function buildStructuredEvent(
  sessionId: string,
  state: StateDoc,
  aff: StructuredAffordanceDoc,
  params?: Record<string, unknown>,
): EventDoc {
  return {
    event_id: nextEventId(),
    session_id: sessionId,
    channel: "structured",
    payload: { affordance_id: aff.affordance_id, params: params ?? fillParams(aff) },
    basis_state_seq: state.state_seq,
  };
}

export function buildAnticipatoryEvent(
  sessionId: string,
  state: StateDoc,
  aff: AnticipatoryAffordanceDoc,
): EventDoc {
  return {
    event_id: nextEventId(),
    session_id: sessionId,
    channel: "structured",
    payload: { affordance_id: aff.affordance_id },
    basis_state_seq: state.state_seq,
  };
}

export function resetEventCounter(): void {
  eventCounter = 0;
}
