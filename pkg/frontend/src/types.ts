/** Wire document shapes, mirroring docs/protocol.md and docs/formats.md. */

export interface RecordRef {
  source: string;
  record_id: string;
  version: number;
}

export interface NodeDoc {
  node_id: string;
  kind: string;
  props: Record<string, unknown>;
  children: NodeDoc[];
  source_refs: RecordRef[];
}

export interface ParamSpec {
  type?: string;
  allowed_values?: unknown[];
  range?: [number, number];
}

export interface StructuredAffordanceDoc {
  affordance_id: string;
  anchor_node: string;
  verb: string;
  param_schema: Record<string, ParamSpec>;
  resolved_params: Record<string, unknown> | null;
}

export interface AnticipatoryAffordanceDoc {
  affordance_id: string;
  label: string;
  intent_text: string;
}

export interface AffordancesDoc {
  structured: StructuredAffordanceDoc[];
  anticipatory: AnticipatoryAffordanceDoc[];
  nl_enabled: boolean;
}

export interface StateDoc {
  format: "appstate/1";
  app_id: string;
  state_seq: number;
  content_rev: number;
  created_at: number;
  view: NodeDoc;
  affordances: AffordancesDoc;
  context: Record<string, unknown>;
}

export interface EventDoc {
  event_id: string;
  session_id: string;
  channel: "structured" | "nl";
  payload: Record<string, unknown>;
  basis_state_seq: number;
}

export interface OutcomeDoc {
  kind: "text_reply" | "app_created" | "app_updated";
  text: string | null;
  strategy: string | null;
  state: StateDoc | null;
}

export interface ErrorDoc {
  code: string;
  message: string;
  stage?: string;
}

export interface Response {
  ok: boolean;
  error?: ErrorDoc;
  session_id?: string;
  outcome?: OutcomeDoc;
  state?: StateDoc;
  package?: Record<string, unknown>;
}

export interface UpdateFrame {
  type: "UPDATE";
  seq_no: number;
  outcome: OutcomeDoc;
}
