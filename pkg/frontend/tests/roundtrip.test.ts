import { createConnection } from "node:net";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Subscription, WireClient } from "../src/client.js";
import { buildAnticipatoryEvent, buildStructuredEvent } from "../src/dispatch.js";
import { FrameDecoder, canonicalJson, encodeFrame } from "../src/framing.js";
import { renderState } from "../src/render.js";
import type { StateDoc, UpdateFrame } from "../src/types.js";
import { type ServerHandle, startServer } from "./helpers.js";

const SCENARIOS = [
  "I need to rent a car for a trip from Sydney to Brisbane, budget $80-100 a day, travelling with a dog on a P2 licence",
  "Where can I find a good public BBQ spot near the water in Sydney?",
  "I'm on F-1 OPT and need to apply for an SSN — walk me through it",
  "Help me keep an eye on the USD exchange rates",
];

// Engine error codes a well-formed client must never trigger.
const FORBIDDEN = ["UnknownAffordance", "SchemaViolation", "StaleEvent"];

let server: ServerHandle;

beforeAll(async () => {
  server = await startServer();
}, 30000);

afterAll(() => server?.stop());

async function waitFor<T>(probe: () => T | undefined, what: string, ms = 10000): Promise<T> {
  const deadline = Date.now() + ms;
  for (;;) {
    const got = probe();
    if (got !== undefined) return got;
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 25));
  }
}

describe("wire conversation", () => {
  it("opens a session and creates an app from an utterance", async () => {
    const client = await WireClient.connect(server.port);
    try {
      const sid = await client.open();
      const outcome = await client.utter(sid, SCENARIOS[0]);
      expect(outcome.kind).toBe("app_created");
      expect(outcome.state?.state_seq).toBe(0);
      const state = await client.getState(sid);
      expect(state.app_id).toBe(outcome.state?.app_id);
    } finally {
      client.close();
    }
  });

  it("receives responses framed as canonical JSON bytes", async () => {
    const client = await WireClient.connect(server.port);
    const sid = await client.open();
    await client.utter(sid, SCENARIOS[3]);
    client.close();

    const raw: Buffer[] = [];
    const sock = createConnection({ port: server.port });
    sock.on("data", (c) => raw.push(c));
    await new Promise<void>((resolve) => sock.once("connect", () => resolve()));
    sock.write(encodeFrame({ type: "GET", session_id: sid }));
    const body = await waitFor(() => {
      const buf = Buffer.concat(raw);
      if (buf.length < 4) return undefined;
      const n = buf.readUInt32BE(0);
      return buf.length >= 4 + n ? buf.subarray(4, 4 + n) : undefined;
    }, "GET response frame");
    sock.destroy();
    const text = body.toString("utf-8");
    expect(text).toBe(canonicalJson(JSON.parse(text)));
  });

  it("rejects a dispatch built from an outdated snapshot with StaleEvent", async () => {
    const client = await WireClient.connect(server.port);
    try {
      const sid = await client.open();
      await client.utter(sid, SCENARIOS[1]);
      const oldState = await client.getState(sid);
      await client.utter(sid, "Can you check weekend events in these parks?");
      const aff = oldState.affordances.structured[0];
      const r = await client.dispatch(sid, buildStructuredEvent(sid, oldState, aff));
      expect(r.ok).toBe(false);
      expect(r.error?.code).toBe("StaleEvent");
    } finally {
      client.close();
    }
  });
});

describe("round-trip fidelity", () => {
  it("every affordance the server offers dispatches cleanly with a fresh basis", async () => {
    for (const utterance of SCENARIOS) {
      const client = await WireClient.connect(server.port);
      try {
        const sid = await client.open();
        const created = await client.utter(sid, utterance);
        expect(created.kind).toBe("app_created");
        const tried = new Set<string>();
        let dispatched = 0;
        for (let round = 0; round < 20; round++) {
          const state = await client.getState(sid);
          const structured = state.affordances.structured.find(
            (a) => !tried.has(a.affordance_id),
          );
          const anticipatory = state.affordances.anticipatory.find(
            (a) => !tried.has(a.affordance_id),
          );
          if (!structured && !anticipatory) break;
          const event = structured
            ? buildStructuredEvent(sid, state, structured)
            : buildAnticipatoryEvent(sid, state, anticipatory!);
          tried.add(structured ? structured.affordance_id : anticipatory!.affordance_id);
          const r = await client.dispatch(sid, event);
          dispatched += 1;
          if (!r.ok) {
            // The scripted agent may have no rule for this interaction; that
            // surfaces as a pipeline fault, never as a protocol-level error.
            expect(FORBIDDEN).not.toContain(r.error?.code);
            expect(r.error?.code).toBe("PipelineFault");
          }
        }
        expect(dispatched).toBeGreaterThan(0);
      } finally {
        client.close();
      }
    }
  }, 60000);
});

describe("live updates", () => {
  it("applying a pushed UPDATE renders identically to a fresh snapshot", async () => {
    const client = await WireClient.connect(server.port);
    const updates: UpdateFrame[] = [];
    let sub: Subscription | undefined;
    try {
      const sid = await client.open();
      sub = await Subscription.start(server.port, sid, (u) => updates.push(u));

      await client.utter(sid, SCENARIOS[1]);
      await waitFor(() => updates.find((u) => u.outcome.kind === "app_created"), "create push");

      const basis = await client.getState(sid);
      const plan = basis.affordances.structured.find((a) => a.affordance_id === "f_plan");
      expect(plan).toBeDefined();
      const r = await client.dispatch(sid, buildStructuredEvent(sid, basis, plan!));
      expect(r.ok).toBe(true);

      const pushed = await waitFor(
        () => updates.find((u) => u.outcome.kind === "app_updated"),
        "update push",
      );
      const fresh = await client.getState(sid);
      const fromPush = canonicalJson(renderState(pushed.outcome.state as StateDoc));
      const fromSnapshot = canonicalJson(renderState(fresh));
      expect(fromPush).toBe(fromSnapshot);

      const seqs = updates.map((u) => u.seq_no);
      expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
    } finally {
      sub?.close();
      client.close();
    }
  }, 30000);
});
