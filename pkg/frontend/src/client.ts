import { Socket, createConnection } from "node:net";

import { FrameDecoder, encodeFrame } from "./framing.js";
import type { EventDoc, OutcomeDoc, Response, StateDoc, UpdateFrame } from "./types.js";

/** One request/response connection. Requests are answered strictly in order,
 * so pending resolvers form a FIFO queue. */
export class WireClient {
  private pending: Array<(doc: Response) => void> = [];
  private decoder = new FrameDecoder();

  private constructor(private sock: Socket) {
    sock.on("data", (chunk: Buffer) => {
      for (const doc of this.decoder.push(chunk)) {
        const resolve = this.pending.shift();
        if (resolve) resolve(doc as Response);
      }
    });
  }

  static connect(port: number, host = "127.0.0.1"): Promise<WireClient> {
    return new Promise((resolve, reject) => {
      const sock = createConnection({ port, host }, () => resolve(new WireClient(sock)));
      sock.once("error", reject);
    });
  }

  request(doc: Record<string, unknown>): Promise<Response> {
    return new Promise((resolve) => {
      this.pending.push(resolve);
      this.sock.write(encodeFrame(doc));
    });
  }

  async open(resumeAppId?: string): Promise<string> {
    const r = await this.request(
      resumeAppId ? { type: "OPEN", resume_app_id: resumeAppId } : { type: "OPEN" },
    );
    if (!r.ok || !r.session_id) throw new Error("OPEN failed");
    return r.session_id;
  }

  async utter(sessionId: string, text: string): Promise<OutcomeDoc> {
    const r = await this.request({ type: "UTTER", session_id: sessionId, text });
    if (!r.ok || !r.outcome) throw new Error(`UTTER failed: ${r.error?.code}`);
    return r.outcome;
  }

  /** Dispatch an affordance event; resolves with the raw response so callers
   * can distinguish engine errors from transport failures. */
  dispatch(sessionId: string, event: EventDoc): Promise<Response> {
    return this.request({ type: "DISPATCH", session_id: sessionId, event });
  }

  async getState(sessionId: string): Promise<StateDoc> {
    const r = await this.request({ type: "GET", session_id: sessionId });
    if (!r.ok || !r.state) throw new Error(`GET failed: ${r.error?.code}`);
    return r.state;
  }

  async refresh(sessionId: string): Promise<StateDoc> {
    const r = await this.request({ type: "REFRESH", session_id: sessionId });
    if (!r.ok || !r.state) throw new Error(`REFRESH failed: ${r.error?.code}`);
    return r.state;
  }

  close(): void {
    this.sock.destroy();
  }
}

/** Dedicated push connection: after the SUBSCRIBE ack every frame is an
 * UPDATE, delivered to the handler in arrival order. */
export class Subscription {
  private decoder = new FrameDecoder();
  private acked = false;

  private constructor(
    private sock: Socket,
    private onUpdate: (update: UpdateFrame) => void,
    private onAck: () => void,
  ) {
    sock.on("data", (chunk: Buffer) => {
      for (const doc of this.decoder.push(chunk)) {
        if (!this.acked) {
          this.acked = true;
          this.onAck();
        } else {
          this.onUpdate(doc as UpdateFrame);
        }
      }
    });
  }

  static start(
    port: number,
    sessionId: string,
    onUpdate: (update: UpdateFrame) => void,
    host = "127.0.0.1",
  ): Promise<Subscription> {
    return new Promise((resolve, reject) => {
      const sock = createConnection({ port, host }, () => {
        sock.write(encodeFrame({ type: "SUBSCRIBE", session_id: sessionId }));
      });
      sock.once("error", reject);
      const sub: Subscription = new Subscription(sock, onUpdate, () => resolve(sub));
    });
  }

  close(): void {
    this.sock.destroy();
  }
}
