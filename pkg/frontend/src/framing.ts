/**
 * Length-prefixed framing: 4-byte big-endian length + canonical UTF-8 JSON.
 * The decoder is incremental so it copes with TCP chunk boundaries landing
 * anywhere, including inside the length prefix.
 */

export const MAX_FRAME = 16 * 1024 * 1024;

/** JSON.stringify with recursively sorted object keys — matches the server's
 * canonical form byte for byte. */
export function canonicalJson(doc: unknown): string {
  if (doc === null || typeof doc !== "object") {
    return JSON.stringify(doc);
  }
  if (Array.isArray(doc)) {
    return "[" + doc.map(canonicalJson).join(",") + "]";
  }
  const entries = Object.entries(doc as Record<string, unknown>)
    .filter(([, v]) => v !== undefined)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0));
  return "{" + entries.map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v)).join(",") + "}";
}

export function encodeFrame(doc: unknown): Buffer {
  const body = Buffer.from(canonicalJson(doc), "utf-8");
  if (body.length > MAX_FRAME) {
    throw new Error(`frame too large: ${body.length}`);
  }
  const head = Buffer.alloc(4);
  head.writeUInt32BE(body.length, 0);
  return Buffer.concat([head, body]);
}

export class FrameDecoder {
  private buf: Buffer = Buffer.alloc(0);

  /** Feed raw bytes; returns every complete document they finish. */
  push(chunk: Buffer): unknown[] {
    this.buf = this.buf.length ? Buffer.concat([this.buf, chunk]) : chunk;
    const out: unknown[] = [];
    for (;;) {
      if (this.buf.length < 4) break;
      const length = this.buf.readUInt32BE(0);
      if (length === 0 || length > MAX_FRAME) {
        throw new Error(`bad frame length ${length}`);
      }
      if (this.buf.length < 4 + length) break;
      const body = this.buf.subarray(4, 4 + length);
      out.push(JSON.parse(body.toString("utf-8")));
      this.buf = this.buf.subarray(4 + length);
    }
    return out;
  }
}
