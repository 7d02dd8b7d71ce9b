import { execFileSync } from "node:child_process";
import { describe, expect, it } from "vitest";

import { FrameDecoder, canonicalJson, encodeFrame } from "../src/framing.js";

const SAMPLE = {
  zeta: [3, 1.5, true, null],
  alpha: { nested: { b: "ü — naïve", a: [] } },
  mid: "plain",
};

describe("canonicalJson", () => {
  it("sorts keys recursively and uses compact separators", () => {
    expect(canonicalJson(SAMPLE)).toBe(
      '{"alpha":{"nested":{"a":[],"b":"ü — naïve"}},"mid":"plain","zeta":[3,1.5,true,null]}',
    );
  });

  it("drops undefined-valued keys like JSON.stringify does", () => {
    expect(canonicalJson({ a: 1, b: undefined })).toBe('{"a":1}');
  });

  it("matches the server's canonical encoding byte for byte", () => {
    const fromPython = execFileSync(
      "python3",
      [
        "-c",
        "import json,sys; doc=json.load(sys.stdin); " +
          "sys.stdout.write(json.dumps(doc, sort_keys=True, separators=(',', ':'), ensure_ascii=False))",
      ],
      { input: JSON.stringify(SAMPLE), encoding: "utf-8" },
    );
    expect(canonicalJson(SAMPLE)).toBe(fromPython);
  });
});

describe("frame codec", () => {
  it("round-trips a document through encode and decode", () => {
    const decoder = new FrameDecoder();
    const docs = decoder.push(encodeFrame(SAMPLE));
    expect(docs).toEqual([SAMPLE === null ? null : JSON.parse(canonicalJson(SAMPLE))]);
  });

  it("writes a 4-byte big-endian length prefix", () => {
    const frame = encodeFrame({ a: 1 });
    expect(frame.readUInt32BE(0)).toBe(frame.length - 4);
    expect(frame.subarray(4).toString("utf-8")).toBe('{"a":1}');
  });

  it("decodes frames split at every possible byte boundary", () => {
    const frame = Buffer.concat([encodeFrame({ first: true }), encodeFrame({ second: 2 })]);
    for (let split = 1; split < frame.length; split++) {
      const decoder = new FrameDecoder();
      const docs = [
        ...decoder.push(frame.subarray(0, split)),
        ...decoder.push(frame.subarray(split)),
      ];
      expect(docs).toEqual([{ first: true }, { second: 2 }]);
    }
  });

  it("decodes many frames arriving in one chunk", () => {
    const chunk = Buffer.concat([1, 2, 3].map((n) => encodeFrame({ n })));
    expect(new FrameDecoder().push(chunk)).toEqual([{ n: 1 }, { n: 2 }, { n: 3 }]);
  });

  it("rejects oversized or zero frame lengths", () => {
    const bad = Buffer.alloc(4);
    bad.writeUInt32BE(0xffffffff, 0);
    expect(() => new FrameDecoder().push(bad)).toThrow(/bad frame length/);
    expect(() => new FrameDecoder().push(Buffer.alloc(4))).toThrow(/bad frame length/);
  });
});
