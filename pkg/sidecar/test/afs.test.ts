import { readFileSync, writeFileSync } from "fs";
import { join } from "path";
import { describe, expect, it } from "vitest";
import { encodeAfs1, readAfs1, writeAfs1 } from "../src/afs";
import { makeTempDir } from "./helpers";

describe("afs1 format", () => {
  it("round trips rows and metadata exactly", () => {
    const dir = makeTempDir();
    const path = join(dir, "f.afs");
    const rows = new Float32Array([0.5, -1.25, 3.75, 0, 2e-8, 1e38]);
    const meta = { extractor: "tag/v1", resize: "bilinear-64x64", count: 2 };
    writeAfs1(path, rows, 2, 3, meta);
    const back = readAfs1(path);
    expect(back.n).toBe(2);
    expect(back.d).toBe(3);
    expect(Array.from(back.rows)).toEqual(Array.from(rows));
    expect(back.meta).toEqual(meta);
  });

  it("lays out magic, little-endian counts, payload, then JSON trailer", () => {
    const buf = encodeAfs1(new Float32Array([1.5, -2.25]), 1, 2, { extractor: "t" });
    expect(buf.toString("ascii", 0, 4)).toBe("AFS1");
    expect(buf.readUInt32LE(4)).toBe(1);
    expect(buf.readUInt32LE(8)).toBe(2);
    expect(buf.readFloatLE(12)).toBe(1.5);
    expect(buf.readFloatLE(16)).toBe(-2.25);
    expect(JSON.parse(buf.toString("utf-8", 20))).toEqual({ extractor: "t" });
  });

  it("emits identical bytes regardless of metadata key order", () => {
    const rows = new Float32Array([1, 2]);
    const a = encodeAfs1(rows, 1, 2, { b: 1, a: "x" });
    const b = encodeAfs1(rows, 1, 2, { a: "x", b: 1 });
    expect(a.equals(b)).toBe(true);
  });

  it("rejects a payload that does not match the header counts", () => {
    expect(() => encodeAfs1(new Float32Array(5), 2, 3, {})).toThrow(/does not match/);
  });

  it("rejects files with a bad magic", () => {
    const dir = makeTempDir();
    const path = join(dir, "bad.afs");
    writeFileSync(path, Buffer.from("NOPE00000000"));
    expect(() => readAfs1(path)).toThrow(/bad magic/);
  });

  it("rejects truncated payloads", () => {
    const dir = makeTempDir();
    const path = join(dir, "cut.afs");
    const whole = encodeAfs1(new Float32Array([1, 2, 3, 4]), 2, 2, {});
    writeFileSync(path, whole.subarray(0, 16));
    expect(() => readAfs1(path)).toThrow(/truncated/);
  });

  it("treats a missing trailer as empty metadata", () => {
    const dir = makeTempDir();
    const path = join(dir, "plain.afs");
    const whole = encodeAfs1(new Float32Array([1]), 1, 1, {});
    writeFileSync(path, whole.subarray(0, 16));
    expect(readAfs1(path).meta).toEqual({});
  });

  it("reads back what an independent description of the layout produces", () => {
    const dir = makeTempDir();
    const path = join(dir, "manual.afs");
    const trailer = Buffer.from(JSON.stringify({ extractor: "hand" }), "utf-8");
    const buf = Buffer.alloc(12 + 8 + trailer.length);
    buf.write("AFS1", 0, "ascii");
    buf.writeUInt32LE(2, 4);
    buf.writeUInt32LE(1, 8);
    buf.writeFloatLE(0.25, 12);
    buf.writeFloatLE(-8, 16);
    trailer.copy(buf, 20);
    writeFileSync(path, buf);
    const back = readAfs1(path);
    expect(back.n).toBe(2);
    expect(back.d).toBe(1);
    expect(Array.from(back.rows)).toEqual([0.25, -8]);
    expect(back.meta).toEqual({ extractor: "hand" });
    expect(readFileSync(path).equals(buf)).toBe(true);
  });
});
