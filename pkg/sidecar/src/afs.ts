/**
 * AFS1 feature-file format shared with the evaluation toolkit.
 *
 * Layout: magic bytes "AFS1", u32 little-endian row count N, u32
 * little-endian feature dimension D, N*D float32 little-endian values
 * in row order, then a UTF-8 JSON metadata trailer running to end of
 * file. Byte order is written explicitly so files parse bit-exactly on
 * the reading side regardless of host endianness.
 */

import { readFileSync, writeFileSync } from "fs";

export interface FeatureFile {
  n: number;
  d: number;
  /** Row-major n*d values. */
  rows: Float32Array;
  meta: Record<string, unknown>;
}

const MAGIC = "AFS1";
const HEADER_BYTES = 12;

export function encodeAfs1(
  rows: Float32Array,
  n: number,
  d: number,
  meta: Record<string, unknown> = {},
): Buffer {
  if (rows.length !== n * d) {
    throw new Error(`payload length ${rows.length} does not match ${n}x${d}`);
  }
  const trailer = Buffer.from(stableJson(meta), "utf-8");
  const buf = Buffer.alloc(HEADER_BYTES + n * d * 4 + trailer.length);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(n, 4);
  buf.writeUInt32LE(d, 8);
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_BYTES, n * d * 4);
  for (let i = 0; i < rows.length; i++) {
    view.setFloat32(i * 4, rows[i], true);
  }
  trailer.copy(buf, HEADER_BYTES + n * d * 4);
  return buf;
}

export function writeAfs1(
  path: string,
  rows: Float32Array,
  n: number,
  d: number,
  meta: Record<string, unknown> = {},
): void {
  writeFileSync(path, encodeAfs1(rows, n, d, meta));
}

export function readAfs1(path: string): FeatureFile {
  const buf = readFileSync(path);
  if (buf.length < HEADER_BYTES || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${path} is not a feature file (bad magic)`);
  }
  const n = buf.readUInt32LE(4);
  const d = buf.readUInt32LE(8);
  const end = HEADER_BYTES + n * d * 4;
  if (buf.length < end) {
    throw new Error(`${path} truncated: header promises ${n} rows of ${d}`);
  }
  const rows = new Float32Array(n * d);
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_BYTES, n * d * 4);
  for (let i = 0; i < rows.length; i++) {
    rows[i] = view.getFloat32(i * 4, true);
  }
  const trailer = buf.toString("utf-8", end);
  const meta = trailer.length > 0 ? JSON.parse(trailer) : {};
  return { n, d, rows, meta };
}

/** JSON with recursively sorted keys: identical metadata, identical bytes. */
function stableJson(value: unknown): string {
  if (Array.isArray(value)) {
    return "[" + value.map(stableJson).join(",") + "]";
  }
  if (value !== null && typeof value === "object") {
    const obj = value as Record<string, unknown>;
    const parts = Object.keys(obj)
      .sort()
      .map((key) => JSON.stringify(key) + ":" + stableJson(obj[key]));
    return "{" + parts.join(",") + "}";
  }
  return JSON.stringify(value);
}
