import { mkdtempSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { PNG } from "pngjs";

export function seededRng(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s * 1664525 + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

export function makeTempDir(): string {
  return mkdtempSync(join(tmpdir(), "sidecar-test-"));
}

export interface PngOptions {
  alpha?: boolean;
  /** Write as color type 2 (RGB, no alpha channel in the file). */
  dropAlphaChannel?: boolean;
}

export function writeRandomPng(
  path: string,
  width: number,
  height: number,
  seed: number,
  options: PngOptions = {},
): void {
  const png = new PNG({ width, height });
  const next = seededRng(seed);
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4 + 0] = Math.floor(next() * 256);
    png.data[i * 4 + 1] = Math.floor(next() * 256);
    png.data[i * 4 + 2] = Math.floor(next() * 256);
    const a = options.alpha === false ? 255 : Math.floor(next() * 256);
    png.data[i * 4 + 3] = a;
  }
  const encodeOptions = options.dropAlphaChannel ? { colorType: 2 as const } : {};
  writeFileSync(path, PNG.sync.write(png, encodeOptions));
}

/** Horizontal ramp so there is gradient structure to react to. */
export function writeRampPng(path: string, width: number, height: number): void {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = y * width + x;
      const v = Math.floor((x / (width - 1)) * 255);
      png.data[i * 4 + 0] = v;
      png.data[i * 4 + 1] = 255 - v;
      png.data[i * 4 + 2] = 128;
      png.data[i * 4 + 3] = 255;
    }
  }
  writeFileSync(path, PNG.sync.write(png));
}

export function writeConstantPng(
  path: string,
  width: number,
  height: number,
  rgb: [number, number, number],
  alpha = 255,
): void {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4 + 0] = rgb[0];
    png.data[i * 4 + 1] = rgb[1];
    png.data[i * 4 + 2] = rgb[2];
    png.data[i * 4 + 3] = alpha;
  }
  writeFileSync(path, PNG.sync.write(png));
}
