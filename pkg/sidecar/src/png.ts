/**
 * PNG decoding and resampling for the feature tools.
 *
 * Images decode through pngjs, which normalizes every color type to
 * 8-bit RGBA (16-bit inputs are rescaled by the decoder). Alpha is
 * composited over mid-gray 0.5 so translucent and opaque pixels land in
 * a common RGB space; resampling is bilinear with pixel-center
 * alignment. Both policies are recorded in output metadata by callers.
 */

import { readFileSync } from "fs";
import { PNG } from "pngjs";

export interface Raster {
  width: number;
  height: number;
  /** Interleaved [r, g, b] per pixel, values in [0, 1], alpha composited. */
  rgb: Float64Array;
}

export const ALPHA_POLICY = "composite-over-gray-0.5";
export const RESIZE_POLICY = "bilinear";

export function loadRaster(path: string): Raster {
  let png: PNG;
  try {
    png = PNG.sync.read(readFileSync(path));
  } catch (err) {
    throw new Error(`cannot read image ${path}: ${(err as Error).message}`);
  }
  const { width, height, data } = png;
  if (width === 0 || height === 0) {
    throw new Error(`image ${path} has a zero dimension`);
  }
  const rgb = new Float64Array(width * height * 3);
  for (let i = 0, p = 0; i < width * height; i++, p += 4) {
    const a = data[p + 3] / 255;
    for (let c = 0; c < 3; c++) {
      rgb[i * 3 + c] = (data[p + c] / 255) * a + 0.5 * (1 - a);
    }
  }
  return { width, height, rgb };
}

/** Bilinear resample with source coordinates mapped through pixel centers. */
export function resizeBilinear(src: Raster, width: number, height: number): Raster {
  if (width <= 0 || height <= 0) {
    throw new Error(`bad target size ${width}x${height}`);
  }
  if (width === src.width && height === src.height) {
    return { width, height, rgb: src.rgb.slice() };
  }
  const out = new Float64Array(width * height * 3);
  const xScale = src.width / width;
  const yScale = src.height / height;
  for (let y = 0; y < height; y++) {
    const sy = Math.min(Math.max((y + 0.5) * yScale - 0.5, 0), src.height - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, src.height - 1);
    const fy = sy - y0;
    for (let x = 0; x < width; x++) {
      const sx = Math.min(Math.max((x + 0.5) * xScale - 0.5, 0), src.width - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, src.width - 1);
      const fx = sx - x0;
      for (let c = 0; c < 3; c++) {
        const top =
          src.rgb[(y0 * src.width + x0) * 3 + c] * (1 - fx) +
          src.rgb[(y0 * src.width + x1) * 3 + c] * fx;
        const bottom =
          src.rgb[(y1 * src.width + x0) * 3 + c] * (1 - fx) +
          src.rgb[(y1 * src.width + x1) * 3 + c] * fx;
        out[(y * width + x) * 3 + c] = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return { width, height, rgb: out };
}
