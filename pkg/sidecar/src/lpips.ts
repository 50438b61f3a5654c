/**
 * Perceptual pair scoring without a pretrained network.
 *
 * Both images are resized to a common 64x64 grid and compared at four
 * pyramid levels (64/32/16/8); at each level the channels are
 * normalized to zero mean and unit variance before a mean squared
 * difference, and the level average is the score. Identical inputs
 * score exactly 0 and the formula is symmetric in its arguments.
 */

import { Raster, resizeBilinear } from "./png";

export const LPIPS_BACKBONE = "multiscale-normalized-difference/v1";
export const LPIPS_SIZE = 64;

const PYRAMID_LEVELS = 4;
const VARIANCE_FLOOR = 1e-12;

function halve(img: Raster): Raster {
  const width = Math.max(1, img.width >> 1);
  const height = Math.max(1, img.height >> 1);
  const out = new Float64Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    const y1 = Math.min(2 * y + 1, img.height - 1);
    for (let x = 0; x < width; x++) {
      const x1 = Math.min(2 * x + 1, img.width - 1);
      for (let c = 0; c < 3; c++) {
        out[(y * width + x) * 3 + c] =
          (img.rgb[(2 * y * img.width + 2 * x) * 3 + c] +
            img.rgb[(2 * y * img.width + x1) * 3 + c] +
            img.rgb[(y1 * img.width + 2 * x) * 3 + c] +
            img.rgb[(y1 * img.width + x1) * 3 + c]) /
          4;
      }
    }
  }
  return { width, height, rgb: out };
}

function normalized(img: Raster): Float64Array {
  const pixels = img.width * img.height;
  const out = new Float64Array(pixels * 3);
  for (let c = 0; c < 3; c++) {
    let mean = 0;
    for (let i = 0; i < pixels; i++) {
      mean += img.rgb[i * 3 + c];
    }
    mean /= pixels;
    let variance = 0;
    for (let i = 0; i < pixels; i++) {
      const dev = img.rgb[i * 3 + c] - mean;
      variance += dev * dev;
    }
    variance /= pixels;
    const scale = 1 / Math.sqrt(variance + VARIANCE_FLOOR);
    for (let i = 0; i < pixels; i++) {
      out[i * 3 + c] = (img.rgb[i * 3 + c] - mean) * scale;
    }
  }
  return out;
}

export function lpipsScore(a: Raster, b: Raster): number {
  let left = resizeBilinear(a, LPIPS_SIZE, LPIPS_SIZE);
  let right = resizeBilinear(b, LPIPS_SIZE, LPIPS_SIZE);
  let total = 0;
  for (let level = 0; level < PYRAMID_LEVELS; level++) {
    if (level > 0) {
      left = halve(left);
      right = halve(right);
    }
    const na = normalized(left);
    const nb = normalized(right);
    let sum = 0;
    for (let i = 0; i < na.length; i++) {
      const diff = na[i] - nb[i];
      sum += diff * diff;
    }
    total += sum / na.length;
  }
  return total / PYRAMID_LEVELS;
}
