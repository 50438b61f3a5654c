/**
 * Deterministic pooled feature extraction.
 *
 * Stand-in for a pretrained pooled-feature backbone: each image is
 * resized to 64x64, summarized by per-cell color means and gradient
 * energies on 1/2/4/8 grids, and the 510-value descriptor is lifted to
 * 2048 dimensions through a fixed seeded projection bank with a tanh
 * nonlinearity. Every step is plain IEEE arithmetic in a fixed order,
 * so the same input bytes always produce the same feature row.
 */

import { ALPHA_POLICY, loadRaster, Raster, resizeBilinear, RESIZE_POLICY } from "./png";

export const EXTRACTOR_TAG = "pooled-proj-2048/v1";
export const FEATURE_DIM = 2048;
export const NATIVE_SIZE = 64;

const GRID_SIZES = [1, 2, 4, 8];
const STATS_PER_CELL = 2;
const DESCRIPTOR_DIM =
  GRID_SIZES.reduce((total, g) => total + g * g, 0) * 3 * STATS_PER_CELL;
const PROJECTION_SEED = 0x9e3779b9;

// xorshift32 (shifts 13/17/5), mapped to [0, 1) by dividing by 2^32
function xorshift32(seed: number): () => number {
  let state = seed >>> 0;
  if (state === 0) {
    state = 1;
  }
  return () => {
    state ^= state << 13;
    state >>>= 0;
    state ^= state >>> 17;
    state ^= state << 5;
    state >>>= 0;
    return state / 4294967296;
  };
}

let bank: Float64Array | null = null;

function projectionBank(): Float64Array {
  if (bank === null) {
    const next = xorshift32(PROJECTION_SEED);
    bank = new Float64Array(FEATURE_DIM * DESCRIPTOR_DIM);
    for (let i = 0; i < bank.length; i++) {
      bank[i] = next() * 2 - 1;
    }
  }
  return bank;
}

function gradientMagnitude(img: Raster): Float64Array {
  const { width, height, rgb } = img;
  const grad = new Float64Array(rgb.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const right = Math.min(x + 1, width - 1);
      const down = Math.min(y + 1, height - 1);
      for (let c = 0; c < 3; c++) {
        const here = rgb[(y * width + x) * 3 + c];
        grad[(y * width + x) * 3 + c] =
          Math.abs(rgb[(y * width + right) * 3 + c] - here) +
          Math.abs(rgb[(down * width + x) * 3 + c] - here);
      }
    }
  }
  return grad;
}

/** Pyramid of per-cell color means (centered) and mean gradient energies. */
export function describe(img: Raster): Float64Array {
  const resized = resizeBilinear(img, NATIVE_SIZE, NATIVE_SIZE);
  const grad = gradientMagnitude(resized);
  const desc = new Float64Array(DESCRIPTOR_DIM);
  let k = 0;
  for (const g of GRID_SIZES) {
    const cell = NATIVE_SIZE / g;
    for (let cy = 0; cy < g; cy++) {
      for (let cx = 0; cx < g; cx++) {
        for (let c = 0; c < 3; c++) {
          let sumValue = 0;
          let sumGrad = 0;
          for (let y = cy * cell; y < (cy + 1) * cell; y++) {
            for (let x = cx * cell; x < (cx + 1) * cell; x++) {
              sumValue += resized.rgb[(y * NATIVE_SIZE + x) * 3 + c];
              sumGrad += grad[(y * NATIVE_SIZE + x) * 3 + c];
            }
          }
          const area = cell * cell;
          desc[k++] = sumValue / area - 0.5;
          desc[k++] = sumGrad / area;
        }
      }
    }
  }
  return desc;
}

/** One 2048-D feature row for an already decoded image. */
export function featureRow(img: Raster): Float64Array {
  const desc = describe(img);
  const weights = projectionBank();
  const row = new Float64Array(FEATURE_DIM);
  const scale = 1 / Math.sqrt(DESCRIPTOR_DIM);
  for (let j = 0; j < FEATURE_DIM; j++) {
    let dot = 0;
    const base = j * DESCRIPTOR_DIM;
    for (let i = 0; i < DESCRIPTOR_DIM; i++) {
      dot += weights[base + i] * desc[i];
    }
    row[j] = Math.tanh(dot * scale);
  }
  return row;
}

export function extractFeatures(paths: string[]): Float32Array {
  const rows = new Float32Array(paths.length * FEATURE_DIM);
  for (let i = 0; i < paths.length; i++) {
    rows.set(featureRow(loadRaster(paths[i])), i * FEATURE_DIM);
  }
  return rows;
}

export function extractorMetadata(count: number): Record<string, unknown> {
  return {
    extractor: EXTRACTOR_TAG,
    dim: FEATURE_DIM,
    count,
    backbone: "seeded-projection-bank/v1 (no pretrained network)",
    resize: `${RESIZE_POLICY}-${NATIVE_SIZE}x${NATIVE_SIZE}`,
    alpha: ALPHA_POLICY,
  };
}
