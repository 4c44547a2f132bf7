/**
 * Pluggable image encoders producing fixed-dimension unit vectors.
 *
 * Encoders are looked up by name; the default is a deterministic
 * pixel-statistics encoder that runs entirely offline. A learned encoder
 * (e.g. a CLIP-class vision model) can be registered under its own name
 * without changing the file format or any consumer: the retrieval side
 * depends only on the PVEB contract, never on which encoder produced the
 * vectors.
 */

import { RgbaImage, standardPreprocess } from './image.js';

export interface ImageEncoder {
  readonly name: string;
  readonly dimension: number;
  /** Preprocessing parameters recorded in the output file's metadata. */
  readonly preprocessing: Record<string, unknown>;
  encode(img: RgbaImage): Float32Array;
}

const RESIZE_TO = 256;
const CROP_TO = 224;
const GRID = 8; // 8x8 patches over the 224x224 crop
const HIST_BINS = 64;

/**
 * Deterministic 512-d encoder from pooled patch statistics.
 *
 * Features over the 224x224 center crop: per-patch RGB means (192),
 * per-patch luminance mean/std (128), per-patch mean |dx| and |dy|
 * luminance gradients (128), and a 64-bin global luminance histogram.
 * Pooling makes the vector stable under single-pixel perturbations while
 * identical pixels give bit-identical vectors.
 */
class PatchStatsEncoder implements ImageEncoder {
  readonly name = 'patch-stats-v1';
  readonly dimension = 512;
  readonly preprocessing = {
    resize_shorter_side: RESIZE_TO,
    center_crop: CROP_TO,
    interpolation: 'bilinear',
    grid: GRID,
    histogram_bins: HIST_BINS,
  };

  encode(img: RgbaImage): Float32Array {
    const crop = standardPreprocess(img, RESIZE_TO, CROP_TO);
    const size = CROP_TO;
    const luma = new Float64Array(size * size);
    for (let i = 0; i < size * size; i++) {
      const r = crop.data[i * 4];
      const g = crop.data[i * 4 + 1];
      const b = crop.data[i * 4 + 2];
      luma[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
    }

    const patch = size / GRID;
    const features: number[] = [];

    // Per-patch RGB means.
    for (let py = 0; py < GRID; py++) {
      for (let px = 0; px < GRID; px++) {
        let sr = 0;
        let sg = 0;
        let sb = 0;
        for (let y = py * patch; y < (py + 1) * patch; y++) {
          for (let x = px * patch; x < (px + 1) * patch; x++) {
            const o = (y * size + x) * 4;
            sr += crop.data[o];
            sg += crop.data[o + 1];
            sb += crop.data[o + 2];
          }
        }
        const n = patch * patch * 255;
        features.push(sr / n, sg / n, sb / n);
      }
    }

    // Per-patch luminance mean and standard deviation.
    for (let py = 0; py < GRID; py++) {
      for (let px = 0; px < GRID; px++) {
        let sum = 0;
        let sumSq = 0;
        for (let y = py * patch; y < (py + 1) * patch; y++) {
          for (let x = px * patch; x < (px + 1) * patch; x++) {
            const v = luma[y * size + x];
            sum += v;
            sumSq += v * v;
          }
        }
        const n = patch * patch;
        const mean = sum / n;
        features.push(mean);
        features.push(Math.sqrt(Math.max(sumSq / n - mean * mean, 0)));
      }
    }

    // Per-patch mean absolute luminance gradients.
    for (let py = 0; py < GRID; py++) {
      for (let px = 0; px < GRID; px++) {
        let sx = 0;
        let sy = 0;
        for (let y = py * patch; y < (py + 1) * patch; y++) {
          for (let x = px * patch; x < (px + 1) * patch; x++) {
            const here = luma[y * size + x];
            if (x + 1 < size) sx += Math.abs(luma[y * size + x + 1] - here);
            if (y + 1 < size) sy += Math.abs(luma[(y + 1) * size + x] - here);
          }
        }
        const n = patch * patch;
        features.push(sx / n, sy / n);
      }
    }

    // Global luminance histogram.
    const hist = new Float64Array(HIST_BINS);
    for (let i = 0; i < size * size; i++) {
      const bin = Math.min(Math.floor(luma[i] * HIST_BINS), HIST_BINS - 1);
      hist[bin] += 1;
    }
    for (let b = 0; b < HIST_BINS; b++) {
      features.push(hist[b] / (size * size));
    }

    if (features.length !== this.dimension) {
      throw new Error(
        `encoder produced ${features.length} features, expected ${this.dimension}`,
      );
    }
    return normalizeToFloat32(features);
  }
}

function normalizeToFloat32(values: number[]): Float32Array {
  let normSq = 0;
  for (const v of values) normSq += v * v;
  const norm = Math.sqrt(normSq);
  if (norm === 0) {
    throw new Error('encoder produced a zero feature vector');
  }
  const out = new Float32Array(values.length);
  for (let i = 0; i < values.length; i++) out[i] = values[i] / norm;
  return out;
}

const REGISTRY = new Map<string, () => ImageEncoder>([
  ['patch-stats-v1', () => new PatchStatsEncoder()],
]);

export const DEFAULT_ENCODER = 'patch-stats-v1';

export function createEncoder(name: string = DEFAULT_ENCODER): ImageEncoder {
  const factory = REGISTRY.get(name);
  if (!factory) {
    const known = [...REGISTRY.keys()].join(', ');
    throw new Error(`unknown encoder ${JSON.stringify(name)}; available: ${known}`);
  }
  return factory();
}

export function registerEncoder(name: string, factory: () => ImageEncoder): void {
  REGISTRY.set(name, factory);
}
