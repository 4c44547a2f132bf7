import { mkdtempSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import * as path from 'path';
import { PNG } from 'pngjs';

import { MANIFEST_COLUMNS } from '../src/manifest.js';
import type { RgbaImage } from '../src/image.js';

export function tempDir(prefix = 'embed-test-'): string {
  return mkdtempSync(path.join(tmpdir(), prefix));
}

/** Deterministic structured test image: gradients plus a few rectangles. */
export function syntheticImage(width: number, height: number, variant = 0): RgbaImage {
  const data = new Uint8Array(width * height * 4);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const o = (y * width + x) * 4;
      data[o] = (x * 255 / width + variant * 37) % 256;
      data[o + 1] = (y * 255 / height + variant * 11) % 256;
      data[o + 2] = ((x + y) * 127 / (width + height) + variant * 53) % 256;
      data[o + 3] = 255;
    }
  }
  // A dark rectangle so the image has edges.
  const rx = Math.floor(width / 4) + variant;
  const ry = Math.floor(height / 4);
  for (let y = ry; y < ry + Math.floor(height / 5); y++) {
    for (let x = rx; x < rx + Math.floor(width / 5); x++) {
      const o = (y * width + x) * 4;
      data[o] = 20;
      data[o + 1] = 24;
      data[o + 2] = 30;
    }
  }
  return { width, height, data };
}

export function writePng(filePath: string, img: RgbaImage): void {
  const png = new PNG({ width: img.width, height: img.height });
  Buffer.from(img.data).copy(png.data);
  writeFileSync(filePath, PNG.sync.write(png));
}

export interface ManifestEntry {
  id: string;
  embeddingRef?: string;
  imageRef?: string;
}

export function writeManifestCsv(filePath: string, entries: ManifestEntry[]): void {
  const lines = [MANIFEST_COLUMNS.join(',')];
  for (const e of entries) {
    lines.push(
      [
        e.id,
        'Tempe',
        'North America',
        'reference',
        'false',
        'NA',
        'NA',
        '',
        e.embeddingRef ?? '',
        e.imageRef ?? '',
      ].join(','),
    );
  }
  writeFileSync(filePath, lines.join('\n') + '\n');
}

export function cosine(a: Float32Array, b: Float32Array): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / Math.sqrt(na * nb);
}

export function l2norm(v: Float32Array): number {
  let s = 0;
  for (const x of v) s += x * x;
  return Math.sqrt(s);
}

export function euclidean(a: Float32Array, b: Float32Array): number {
  let s = 0;
  for (let i = 0; i < a.length; i++) {
    const d = a[i] - b[i];
    s += d * d;
  }
  return Math.sqrt(s);
}
