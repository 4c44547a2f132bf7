/** Image decoding (PNG/JPEG) and the standard resize / center-crop step. */

import { readFileSync } from 'fs';
import * as path from 'path';
import { PNG } from 'pngjs';
import jpeg from 'jpeg-js';

export interface RgbaImage {
  width: number;
  height: number;
  /** RGBA, row-major, 4 bytes per pixel. */
  data: Uint8Array;
}

export function decodeImage(filePath: string): RgbaImage {
  let raw: Buffer;
  try {
    raw = readFileSync(filePath);
  } catch (err) {
    throw new Error(`unreadable image ${filePath}: ${(err as Error).message}`);
  }
  const ext = path.extname(filePath).toLowerCase();
  try {
    if (ext === '.png') {
      const png = PNG.sync.read(raw);
      return { width: png.width, height: png.height, data: new Uint8Array(png.data) };
    }
    if (ext === '.jpg' || ext === '.jpeg') {
      const img = jpeg.decode(raw, { useTArray: true, formatAsRGBA: true });
      return { width: img.width, height: img.height, data: new Uint8Array(img.data) };
    }
  } catch (err) {
    throw new Error(`unreadable image ${filePath}: ${(err as Error).message}`);
  }
  throw new Error(`unreadable image ${filePath}: unsupported extension ${ext || '(none)'}`);
}

/** Bilinear resize; deterministic double-precision arithmetic. */
export function resizeBilinear(img: RgbaImage, width: number, height: number): RgbaImage {
  const out = new Uint8Array(width * height * 4);
  const xRatio = img.width / width;
  const yRatio = img.height / height;
  for (let y = 0; y < height; y++) {
    const srcY = Math.min((y + 0.5) * yRatio - 0.5, img.height - 1);
    const y0 = Math.max(Math.floor(srcY), 0);
    const y1 = Math.min(y0 + 1, img.height - 1);
    const wy = srcY - y0;
    for (let x = 0; x < width; x++) {
      const srcX = Math.min((x + 0.5) * xRatio - 0.5, img.width - 1);
      const x0 = Math.max(Math.floor(srcX), 0);
      const x1 = Math.min(x0 + 1, img.width - 1);
      const wx = srcX - x0;
      for (let c = 0; c < 4; c++) {
        const p00 = img.data[(y0 * img.width + x0) * 4 + c];
        const p01 = img.data[(y0 * img.width + x1) * 4 + c];
        const p10 = img.data[(y1 * img.width + x0) * 4 + c];
        const p11 = img.data[(y1 * img.width + x1) * 4 + c];
        const top = p00 * (1 - wx) + p01 * wx;
        const bottom = p10 * (1 - wx) + p11 * wx;
        out[(y * width + x) * 4 + c] = Math.round(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return { width, height, data: out };
}

export function centerCrop(img: RgbaImage, size: number): RgbaImage {
  if (img.width < size || img.height < size) {
    throw new Error(`cannot crop ${size}x${size} from ${img.width}x${img.height}`);
  }
  const left = Math.floor((img.width - size) / 2);
  const top = Math.floor((img.height - size) / 2);
  const out = new Uint8Array(size * size * 4);
  for (let y = 0; y < size; y++) {
    const srcStart = ((top + y) * img.width + left) * 4;
    out.set(img.data.subarray(srcStart, srcStart + size * 4), y * size * 4);
  }
  return { width: size, height: size, data: out };
}

/** Resize so the shorter side matches `resizeTo`, then center-crop a square. */
export function standardPreprocess(img: RgbaImage, resizeTo: number, cropTo: number): RgbaImage {
  const scale = resizeTo / Math.min(img.width, img.height);
  const width = Math.max(Math.round(img.width * scale), resizeTo);
  const height = Math.max(Math.round(img.height * scale), resizeTo);
  return centerCrop(resizeBilinear(img, width, height), cropTo);
}
