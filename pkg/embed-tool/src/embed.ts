/** Batch embedding: manifest + image directory -> PVEB file. */

import { existsSync, writeFileSync } from 'fs';
import * as path from 'path';

import { createEncoder } from './encoder.js';
import { EmbeddingRecord, encodePveb } from './format.js';
import { decodeImage } from './image.js';
import { readManifest } from './manifest.js';

const IMAGE_EXTENSIONS = ['.png', '.jpg', '.jpeg'];

export interface EmbedOptions {
  imagesDir: string;
  manifestPath: string;
  outPath: string;
  encoderName?: string;
}

export interface EmbedSummary {
  records: number;
  dimension: number;
  encoder: string;
  outPath: string;
}

function resolveImage(imagesDir: string, id: string, imageRef: string): string {
  if (imageRef) {
    const direct = path.isAbsolute(imageRef) ? imageRef : path.join(imagesDir, imageRef);
    if (existsSync(direct)) {
      return direct;
    }
    throw new Error(`record ${JSON.stringify(id)}: image not found at ${direct}`);
  }
  for (const ext of IMAGE_EXTENSIONS) {
    const candidate = path.join(imagesDir, id + ext);
    if (existsSync(candidate)) {
      return candidate;
    }
  }
  throw new Error(
    `record ${JSON.stringify(id)}: no image named ${id}(${IMAGE_EXTENSIONS.join('|')}) in ${imagesDir}`,
  );
}

/**
 * Encode every manifest record's image and write the batch file.
 *
 * Records are written in manifest order, keyed by the record's
 * embedding_ref (falling back to its id, matching how the index builder
 * looks embeddings up). Rows sharing an embedding_ref must resolve to the
 * same image file and are encoded once.
 */
export function embedDirectory(options: EmbedOptions): EmbedSummary {
  const encoder = createEncoder(options.encoderName);
  const rows = readManifest(options.manifestPath);
  const records: EmbeddingRecord[] = [];
  const writtenKeys = new Map<string, string>(); // key -> resolved image path
  for (const row of rows) {
    const key = row.embeddingRef || row.id;
    const imagePath = resolveImage(options.imagesDir, row.id, row.imageRef);
    const previous = writtenKeys.get(key);
    if (previous !== undefined) {
      if (previous !== imagePath) {
        throw new Error(
          `embedding key ${JSON.stringify(key)} maps to both ${previous} and ${imagePath}`,
        );
      }
      continue;
    }
    const vector = encoder.encode(decodeImage(imagePath));
    records.push({ id: key, vector });
    writtenKeys.set(key, imagePath);
  }
  const metadata = {
    encoder: encoder.name,
    dimension: encoder.dimension,
    normalized: 'l2',
    preprocessing: encoder.preprocessing,
  };
  writeFileSync(options.outPath, encodePveb(records, encoder.dimension, metadata));
  return {
    records: records.length,
    dimension: encoder.dimension,
    encoder: encoder.name,
    outPath: options.outPath,
  };
}
