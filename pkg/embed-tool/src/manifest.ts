/** Minimal reader for the dataset manifest CSV (RFC 4180 quoting). */

import { readFileSync } from 'fs';

export const MANIFEST_COLUMNS = [
  'id',
  'city',
  'continent',
  'split',
  'presence',
  'quantity',
  'location',
  'explanation',
  'embedding_ref',
  'image_ref',
] as const;

export interface ManifestRow {
  id: string;
  embeddingRef: string;
  imageRef: string;
}

function parseCsv(text: string): string[][] {
  const rows: string[][] = [];
  let row: string[] = [];
  let field = '';
  let inQuotes = false;
  let i = 0;
  const pushField = () => {
    row.push(field);
    field = '';
  };
  const pushRow = () => {
    pushField();
    rows.push(row);
    row = [];
  };
  while (i < text.length) {
    const ch = text[i];
    if (inQuotes) {
      if (ch === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i += 2;
          continue;
        }
        inQuotes = false;
        i++;
        continue;
      }
      field += ch;
      i++;
      continue;
    }
    if (ch === '"') {
      inQuotes = true;
      i++;
    } else if (ch === ',') {
      pushField();
      i++;
    } else if (ch === '\r') {
      i++;
    } else if (ch === '\n') {
      pushRow();
      i++;
    } else {
      field += ch;
      i++;
    }
  }
  if (field.length > 0 || row.length > 0) {
    pushRow();
  }
  return rows.filter((r) => !(r.length === 1 && r[0] === ''));
}

export function readManifest(path: string): ManifestRow[] {
  const rows = parseCsv(readFileSync(path, 'utf-8'));
  if (rows.length === 0) {
    throw new Error(`${path}: empty manifest (missing header)`);
  }
  const header = rows[0].map((h) => h.trim());
  if (header.join(',') !== MANIFEST_COLUMNS.join(',')) {
    throw new Error(`${path}: header must be ${MANIFEST_COLUMNS.join(',')}`);
  }
  const out: ManifestRow[] = [];
  const seen = new Set<string>();
  for (let r = 1; r < rows.length; r++) {
    const cells = rows[r];
    if (cells.length !== MANIFEST_COLUMNS.length) {
      throw new Error(
        `${path}: line ${r + 1}: expected ${MANIFEST_COLUMNS.length} columns, found ${cells.length}`,
      );
    }
    const id = cells[0].trim();
    if (!id) {
      throw new Error(`${path}: line ${r + 1}: empty id`);
    }
    if (seen.has(id)) {
      throw new Error(`${path}: line ${r + 1}: duplicate id ${JSON.stringify(id)}`);
    }
    seen.add(id);
    out.push({ id, embeddingRef: cells[8].trim(), imageRef: cells[9].trim() });
  }
  return out;
}
