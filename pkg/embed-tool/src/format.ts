/**
 * PVEB embedding batch file format (little-endian throughout):
 *
 *   magic "PVEB" (4 ascii bytes)
 *   u16 format version (currently 1)
 *   u16 vector dimension
 *   u32 record count
 *   u16 metadata length + UTF-8 JSON metadata block
 *   per record: u16 id length + UTF-8 id, dimension * f32 vector
 *
 * The consumer is the retrieval index loader, which reads exactly this
 * layout; the metadata block records encoder and preprocessing parameters
 * for provenance.
 */

export const PVEB_MAGIC = 'PVEB';
export const FORMAT_VERSION = 1;

export interface EmbeddingRecord {
  id: string;
  vector: Float32Array;
}

export interface PvebContents {
  dimension: number;
  metadata: Record<string, unknown>;
  records: EmbeddingRecord[];
}

function u16(value: number): Buffer {
  const buf = Buffer.alloc(2);
  buf.writeUInt16LE(value, 0);
  return buf;
}

function u32(value: number): Buffer {
  const buf = Buffer.alloc(4);
  buf.writeUInt32LE(value, 0);
  return buf;
}

function lengthPrefixed(text: string): Buffer {
  const raw = Buffer.from(text, 'utf-8');
  if (raw.length > 0xffff) {
    throw new Error(`string field exceeds 65535 bytes: ${text.slice(0, 40)}...`);
  }
  return Buffer.concat([u16(raw.length), raw]);
}

export function encodePveb(
  records: EmbeddingRecord[],
  dimension: number,
  metadata: Record<string, unknown> = {},
): Buffer {
  const parts: Buffer[] = [
    Buffer.from(PVEB_MAGIC, 'ascii'),
    u16(FORMAT_VERSION),
    u16(dimension),
    u32(records.length),
    lengthPrefixed(JSON.stringify(metadata)),
  ];
  for (const record of records) {
    if (record.vector.length !== dimension) {
      throw new Error(
        `record ${record.id}: vector has dimension ${record.vector.length}, header says ${dimension}`,
      );
    }
    for (const value of record.vector) {
      if (!Number.isFinite(value)) {
        throw new Error(`record ${record.id}: vector contains a non-finite entry`);
      }
    }
    parts.push(lengthPrefixed(record.id));
    const vec = Buffer.alloc(dimension * 4);
    for (let i = 0; i < dimension; i++) {
      vec.writeFloatLE(record.vector[i], i * 4);
    }
    parts.push(vec);
  }
  return Buffer.concat(parts);
}

class Cursor {
  pos = 0;

  constructor(private readonly data: Buffer) {}

  take(n: number): Buffer {
    if (this.pos + n > this.data.length) {
      throw new Error(
        `truncated file at byte offset ${this.pos} (needed ${n} more bytes)`,
      );
    }
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u16(): number {
    return this.take(2).readUInt16LE(0);
  }

  u32(): number {
    return this.take(4).readUInt32LE(0);
  }

  string(): string {
    return this.take(this.u16()).toString('utf-8');
  }
}

/** Inverse of encodePveb, used for verification and tests. */
export function decodePveb(data: Buffer): PvebContents {
  const cur = new Cursor(data);
  const magic = cur.take(4).toString('ascii');
  if (magic !== PVEB_MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}, expected ${PVEB_MAGIC}`);
  }
  const version = cur.u16();
  if (version !== FORMAT_VERSION) {
    throw new Error(`unsupported format version ${version}`);
  }
  const dimension = cur.u16();
  const count = cur.u32();
  const metadata = JSON.parse(cur.string() || '{}') as Record<string, unknown>;
  const records: EmbeddingRecord[] = [];
  for (let r = 0; r < count; r++) {
    const id = cur.string();
    const raw = cur.take(dimension * 4);
    const vector = new Float32Array(dimension);
    for (let i = 0; i < dimension; i++) {
      vector[i] = raw.readFloatLE(i * 4);
    }
    records.push({ id, vector });
  }
  return { dimension, metadata, records };
}
