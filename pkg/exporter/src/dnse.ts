/**
 * DNSE binary dense-feature files.
 *
 * Layout: magic 'DNSE', version 0x01, kind byte, u32-LE dim, u32-LE count,
 * then per record u16-LE key length, UTF-8 key, dim float32-LE. Keys are
 * strictly ascending bytewise. The writer output is byte-identical to the
 * engine's for the same records.
 */

import { DnseFormatError, DataError } from "./errors.js";

export const DNSE_MAGIC = "DNSE";
export const DNSE_VERSION = 1;

export type TableKind = "token-table" | "sentence-table";

const KIND_TO_BYTE: Record<TableKind, number> = {
  "token-table": 0x00,
  "sentence-table": 0x01,
};

export interface DnseRecord {
  key: string;
  vec: Float32Array;
}

export function encodeDnse(kind: TableKind, dim: number, records: DnseRecord[]): Buffer {
  if (dim < 1) throw new RangeError(`dim must be >= 1, got ${dim}`);
  const sorted = records
    .map((rec) => ({ rec, kb: Buffer.from(rec.key, "utf-8") }))
    .sort((a, b) => Buffer.compare(a.kb, b.kb));

  const header = Buffer.alloc(14);
  header.write(DNSE_MAGIC, 0, "ascii");
  header[4] = DNSE_VERSION;
  header[5] = KIND_TO_BYTE[kind];
  header.writeUInt32LE(dim, 6);
  header.writeUInt32LE(sorted.length, 10);

  const chunks = [header];
  let prev: Buffer | null = null;
  for (const { rec, kb } of sorted) {
    if (kb.length > 0xffff) throw new DataError(`key too long: "${rec.key.slice(0, 40)}"...`);
    if (prev !== null && Buffer.compare(kb, prev) === 0) {
      throw new Error(`duplicate key "${rec.key}" reached the writer`);
    }
    prev = kb;
    if (rec.vec.length !== dim) {
      throw new RangeError(`vector for "${rec.key}" has ${rec.vec.length} components, expected ${dim}`);
    }
    const body = Buffer.alloc(2 + kb.length + 4 * dim);
    body.writeUInt16LE(kb.length, 0);
    kb.copy(body, 2);
    for (let i = 0; i < dim; i++) body.writeFloatLE(rec.vec[i], 2 + kb.length + 4 * i);
    chunks.push(body);
  }
  return Buffer.concat(chunks);
}

/** Parse and validate a DNSE payload; used by tests to close the loop. */
export function decodeDnse(data: Buffer): { kind: TableKind; dim: number; records: DnseRecord[] } {
  if (data.length < 14) throw new DnseFormatError("file too short for DNSE header");
  if (data.toString("ascii", 0, 4) !== DNSE_MAGIC) {
    throw new DnseFormatError(`bad magic ${JSON.stringify(data.toString("latin1", 0, 4))}`);
  }
  if (data[4] !== DNSE_VERSION) throw new DnseFormatError(`unsupported version ${data[4]}`);
  const kind = (Object.keys(KIND_TO_BYTE) as TableKind[]).find((k) => KIND_TO_BYTE[k] === data[5]);
  if (kind === undefined) throw new DnseFormatError(`unknown kind byte 0x${data[5].toString(16)}`);
  const dim = data.readUInt32LE(6);
  const count = data.readUInt32LE(10);
  if (dim < 1) throw new DnseFormatError(`bad dimension ${dim}`);

  const utf8 = new TextDecoder("utf-8", { fatal: true });
  const records: DnseRecord[] = [];
  let pos = 14;
  let prev: Buffer | null = null;
  for (let r = 0; r < count; r++) {
    if (pos + 2 > data.length) throw new DnseFormatError("truncated record header");
    const klen = data.readUInt16LE(pos);
    pos += 2;
    if (pos + klen + 4 * dim > data.length) throw new DnseFormatError("truncated record payload");
    const kb = data.subarray(pos, pos + klen);
    pos += klen;
    let key: string;
    try {
      key = utf8.decode(kb);
    } catch {
      throw new DnseFormatError(`key at offset ${pos - klen} is not UTF-8`);
    }
    if (prev !== null && Buffer.compare(kb, prev) <= 0) {
      throw new DnseFormatError(`keys not strictly ascending at "${key}"`);
    }
    prev = Buffer.from(kb);
    const vec = new Float32Array(dim);
    for (let i = 0; i < dim; i++) vec[i] = data.readFloatLE(pos + 4 * i);
    pos += 4 * dim;
    records.push({ key, vec });
  }
  if (pos !== data.length) {
    throw new DnseFormatError(`${data.length - pos} trailing bytes after ${count} records`);
  }
  return { kind, dim, records };
}
