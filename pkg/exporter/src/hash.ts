/**
 * Deterministic hash embedder, a bit-exact port of the engine's scheme so
 * files written here verify against vectors computed there.
 *
 * Per component i: FNV-1a-64 over key bytes ++ u64-LE seed ++ u64-LE i,
 * mapped to [-1, 1) via h * 2^-63 - 1, then L2-normalized. All intermediate
 * arithmetic is float64 with sequential accumulation; reassociating the sum
 * would break cross-runtime byte equality.
 */

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;
const U64_MASK = 0xffffffffffffffffn;

export function fnv1a64(data: Uint8Array): bigint {
  let h = FNV_OFFSET;
  for (const b of data) {
    h ^= BigInt(b);
    h = (h * FNV_PRIME) & U64_MASK;
  }
  return h;
}

export function hashEmbed(key: string, dim: number, seed: number): Float32Array {
  if (dim < 1) throw new RangeError(`dim must be >= 1, got ${dim}`);
  const keyBytes = new TextEncoder().encode(key);
  const buf = new Uint8Array(keyBytes.length + 16);
  buf.set(keyBytes);
  const view = new DataView(buf.buffer);
  view.setBigUint64(keyBytes.length, BigInt(seed) & U64_MASK, true);

  const vals = new Float64Array(dim);
  for (let i = 0; i < dim; i++) {
    view.setBigUint64(keyBytes.length + 8, BigInt(i), true);
    // Number(bigint) rounds half-even, same as the engine's float(h).
    vals[i] = Number(fnv1a64(buf)) * 2 ** -63 - 1;
  }
  let acc = 0;
  for (let i = 0; i < dim; i++) acc += vals[i] * vals[i];
  const norm = Math.sqrt(acc);
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) out[i] = Math.fround(vals[i] / norm);
  return out;
}
