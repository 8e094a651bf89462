/**
 * Local encoders behind a string id. Real pretrained encoders plug in here;
 * the character n-gram hash encoder ships as a dependency-free default whose
 * outputs are stable across runs and platforms.
 */

import { UsageError } from "./errors.js";
import { hashEmbed } from "./hash.js";

export interface Encoder {
  id: string;
  dim: number;
  encode(text: string): Float32Array;
}

const TOY_NGRAM_DIM = 16;
const TOY_NGRAM_SEED = 257;

/** Sum of hash embeddings over padded character trigrams, L2 normalized. */
function toyNgramEncoder(): Encoder {
  return {
    id: "toy-ngram",
    dim: TOY_NGRAM_DIM,
    encode(text: string): Float32Array {
      const padded = `^${text}$`;
      if (padded.length < 3) return hashEmbed(padded, TOY_NGRAM_DIM, TOY_NGRAM_SEED);
      const acc = new Float64Array(TOY_NGRAM_DIM);
      for (let i = 0; i + 3 <= padded.length; i++) {
        const gram = hashEmbed(padded.slice(i, i + 3), TOY_NGRAM_DIM, TOY_NGRAM_SEED);
        for (let j = 0; j < TOY_NGRAM_DIM; j++) acc[j] += gram[j];
      }
      let sq = 0;
      for (let j = 0; j < TOY_NGRAM_DIM; j++) sq += acc[j] * acc[j];
      const norm = Math.sqrt(sq);
      const out = new Float32Array(TOY_NGRAM_DIM);
      if (norm === 0) return out;
      for (let j = 0; j < TOY_NGRAM_DIM; j++) out[j] = Math.fround(acc[j] / norm);
      return out;
    },
  };
}

export function getEncoder(id: string): Encoder {
  if (id === "toy-ngram") return toyNgramEncoder();
  throw new UsageError(`unknown encoder "${id}" (available: toy-ngram)`);
}
