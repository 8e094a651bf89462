import { describe, expect, it } from "vitest";

import { fnv1a64, hashEmbed } from "../src/hash.js";

// hash_embed("yes", 8, 42) from the engine, float32-LE bytes.
const YES_8_42_HEX = "6768e7bd1dc0163d553ed3be378c86be5ceef83e0b131abf42143f3e3e3cac3e";

function toHex(vec: Float32Array): string {
  const buf = Buffer.alloc(4 * vec.length);
  for (let i = 0; i < vec.length; i++) buf.writeFloatLE(vec[i], 4 * i);
  return buf.toString("hex");
}

describe("fnv1a64", () => {
  it("matches the published test vectors", () => {
    expect(fnv1a64(new Uint8Array(0))).toBe(0xcbf29ce484222325n);
    expect(fnv1a64(new TextEncoder().encode("a"))).toBe(0xaf63dc4c8601ec8cn);
  });
});

describe("hashEmbed", () => {
  it("reproduces the engine vector bit for bit", () => {
    expect(toHex(hashEmbed("yes", 8, 42))).toBe(YES_8_42_HEX);
  });

  it("is deterministic", () => {
    expect(hashEmbed("garden", 16, 3)).toEqual(hashEmbed("garden", 16, 3));
  });

  it("is sensitive to key and seed", () => {
    expect(toHex(hashEmbed("yes", 8, 42))).not.toBe(toHex(hashEmbed("no", 8, 42)));
    expect(toHex(hashEmbed("yes", 8, 42))).not.toBe(toHex(hashEmbed("yes", 8, 43)));
  });

  it("emits unit vectors", () => {
    for (const key of ["yes", "no", "café time", "soil sample", "a"]) {
      const vec = hashEmbed(key, 12, 7);
      let sq = 0;
      for (const v of vec) sq += v * v;
      expect(Math.abs(sq - 1)).toBeLessThan(1e-6);
    }
  });

  it("normalizes a single component to exactly +-1", () => {
    for (const key of ["yes", "no", "zig", "zag"]) {
      expect(Math.abs(hashEmbed(key, 1, 0)[0])).toBe(1);
    }
  });

  it("rejects non-positive dim", () => {
    expect(() => hashEmbed("yes", 0, 0)).toThrow(RangeError);
  });
});
