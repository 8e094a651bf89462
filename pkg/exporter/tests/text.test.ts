import { describe, expect, it } from "vitest";

import { normalizeKey, tokenize } from "../src/text.js";

describe("normalizeKey", () => {
  it("lowercases and collapses ASCII whitespace", () => {
    expect(normalizeKey("COUNT the\tFlowers")).toBe("count the flowers");
    expect(normalizeKey("next  step")).toBe("next step");
    expect(normalizeKey("a\r\nb\fc\vd")).toBe("a b c d");
  });

  it("strips edges", () => {
    expect(normalizeKey("  padded  ")).toBe("padded");
    expect(normalizeKey("\t\n")).toBe("");
    expect(normalizeKey("")).toBe("");
  });

  it("folds both unicode normal forms onto NFC", () => {
    // "café" composed vs decomposed: same key either way.
    expect(normalizeKey("café")).toBe("café");
    expect(normalizeKey("café")).toBe("café");
    expect(normalizeKey("Café  TIME")).toBe("café time");
  });

  it("is idempotent", () => {
    for (const s of ["Yes", "  spaced  out  ", "Tab\there", "Über Ei", "MiXeD"]) {
      const once = normalizeKey(s);
      expect(normalizeKey(once)).toBe(once);
    }
  });
});

describe("tokenize", () => {
  it("lowercases, splits, and strips edge punctuation", () => {
    expect(tokenize("okay, next step!")).toEqual(["okay", "next", "step"]);
    expect(tokenize("Count the Flowers")).toEqual(["count", "the", "flowers"]);
    expect(tokenize("soil\tsample")).toEqual(["soil", "sample"]);
  });

  it("keeps interior punctuation", () => {
    expect(tokenize("e^e f_f g-g")).toEqual(["e^e", "f_f", "g-g"]);
    expect(tokenize("'quoted' (l)")).toEqual(["quoted", "l"]);
  });

  it("drops punctuation-only words and empty input", () => {
    expect(tokenize("--- !!! ...")).toEqual([]);
    expect(tokenize("")).toEqual([]);
    expect(tokenize("   ")).toEqual([]);
  });

  it("does not renormalize code points", () => {
    // Engine tokens keep the input's unicode form; parity depends on it.
    expect(tokenize("Café time")).toEqual(["café", "time"]);
    expect(tokenize("Café time")).toEqual(["café", "time"]);
  });
});
