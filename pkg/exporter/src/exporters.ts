/**
 * Export operations. Each reads its inputs, builds a DNSE payload, and
 * returns the payload together with a manifest describing what went in.
 */

import { createHash } from "node:crypto";

import { readDataset, readTextFile } from "./dataset.js";
import { DnseRecord, TableKind, encodeDnse } from "./dnse.js";
import { getEncoder } from "./encoders.js";
import { hashEmbed } from "./hash.js";
import { normalizeKey, tokenize } from "./text.js";

export interface ExportManifest {
  source: string;
  kind: "token" | "sentence";
  dim: number;
  key_count: number;
  content_hash: string;
}

export interface ExportResult {
  manifest: ExportManifest;
  payload: Buffer;
  warnings: string[];
}

function finish(
  source: string,
  kind: "token" | "sentence",
  dim: number,
  records: DnseRecord[],
  warnings: string[],
): ExportResult {
  const tableKind: TableKind = kind === "sentence" ? "sentence-table" : "token-table";
  const payload = encodeDnse(tableKind, dim, records);
  const manifest: ExportManifest = {
    source,
    kind,
    dim,
    key_count: records.length,
    content_hash: createHash("sha256").update(payload).digest("hex"),
  };
  return { manifest, payload, warnings };
}

/**
 * One unit vector per distinct normalized key in the keys file, computed by
 * the engine's hash scheme. Blank lines and keys that normalize to nothing
 * are skipped; an empty file yields a valid file with zero records.
 */
export function exportHashEmbeddings(keysPath: string, dim: number, seed: number): ExportResult {
  const keys = new Set<string>();
  for (const line of readTextFile(keysPath, "keys file").split("\n")) {
    const key = normalizeKey(line);
    if (key) keys.add(key);
  }
  const records = [...keys].map((key) => ({ key, vec: hashEmbed(key, dim, seed) }));
  return finish(`hash:${dim}:${seed}`, "token", dim, records, []);
}

/**
 * One record per distinct normalized utterance text. Distinct utterances
 * that collapse onto one key are reported as warnings, since their lookup
 * vectors become indistinguishable.
 */
export function exportSentenceEmbeddings(dataPath: string, encoderId: string): ExportResult {
  const encoder = getEncoder(encoderId);
  const counts = new Map<string, number>();
  const warnings: string[] = [];
  for (const row of readDataset(dataPath)) {
    const key = normalizeKey(row.text);
    if (!key) {
      warnings.push(`skipping utterance "${row.id}": text normalizes to nothing`);
      continue;
    }
    counts.set(key, (counts.get(key) ?? 0) + 1);
  }
  for (const [key, n] of counts) {
    if (n > 1) warnings.push(`${n} utterances collapse to key "${key}"`);
  }
  const records = [...counts.keys()].map((key) => ({ key, vec: encoder.encode(key) }));
  return finish(encoderId, "sentence", encoder.dim, records, warnings);
}

/** One record per distinct token under the engine's tokenization contract. */
export function exportTokenEmbeddings(dataPath: string, encoderId: string): ExportResult {
  const encoder = getEncoder(encoderId);
  const tokens = new Set<string>();
  for (const row of readDataset(dataPath)) {
    for (const tok of tokenize(row.text)) tokens.add(tok);
  }
  const records = [...tokens].map((key) => ({ key, vec: encoder.encode(key) }));
  return finish(encoderId, "token", encoder.dim, records, []);
}
