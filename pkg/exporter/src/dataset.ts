/** JSONL corpus reading: one utterance object per line, same as the engine. */

import { readFileSync } from "node:fs";

import { DataError } from "./errors.js";

export interface UtteranceRow {
  id: string;
  text: string;
  intent: string;
}

export function readTextFile(path: string, what: string): string {
  try {
    return readFileSync(path, "utf-8");
  } catch (e) {
    const code = (e as NodeJS.ErrnoException).code;
    if (code === "ENOENT" || code === "EISDIR" || code === "ENOTDIR") {
      throw new DataError(`cannot read ${what}: ${path}`);
    }
    throw e;
  }
}

export function readDataset(path: string): UtteranceRow[] {
  const rows: UtteranceRow[] = [];
  const lines = readTextFile(path, "dataset").split("\n");
  for (let n = 0; n < lines.length; n++) {
    if (!lines[n].trim()) continue;
    let obj: unknown;
    try {
      obj = JSON.parse(lines[n]);
    } catch {
      throw new DataError(`${path}: line ${n + 1} is not valid JSON`);
    }
    const row = obj as Record<string, unknown>;
    for (const field of ["id", "text", "intent"] as const) {
      if (typeof row[field] !== "string") {
        throw new DataError(`${path}: line ${n + 1} is missing string field "${field}"`);
      }
    }
    rows.push({ id: row.id as string, text: row.text as string, intent: row.intent as string });
  }
  return rows;
}
