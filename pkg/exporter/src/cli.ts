/**
 * Command line entry: `export` writes a DNSE dense-feature file and prints
 * its manifest as JSON.
 *
 *   export --data fix.jsonl --kind sentence|token --encoder toy-ngram --out s.dnse
 *   export --hash --keys keys.txt --dim 8 --seed 3 --out h.dnse
 *
 * Exit codes follow the engine convention: 0 success, 1 usage error,
 * 2 unreadable or malformed data.
 */

import { writeFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { DataError, UsageError } from "./errors.js";
import {
  ExportResult,
  exportHashEmbeddings,
  exportSentenceEmbeddings,
  exportTokenEmbeddings,
} from "./exporters.js";

const USAGE = `usage:
  export --data PATH --kind sentence|token --encoder ID --out PATH
  export --hash --keys PATH --dim D --seed S --out PATH`;

function intFlag(name: string, value: string | undefined, min: number): number {
  if (value === undefined) throw new UsageError(`--${name} is required in hash mode`);
  const n = Number(value);
  if (!Number.isInteger(n) || n < min) {
    throw new UsageError(`--${name} must be an integer >= ${min}, got "${value}"`);
  }
  return n;
}

function runExport(argv: string[]): ExportResult & { outPath: string } {
  let values: Record<string, string | boolean | undefined>;
  let positionals: string[];
  try {
    ({ values, positionals } = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        hash: { type: "boolean", default: false },
        keys: { type: "string" },
        dim: { type: "string" },
        seed: { type: "string" },
        data: { type: "string" },
        kind: { type: "string" },
        encoder: { type: "string" },
        out: { type: "string" },
      },
    }));
  } catch (e) {
    throw new UsageError((e as Error).message);
  }
  if (positionals.length !== 1 || positionals[0] !== "export") {
    throw new UsageError('expected the "export" command');
  }
  const out = values.out as string | undefined;
  if (!out) throw new UsageError("--out is required");

  if (values.hash) {
    for (const flag of ["data", "kind", "encoder"] as const) {
      if (values[flag] !== undefined) throw new UsageError(`--${flag} cannot be combined with --hash`);
    }
    const keys = values.keys as string | undefined;
    if (!keys) throw new UsageError("--keys is required in hash mode");
    const dim = intFlag("dim", values.dim as string | undefined, 1);
    const seed = intFlag("seed", values.seed as string | undefined, 0);
    return { ...exportHashEmbeddings(keys, dim, seed), outPath: out };
  }

  for (const flag of ["keys", "dim", "seed"] as const) {
    if (values[flag] !== undefined) throw new UsageError(`--${flag} only applies to --hash mode`);
  }
  const data = values.data as string | undefined;
  if (!data) throw new UsageError("--data is required (or pass --hash)");
  const kind = values.kind as string | undefined;
  if (kind !== "sentence" && kind !== "token") {
    throw new UsageError('--kind must be "sentence" or "token"');
  }
  const encoder = values.encoder as string | undefined;
  if (!encoder) throw new UsageError("--encoder is required");
  const run = kind === "sentence" ? exportSentenceEmbeddings : exportTokenEmbeddings;
  return { ...run(data, encoder), outPath: out };
}

export function runCli(
  argv: string[],
  out: (line: string) => void,
  err: (line: string) => void,
): number {
  try {
    const result = runExport(argv);
    writeFileSync(result.outPath, result.payload);
    for (const w of result.warnings) err(`warning: ${w}`);
    out(JSON.stringify(result.manifest, null, 2));
    return 0;
  } catch (e) {
    if (e instanceof UsageError) {
      err(`error: ${e.message}`);
      err(USAGE);
      return 1;
    }
    if (e instanceof DataError) {
      err(`error: ${e.message}`);
      return 2;
    }
    throw e;
  }
}

const invoked = process.argv[1];
if (invoked && import.meta.url === pathToFileURL(invoked).href) {
  process.exit(runCli(process.argv.slice(2), console.log, console.error));
}
