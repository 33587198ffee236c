/**
 * Figure rendering CLI: --input <csv> --family <tag> --out <png|svg>.
 *
 * Exit codes: 0 success, 1 schema/usage error, 2 I/O failure.
 */

import { FAMILIES, FigureFamily, SchemaError } from "./csv.js";
import { render } from "./render.js";

interface Args {
  input: string;
  family: FigureFamily;
  out: string;
  width?: number;
  height?: number;
}

export function parseArgs(argv: string[]): Args {
  const values = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith("--") || value === undefined) {
      throw new Error(`usage: --input <csv> --family <tag> --out <png> (bad '${flag}')`);
    }
    values.set(flag.slice(2), value);
  }
  const input = values.get("input");
  const family = values.get("family");
  const out = values.get("out");
  if (!input || !family || !out) {
    throw new Error("usage: --input <csv> --family <tag> --out <png>");
  }
  if (!FAMILIES.includes(family as FigureFamily)) {
    throw new Error(`--family must be one of ${FAMILIES.join(", ")}; got '${family}'`);
  }
  const args: Args = { input, family: family as FigureFamily, out };
  const width = values.get("width");
  const height = values.get("height");
  if (width !== undefined) args.width = Number(width);
  if (height !== undefined) args.height = Number(height);
  return args;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error((err as Error).message);
    return 1;
  }
  try {
    const bytes = render(args);
    console.log(`wrote ${args.out} (${bytes.length} bytes)`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${(err as Error).message}`);
      return 1;
    }
    console.error(`render failed: ${(err as Error).message}`);
    return 2;
  }
}

const isDirectRun =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isDirectRun) {
  process.exit(main(process.argv.slice(2)));
}
