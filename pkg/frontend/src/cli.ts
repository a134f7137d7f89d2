import { readFileSync, writeFileSync } from "node:fs";

import { CHART_KINDS, renderChart } from "./charts";
import { SchemaError } from "./csv";

const USAGE = `usage: rvb-plots --kind <kind> --in <metrics csv> --out <svg file>
kinds: ${CHART_KINDS.join(", ")}`;

interface Args {
  kind: string;
  input: string;
  output: string;
}

function parseArgs(argv: string[]): Args {
  const values: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!["--kind", "--in", "--out"].includes(flag)) {
      throw new SchemaError(`unknown argument "${flag}"\n${USAGE}`);
    }
    if (value === undefined) {
      throw new SchemaError(`${flag} needs a value\n${USAGE}`);
    }
    values[flag.slice(2)] = value;
  }
  for (const needed of ["kind", "in", "out"]) {
    if (!(needed in values)) {
      throw new SchemaError(`--${needed} is required\n${USAGE}`);
    }
  }
  return { kind: values.kind, input: values.in, output: values.out };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  let csvText: string;
  try {
    csvText = readFileSync(args.input, "utf-8");
  } catch {
    console.error(`error: cannot read ${args.input}`);
    return 2;
  }
  try {
    const svg = renderChart(args.kind, csvText);
    writeFileSync(args.output, svg);
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
  console.log(`wrote ${args.output}`);
  return 0;
}
