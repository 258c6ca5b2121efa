#!/usr/bin/env node

import * as fs from "fs";
import * as path from "path";

import { isPlottable, parseMetricCsv } from "./schema";
import { summarize } from "./stats";
import { Curve, renderPanel } from "./svg";

const USAGE = `usage: plots --csv <paths...> --metrics <names...> --out <dir> [--logy]

Renders one SVG panel per selected metric: each input CSV becomes one
curve (labelled by file name) showing the mean across seeds with a band
from the lower to the upper quartile.  Quartiles use linear interpolation
between order statistics (three seeds with values 1, 2, 9 give band
edges 1.5 and 5.5).  --logy plots values on a log10 axis.`;

interface Args {
  csv: string[];
  metrics: string[];
  out: string;
  logy: boolean;
}

export function parseArgs(argv: string[]): Args {
  const args: Args = { csv: [], metrics: [], out: "", logy: false };
  let target: "csv" | "metrics" | null = null;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--help" || a === "-h") {
      console.log(USAGE);
      process.exit(0);
    } else if (a === "--csv") {
      target = "csv";
    } else if (a === "--metrics") {
      target = "metrics";
    } else if (a === "--logy") {
      target = null;
      args.logy = true;
    } else if (a === "--out") {
      target = null;
      args.out = argv[++i] ?? "";
    } else if (a.startsWith("--")) {
      throw new Error(`unknown option ${a}`);
    } else if (target) {
      args[target].push(a);
    } else {
      throw new Error(`unexpected argument ${a}`);
    }
  }
  if (args.csv.length === 0) {
    throw new Error("at least one --csv path is required");
  }
  if (!args.out) {
    throw new Error("--out is required");
  }
  return args;
}

function curveLabel(file: string): string {
  const base = path.basename(file, path.extname(file));
  // harness layouts put every CSV at out/<hash>/metrics.csv; prefer the
  // distinguishing directory name over a repeated "metrics" label
  if (base === "metrics") {
    return path.basename(path.dirname(path.resolve(file)));
  }
  return base;
}

export function run(argv: string[]): number {
  const args = parseArgs(argv);
  if (args.metrics.length === 0) {
    console.log("no metrics selected; nothing to render");
    return 0;
  }
  const tables = args.csv.map((file) => ({
    label: curveLabel(file),
    records: parseMetricCsv(fs.readFileSync(file, "utf8"), file).filter(isPlottable),
  }));
  fs.mkdirSync(args.out, { recursive: true });
  let rendered = 0;
  for (const metric of args.metrics) {
    const curves: Curve[] = [];
    for (const table of tables) {
      const byRound = new Map<number, number[]>();
      for (const rec of table.records) {
        if (rec.metric !== metric) continue;
        const vals = byRound.get(rec.round) ?? [];
        vals.push(rec.value);
        byRound.set(rec.round, vals);
      }
      if (byRound.size > 0) {
        curves.push({ label: table.label, points: summarize(byRound) });
      }
    }
    if (curves.length === 0) {
      console.log(`metric "${metric}": no rows in any input, skipped`);
      continue;
    }
    const svg = renderPanel(curves, { metric, logy: args.logy });
    const dest = path.join(args.out, `${metric.replace(/[^A-Za-z0-9_.-]/g, "_")}.svg`);
    fs.writeFileSync(dest, svg);
    console.log(dest);
    rendered++;
  }
  if (rendered === 0) {
    console.log("no panels rendered");
  }
  return 0;
}

if (require.main === module) {
  try {
    process.exit(run(process.argv.slice(2)));
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    process.exit(1);
  }
}
