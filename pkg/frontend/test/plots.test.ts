import { execFileSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { parseMetricCsv, isPlottable, SchemaError } from "../src/schema";
import { quantile, summarize } from "../src/stats";
import { renderPanel } from "../src/svg";
import { run } from "../src/cli";

const CLI = path.join(__dirname, "..", "dist", "cli.js");

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "plots-"));
}

function syntheticCsv(): string {
  const rows = ["round,metric,value,seed"];
  for (const round of [1, 2, 3]) {
    rows.push(`${round},lmd,1.0,0`);
    rows.push(`${round},lmd,2.0,1`);
    rows.push(`${round},lmd,9.0,2`);
  }
  return rows.join("\n") + "\n";
}

describe("quartile convention", () => {
  it("linear interpolation: (1, 2, 9) -> 1.5 and 5.5", () => {
    expect(quantile([1, 2, 9], 0.25)).toBe(1.5);
    expect(quantile([1, 2, 9], 0.75)).toBe(5.5);
  });

  it("is order independent", () => {
    expect(quantile([9, 1, 2], 0.25)).toBe(1.5);
  });

  it("single value collapses all quantiles", () => {
    expect(quantile([3.5], 0.25)).toBe(3.5);
    expect(quantile([3.5], 0.75)).toBe(3.5);
  });
});

describe("schema", () => {
  it("round trips a valid file", () => {
    const recs = parseMetricCsv(syntheticCsv(), "synthetic.csv");
    expect(recs).toHaveLength(9);
    expect(recs[0]).toEqual({ round: 1, metric: "lmd", value: 1.0, seed: 0 });
  });

  it("names the file on a missing column", () => {
    expect(() => parseMetricCsv("round,metric,value\n1,lmd,2\n", "bad.csv")).toThrowError(
      /bad\.csv: missing required column "seed"/,
    );
  });

  it("rejects extra columns", () => {
    expect(() =>
      parseMetricCsv("round,metric,value,seed,extra\n1,lmd,2,0,x\n", "bad.csv"),
    ).toThrow(SchemaError);
  });

  it("filters warning and cost channels plus NaN values", () => {
    const text =
      "round,metric,value,seed\n1,warning:mmd,nan,0\n1,cost:simulator_calls,100,0\n1,lmd,2,0\n";
    const kept = parseMetricCsv(text, "f.csv").filter(isPlottable);
    expect(kept).toHaveLength(1);
    expect(kept[0].metric).toBe("lmd");
  });
});

describe("rendering", () => {
  it("embeds the band statistics and is deterministic", () => {
    const recs = parseMetricCsv(syntheticCsv(), "s.csv");
    const byRound = new Map<number, number[]>();
    for (const r of recs) {
      byRound.set(r.round, [...(byRound.get(r.round) ?? []), r.value]);
    }
    const curves = [{ label: "s", points: summarize(byRound) }];
    const a = renderPanel(curves, { metric: "lmd", logy: false });
    const b = renderPanel(curves, { metric: "lmd", logy: false });
    expect(a).toBe(b);
    expect(a).toContain('data-q1="1.5"');
    expect(a).toContain('data-q3="5.5"');
    expect(a).toContain('data-mean="4"');
  });

  it("single seed collapses the band onto the mean line", () => {
    const points = summarize(new Map([[1, [2]], [2, [3]]]));
    for (const p of points) {
      expect(p.q1).toBe(p.mean);
      expect(p.q3).toBe(p.mean);
    }
    const svg = renderPanel([{ label: "one", points }], { metric: "lmd", logy: false });
    const polygon = svg.match(/<polygon points="([^"]+)"/)![1].split(" ");
    const polyline = svg.match(/<polyline points="([^"]+)"/)![1].split(" ");
    expect(new Set(polygon)).toEqual(new Set(polyline));
  });

  it("rejects non-positive values under --logy", () => {
    const points = summarize(new Map([[1, [0.0]], [2, [1.0]]]));
    expect(() => renderPanel([{ label: "x", points }], { metric: "mmd", logy: true })).toThrow(
      /strictly positive/,
    );
  });
});

describe("cli", () => {
  it("renders the synthetic CSV byte-stably", () => {
    const dir = tmpdir();
    const csv = path.join(dir, "synthetic.csv");
    fs.writeFileSync(csv, syntheticCsv());
    const outs = [path.join(dir, "o1"), path.join(dir, "o2")];
    for (const out of outs) {
      execFileSync(process.execPath, [CLI, "--csv", csv, "--metrics", "lmd", "--out", out]);
    }
    const files = fs.readdirSync(outs[0]);
    expect(files).toEqual(["lmd.svg"]);
    const a = fs.readFileSync(path.join(outs[0], "lmd.svg"));
    const b = fs.readFileSync(path.join(outs[1], "lmd.svg"));
    expect(a.equals(b)).toBe(true);
  });

  it("empty metric selection exits 0 with a notice and writes nothing", () => {
    const dir = tmpdir();
    const csv = path.join(dir, "synthetic.csv");
    fs.writeFileSync(csv, syntheticCsv());
    const out = path.join(dir, "out");
    const rc = run(["--csv", csv, "--metrics", "--out", out]);
    expect(rc).toBe(0);
    expect(fs.existsSync(out)).toBe(false);
  });

  it("schema errors from the CLI name the offending file", () => {
    const dir = tmpdir();
    const csv = path.join(dir, "broken.csv");
    fs.writeFileSync(csv, "round,value,seed\n1,2,0\n");
    let message = "";
    try {
      execFileSync(process.execPath, [CLI, "--csv", csv, "--metrics", "lmd", "--out", dir], {
        stdio: "pipe",
      });
    } catch (err: any) {
      message = String(err.stderr);
    }
    expect(message).toContain("broken.csv");
    expect(message).toContain("metric");
  });
});
