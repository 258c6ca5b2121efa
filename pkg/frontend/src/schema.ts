import Papa from "papaparse";

/** One metric observation: (round, metric-name, value, seed). */
export interface MetricRecord {
  round: number;
  metric: string;
  value: number;
  seed: number;
}

export const REQUIRED_COLUMNS = ["round", "metric", "value", "seed"] as const;

export class SchemaError extends Error {
  constructor(file: string, detail: string) {
    super(`${file}: ${detail}`);
    this.name = "SchemaError";
  }
}

/**
 * Parse one metric CSV. The header must contain exactly the four
 * MetricRecord columns; any deviation raises a SchemaError naming the file.
 * Rows whose metric is a warning or cost channel (prefix "warning:" /
 * "cost:") and rows with non-finite values are parsed but flagged so
 * callers can skip them.
 */
export function parseMetricCsv(text: string, file: string): MetricRecord[] {
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new SchemaError(file, `CSV parse error: ${parsed.errors[0].message}`);
  }
  const fields = parsed.meta.fields ?? [];
  for (const col of REQUIRED_COLUMNS) {
    if (!fields.includes(col)) {
      throw new SchemaError(file, `missing required column "${col}"`);
    }
  }
  const extra = fields.filter((f) => !(REQUIRED_COLUMNS as readonly string[]).includes(f));
  if (extra.length > 0) {
    throw new SchemaError(file, `unexpected column "${extra[0]}"`);
  }
  return parsed.data.map((row, i) => {
    const round = Number(row.round);
    const seed = Number(row.seed);
    const value = Number(row.value);
    if (!Number.isInteger(round) || !Number.isInteger(seed)) {
      throw new SchemaError(file, `row ${i + 2}: round and seed must be integers`);
    }
    if (!row.metric) {
      throw new SchemaError(file, `row ${i + 2}: empty metric name`);
    }
    return { round, metric: row.metric, value, seed };
  });
}

/** True for rows that carry data (not warning/cost channels, finite value). */
export function isPlottable(rec: MetricRecord): boolean {
  if (rec.metric.startsWith("warning:") || rec.metric.startsWith("cost:")) {
    return false;
  }
  return Number.isFinite(rec.value);
}
