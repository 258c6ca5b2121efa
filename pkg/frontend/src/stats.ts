/** Mean and linear-interpolation quartiles across seeds for one round. */
export interface BandPoint {
  round: number;
  mean: number;
  q1: number;
  q3: number;
}

/**
 * Quantile with linear interpolation between order statistics: for
 * probability p and n sorted values, position h = (n - 1) * p, result
 * v[floor(h)] + (h - floor(h)) * (v[floor(h) + 1] - v[floor(h)]).
 * Values (1, 2, 9) give Q1 = 1.5 and Q3 = 5.5 under this convention.
 */
export function quantile(values: number[], p: number): number {
  if (values.length === 0) {
    throw new Error("quantile of empty array");
  }
  const v = [...values].sort((a, b) => a - b);
  const h = (v.length - 1) * p;
  const lo = Math.floor(h);
  const hi = Math.min(lo + 1, v.length - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

export function mean(values: number[]): number {
  return values.reduce((a, b) => a + b, 0) / values.length;
}

/** Collapse per-seed values at each round into mean / Q1 / Q3. */
export function summarize(byRound: Map<number, number[]>): BandPoint[] {
  const rounds = [...byRound.keys()].sort((a, b) => a - b);
  return rounds.map((round) => {
    const vals = byRound.get(round)!;
    return {
      round,
      mean: mean(vals),
      q1: quantile(vals, 0.25),
      q3: quantile(vals, 0.75),
    };
  });
}
