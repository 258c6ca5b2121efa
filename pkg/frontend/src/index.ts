export { MetricRecord, SchemaError, parseMetricCsv, isPlottable } from "./schema";
export { BandPoint, quantile, mean, summarize } from "./stats";
export { Curve, RenderOptions, renderPanel } from "./svg";
export { run } from "./cli";
