/**
 * Builds echarts options for the three figure families.
 *
 * Series group by (predictor, rule) for the gain families and by rule for
 * the overhead table analogue; rendering is fully deterministic for a fixed
 * input (no animation, stable series order).
 */

import type { EChartsOption, LineSeriesOption, BarSeriesOption } from "echarts";
import { MetricsTable, SchemaError, numeric } from "./csv.js";

export interface FigureSpec {
  input: string;
  family: "gain_vs_tau" | "gain_vs_velocity" | "overhead";
  out: string;
  width?: number;
  height?: number;
}

const PALETTE = [
  "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

function seriesLabel(row: Record<string, string>, velocities: Set<string>): string {
  const base = `${row.predictor} (${row.rule})`;
  return velocities.size > 1 ? `${base} v=${row.velocity_mps}` : base;
}

function groupRows(
  table: MetricsTable,
  keyOf: (row: Record<string, string>) => string,
): Map<string, Record<string, string>[]> {
  const groups = new Map<string, Record<string, string>[]>();
  for (const row of table.rows) {
    const key = keyOf(row);
    const bucket = groups.get(key);
    if (bucket === undefined) {
      groups.set(key, [row]);
    } else {
      bucket.push(row);
    }
  }
  return groups;
}

function baseOption(title: string): EChartsOption {
  return {
    animation: false,
    backgroundColor: "#ffffff",
    color: PALETTE,
    title: { text: title, left: "center", textStyle: { fontSize: 14 } },
    legend: { bottom: 0, type: "plain" },
    grid: { left: 60, right: 24, top: 44, bottom: 64 },
  };
}

export function gainVsTauOption(table: MetricsTable): EChartsOption {
  const velocities = new Set(table.rows.map((r) => r.velocity_mps));
  const groups = groupRows(table, (r) => seriesLabel(r, velocities));
  const series: LineSeriesOption[] = [...groups.entries()].map(([name, rows]) => ({
    type: "line",
    name,
    showSymbol: false,
    data: rows
      .map((r) => [numeric(r, "tau"), numeric(r, "mean_norm_gain")] as [number, number])
      .sort((a, b) => a[0] - b[0]),
  }));
  return {
    ...baseOption("Normalized beamforming gain within one prediction period"),
    xAxis: { type: "value", name: "normalized prediction instant tau", min: 0, max: 1 },
    yAxis: { type: "value", name: "mean normalized gain", min: 0, max: 1 },
    series,
  };
}

export function gainVsVelocityOption(table: MetricsTable): EChartsOption {
  const groups = groupRows(table, (r) => `${r.predictor} (${r.rule})`);
  const series: LineSeriesOption[] = [...groups.entries()].map(([name, rows]) => ({
    type: "line",
    name,
    data: rows
      .map(
        (r) => [numeric(r, "velocity_mps"), numeric(r, "mean_norm_gain")] as [number, number],
      )
      .sort((a, b) => a[0] - b[0]),
  }));
  return {
    ...baseOption("Impact of UE velocity on normalized gain"),
    xAxis: { type: "value", name: "velocity [m/s]" },
    yAxis: { type: "value", name: "mean normalized gain", min: 0, max: 1 },
    series,
  };
}

export function overheadOption(table: MetricsTable): EChartsOption {
  const velocities = [...new Set(table.rows.map((r) => numeric(r, "velocity_mps")))].sort(
    (a, b) => a - b,
  );
  const groups = groupRows(table, (r) => r.rule);
  const series: BarSeriesOption[] = [...groups.entries()].map(([rule, rows]) => {
    const byVelocity = new Map(rows.map((r) => [numeric(r, "velocity_mps"), r]));
    return {
      type: "bar",
      name: rule,
      data: velocities.map((v) => {
        const row = byVelocity.get(v);
        return row === undefined ? null : numeric(row, "overhead_fraction");
      }),
    };
  });
  return {
    ...baseOption("Normalized training overhead"),
    xAxis: { type: "category", name: "velocity [m/s]", data: velocities.map(String) },
    yAxis: { type: "value", name: "overhead fraction", min: 0, max: 1 },
    series,
  };
}

export function buildOption(table: MetricsTable): EChartsOption {
  switch (table.family) {
    case "gain_vs_tau":
      return gainVsTauOption(table);
    case "gain_vs_velocity":
      return gainVsVelocityOption(table);
    case "overhead":
      return overheadOption(table);
    default:
      throw new SchemaError(`unknown figure family '${table.family}'`);
  }
}

export function seriesCount(option: EChartsOption): number {
  const series = option.series;
  return Array.isArray(series) ? series.length : series === undefined ? 0 : 1;
}
