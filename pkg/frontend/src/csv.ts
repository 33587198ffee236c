/**
 * Strict parsing and validation of the metric CSVs emitted by the harness.
 *
 * Each figure family has an exact column schema; a file with missing or
 * unexpected columns is rejected with an error naming them, and the input
 * is never modified.
 */

import { readFileSync } from "node:fs";

export type FigureFamily = "gain_vs_tau" | "gain_vs_velocity" | "overhead";

export const FAMILY_SCHEMAS: Record<FigureFamily, string[]> = {
  gain_vs_tau: ["predictor", "rule", "velocity_mps", "tau", "mean_norm_gain", "n"],
  gain_vs_velocity: ["predictor", "rule", "velocity_mps", "mean_norm_gain", "n"],
  overhead: ["rule", "velocity_mps", "overhead_fraction"],
};

export const FAMILIES = Object.keys(FAMILY_SCHEMAS) as FigureFamily[];

export interface MetricsTable {
  family: FigureFamily;
  columns: string[];
  rows: Record<string, string>[];
}

export class SchemaError extends Error {}

export function parseCsvText(text: string, family: FigureFamily): MetricsTable {
  const schema = FAMILY_SCHEMAS[family];
  if (schema === undefined) {
    throw new SchemaError(`unknown figure family '${family}'`);
  }
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new SchemaError("empty file: no header row");
  }
  const columns = lines[0].split(",").map((c) => c.trim());

  const missing = schema.filter((c) => !columns.includes(c));
  const unknown = columns.filter((c) => !schema.includes(c));
  if (missing.length > 0 || unknown.length > 0) {
    const parts = [];
    if (missing.length > 0) parts.push(`missing columns: ${missing.join(", ")}`);
    if (unknown.length > 0) parts.push(`unknown columns: ${unknown.join(", ")}`);
    throw new SchemaError(`schema mismatch for ${family}: ${parts.join("; ")}`);
  }

  const rows: Record<string, string>[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== columns.length) {
      throw new SchemaError(
        `row ${i}: expected ${columns.length} cells, got ${cells.length}`,
      );
    }
    const row: Record<string, string> = {};
    columns.forEach((c, j) => (row[c] = cells[j].trim()));
    rows.push(row);
  }
  if (rows.length === 0) {
    throw new SchemaError("no data rows");
  }
  return { family, columns, rows };
}

export function parseCsvFile(path: string, family: FigureFamily): MetricsTable {
  return parseCsvText(readFileSync(path, "utf8"), family);
}

export function numeric(row: Record<string, string>, column: string): number {
  const value = Number(row[column]);
  if (!Number.isFinite(value)) {
    throw new SchemaError(`column '${column}': non-numeric value '${row[column]}'`);
  }
  return value;
}
