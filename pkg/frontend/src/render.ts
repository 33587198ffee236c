/**
 * Server-side chart rendering: echarts SSR produces the SVG, and PNG output
 * goes through resvg rasterization.  The output format follows the file
 * extension (.svg or .png).
 */

import { writeFileSync } from "node:fs";
import { extname } from "node:path";
import { Resvg } from "@resvg/resvg-js";
import * as echarts from "echarts";
import { FigureSpec } from "./figures.js";
import { buildOption } from "./figures.js";
import { parseCsvFile } from "./csv.js";

const DEFAULT_WIDTH = 880;
const DEFAULT_HEIGHT = 560;

export function renderSvg(
  option: echarts.EChartsOption,
  width: number,
  height: number,
): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width,
    height,
  });
  try {
    chart.setOption(option);
    return chart.renderToSVGString();
  } finally {
    chart.dispose();
  }
}

export function svgToPng(svg: string): Buffer {
  const resvg = new Resvg(svg, { background: "#ffffff" });
  return resvg.render().asPng();
}

/** Renders one figure spec to its output image; returns the bytes written. */
export function render(spec: FigureSpec): Buffer {
  const table = parseCsvFile(spec.input, spec.family);
  const option = buildOption(table);
  const width = spec.width ?? DEFAULT_WIDTH;
  const height = spec.height ?? DEFAULT_HEIGHT;
  const svg = renderSvg(option, width, height);

  const ext = extname(spec.out).toLowerCase();
  let payload: Buffer;
  if (ext === ".svg") {
    payload = Buffer.from(svg, "utf8");
  } else if (ext === ".png" || ext === "") {
    payload = svgToPng(svg);
  } else {
    throw new Error(`unsupported output extension '${ext}' (use .png or .svg)`);
  }
  writeFileSync(spec.out, payload);
  return payload;
}
