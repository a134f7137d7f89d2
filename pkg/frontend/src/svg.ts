// Small deterministic SVG toolkit: no randomness, no timestamps, fixed
// rounding, so identical input always yields identical bytes.

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export interface Frame {
  width: number;
  height: number;
  margin: Margin;
  plotWidth: number;
  plotHeight: number;
}

export function frame(
  width = 640,
  height = 400,
  margin: Margin = { top: 34, right: 58, bottom: 46, left: 58 }
): Frame {
  return {
    width,
    height,
    margin,
    plotWidth: width - margin.left - margin.right,
    plotHeight: height - margin.top - margin.bottom,
  };
}

// Two decimal places is below pixel resolution and keeps the output stable.
export const fmt = (v: number): string => {
  const s = v.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
};

export type Scale = (value: number) => number;

export function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  return (value) => r0 + ((value - d0) / span) * (r1 - r0);
}

/** Center positions for n evenly spaced bands across [r0, r1]. */
export function bandCenters(n: number, r0: number, r1: number): number[] {
  const step = (r1 - r0) / Math.max(n, 1);
  return Array.from({ length: n }, (_, i) => r0 + step * (i + 0.5));
}

export function tag(
  name: string,
  attrs: Record<string, string | number>,
  body = ""
): string {
  const parts = Object.entries(attrs)
    .map(([k, v]) => `${k}="${typeof v === "number" ? fmt(v) : v}"`)
    .join(" ");
  return body === "" && name !== "text"
    ? `<${name} ${parts}/>`
    : `<${name} ${parts}>${body}</${name}>`;
}

export function text(
  x: number,
  y: number,
  body: string,
  attrs: Record<string, string | number> = {}
): string {
  return tag("text", { x, y, "font-size": 11, "font-family": "sans-serif", ...attrs }, escapeText(body));
}

export function escapeText(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function polyline(
  points: Array<[number, number]>,
  stroke: string,
  extra: Record<string, string | number> = {}
): string {
  const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
  return tag("polyline", {
    class: "series",
    points: pts,
    fill: "none",
    stroke,
    "stroke-width": 2,
    ...extra,
  });
}

/** Round value ticks: steps of 1/2/5 x 10^k covering [0, max]. */
export function niceTicks(max: number, target = 5): number[] {
  if (max <= 0) {
    return [0, 1];
  }
  const rough = max / target;
  const power = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * power).find((s) => max / s <= target) ?? power * 10;
  const ticks: number[] = [];
  for (let v = 0; v <= max + step * 1e-9; v += step) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

export const RATE_TICKS = [0, 0.25, 0.5, 0.75, 1];

export function document(f: Frame, title: string, body: string): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${f.width}" height="${f.height}" viewBox="0 0 ${f.width} ${f.height}">`,
    tag("rect", { x: 0, y: 0, width: f.width, height: f.height, fill: "white" }),
    text(f.width / 2, 18, title, { "text-anchor": "middle", "font-size": 13, "font-weight": "bold", class: "title" }),
    body,
    "</svg>",
    "",
  ].join("\n");
}

// Shared axis furniture.  Labels carry classes so tests can count them.

export function xAxis(f: Frame, labels: string[], axisTitle: string): string {
  const y = f.margin.top + f.plotHeight;
  const centers = bandCenters(labels.length, f.margin.left, f.margin.left + f.plotWidth);
  const parts = [
    tag("line", {
      x1: f.margin.left, y1: y, x2: f.margin.left + f.plotWidth, y2: y,
      stroke: "#333", "stroke-width": 1,
    }),
  ];
  labels.forEach((label, i) => {
    parts.push(text(centers[i], y + 16, label, { "text-anchor": "middle", class: "x-label" }));
  });
  parts.push(
    text(f.margin.left + f.plotWidth / 2, f.height - 8, axisTitle, {
      "text-anchor": "middle", class: "axis-title",
    })
  );
  return parts.join("\n");
}

export function yAxis(
  f: Frame,
  ticks: number[],
  scale: Scale,
  axisTitle: string,
  side: "left" | "right" = "left"
): string {
  const x = side === "left" ? f.margin.left : f.margin.left + f.plotWidth;
  const anchor = side === "left" ? "end" : "start";
  const offset = side === "left" ? -6 : 6;
  const parts = [
    tag("line", {
      x1: x, y1: f.margin.top, x2: x, y2: f.margin.top + f.plotHeight,
      stroke: "#333", "stroke-width": 1,
    }),
  ];
  for (const t of ticks) {
    const y = scale(t);
    parts.push(tag("line", { x1: x - 3, y1: y, x2: x + 3, y2: y, stroke: "#333", "stroke-width": 1 }));
    parts.push(text(x + offset, y + 4, String(t), { "text-anchor": anchor, class: "y-label" }));
  }
  const titleX = side === "left" ? 14 : f.width - 14;
  const mid = f.margin.top + f.plotHeight / 2;
  parts.push(
    text(titleX, mid, axisTitle, {
      "text-anchor": "middle",
      class: "axis-title",
      transform: `rotate(${side === "left" ? -90 : 90} ${fmt(titleX)} ${fmt(mid)})`,
    })
  );
  return parts.join("\n");
}

export interface LegendEntry {
  label: string;
  color: string;
  shape: "line" | "box";
  dash?: string;
}

export function legend(f: Frame, entries: LegendEntry[]): string {
  const parts: string[] = [];
  let x = f.margin.left + 4;
  const y = f.margin.top - 8;
  for (const entry of entries) {
    if (entry.shape === "line") {
      parts.push(
        tag("line", {
          x1: x, y1: y - 4, x2: x + 18, y2: y - 4,
          stroke: entry.color, "stroke-width": 2,
          ...(entry.dash ? { "stroke-dasharray": entry.dash } : {}),
        })
      );
    } else {
      parts.push(tag("rect", { x, y: y - 10, width: 18, height: 9, fill: entry.color }));
    }
    parts.push(text(x + 22, y, entry.label, { class: "legend-label" }));
    x += 22 + 7 * entry.label.length + 18;
  }
  return parts.join("\n");
}
