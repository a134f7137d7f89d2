import {
  SchemaError,
  Table,
  loadTable,
  numeric,
} from "./csv";
import {
  Frame,
  RATE_TICKS,
  bandCenters,
  document,
  fmt,
  frame,
  legend,
  linearScale,
  niceTicks,
  polyline,
  tag,
  text,
  xAxis,
  yAxis,
} from "./svg";

export const CHART_KINDS = [
  "DsrAscTrajectory",
  "TdsrFdsrSdrComparison",
  "DsrAatCombo",
  "CrdeLines",
  "FprBars",
  "AttemptHeatmap",
  "OodComparison",
] as const;

export type ChartKind = (typeof CHART_KINDS)[number];

const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
const BAR_FILL = "#9ecae1";

// Structural columns (round indexes, ids) must hold real values even
// where metric cells are allowed to be "undefined".
function num(row: Record<string, string>, column: string): number {
  const value = numeric(row, column);
  if (value === null) {
    throw new SchemaError(`column "${column}" may not be undefined`);
  }
  return value;
}

const rateScale = (f: Frame) =>
  linearScale(0, 1, f.margin.top + f.plotHeight, f.margin.top);

function dots(points: Array<[number, number]>, color: string): string {
  return points
    .map(([x, y]) => tag("circle", { class: "dot", cx: x, cy: y, r: 3, fill: color }))
    .join("\n");
}

// --- trajectory: cumulative surface bars + defense rate line ----------------

export function renderDsrAscTrajectory(csvText: string): string {
  const table = loadTable(csvText, ["epoch", "dsr", "asc"]);
  const f = frame();
  const epochs = table.rows.map((r) => num(r, "epoch"));
  const centers = bandCenters(epochs.length, f.margin.left, f.margin.left + f.plotWidth);
  const band = f.plotWidth / Math.max(epochs.length, 1);

  const ascTicks = niceTicks(Math.max(...table.rows.map((r) => num(r, "asc"))));
  const ascScale = linearScale(
    0, ascTicks[ascTicks.length - 1], f.margin.top + f.plotHeight, f.margin.top
  );
  const dsr = rateScale(f);

  const bottom = f.margin.top + f.plotHeight;
  const bars = table.rows.map((row, i) => {
    const top = ascScale(num(row, "asc"));
    return tag("rect", {
      class: "bar",
      x: centers[i] - band * 0.28,
      y: top,
      width: band * 0.56,
      height: bottom - top,
      fill: BAR_FILL,
    });
  });
  const line = table.rows.map(
    (row, i): [number, number] => [centers[i], dsr(num(row, "dsr"))]
  );

  const body = [
    ...bars,
    polyline(line, PALETTE[0]),
    dots(line, PALETTE[0]),
    xAxis(f, epochs.map(String), "epoch"),
    yAxis(f, ascTicks, ascScale, "cumulative attack surface", "left"),
    yAxis(f, RATE_TICKS, dsr, "defense success rate", "right"),
    legend(f, [
      { label: "attack surface", color: BAR_FILL, shape: "box" },
      { label: "dsr", color: PALETTE[0], shape: "line" },
    ]),
  ].join("\n");
  return document(f, "Defense rate and cumulative attack surface", body);
}

// --- rate comparison: tdsr / fdsr / sdr -------------------------------------

export function renderTdsrFdsrSdrComparison(csvText: string): string {
  const table = loadTable(csvText, ["epoch", "tdsr", "fdsr", "sdr"]);
  const f = frame();
  const epochs = table.rows.map((r) => num(r, "epoch"));
  const centers = bandCenters(epochs.length, f.margin.left, f.margin.left + f.plotWidth);
  const scale = rateScale(f);

  const series: Array<{ column: string; dash?: string }> = [
    { column: "tdsr" },               // solid: the one that counts
    { column: "fdsr", dash: "6 3" },
    { column: "sdr", dash: "2 3" },
  ];
  const body: string[] = [];
  series.forEach((s, idx) => {
    const pts = table.rows.map(
      (row, i): [number, number] => [centers[i], scale(num(row, s.column))]
    );
    body.push(polyline(pts, PALETTE[idx], s.dash ? { "stroke-dasharray": s.dash } : {}));
    body.push(dots(pts, PALETTE[idx]));
  });
  body.push(xAxis(f, epochs.map(String), "epoch"));
  body.push(yAxis(f, RATE_TICKS, scale, "rate", "left"));
  body.push(
    legend(f, series.map((s, idx) => ({
      label: s.column, color: PALETTE[idx], shape: "line", dash: s.dash,
    })))
  );
  return document(f, "True vs flagged defense success", body.join("\n"));
}

// --- content combo: defense rate line + attempts line -----------------------

export function renderDsrAatCombo(csvText: string): string {
  const table = loadTable(csvText, ["epoch", "dsr", "aat"]);
  const f = frame();
  const epochs = table.rows.map((r) => num(r, "epoch"));
  const centers = bandCenters(epochs.length, f.margin.left, f.margin.left + f.plotWidth);
  const dsr = rateScale(f);

  // aat is undefined in rounds with no successful attack; skip those points
  const aatCells = table.rows.map((r) => numeric(r, "aat"));
  const defined = aatCells.filter((v): v is number => v !== null);
  const aatTicks = niceTicks(defined.length ? Math.max(...defined) : 1);
  const aatScale = linearScale(
    0, aatTicks[aatTicks.length - 1], f.margin.top + f.plotHeight, f.margin.top
  );

  const dsrPts = table.rows.map(
    (row, i): [number, number] => [centers[i], dsr(num(row, "dsr"))]
  );
  const aatPts = aatCells.flatMap((v, i): Array<[number, number]> =>
    v === null ? [] : [[centers[i], aatScale(v)]]
  );

  const body = [
    polyline(dsrPts, PALETTE[0]),
    dots(dsrPts, PALETTE[0]),
    polyline(aatPts, PALETTE[1], { "stroke-dasharray": "6 3" }),
    dots(aatPts, PALETTE[1]),
    xAxis(f, epochs.map(String), "round"),
    yAxis(f, RATE_TICKS, dsr, "defense success rate", "left"),
    yAxis(f, aatTicks, aatScale, "attempts to success", "right"),
    legend(f, [
      { label: "dsr", color: PALETTE[0], shape: "line" },
      { label: "aat", color: PALETTE[1], shape: "line", dash: "6 3" },
    ]),
  ].join("\n");
  return document(f, "Guard strength and attack effort by round", body);
}

// --- cross-round effectiveness: one line per guard round --------------------

export function renderCrdeLines(csvText: string): string {
  const table = loadTable(csvText, ["i", "j", "value"]);
  const f = frame();
  const maxRound = Math.max(...table.rows.map((r) => num(r, "i")), 1);
  const rounds = Array.from({ length: maxRound }, (_, k) => k + 1);
  const centers = bandCenters(rounds.length, f.margin.left, f.margin.left + f.plotWidth);
  const scale = rateScale(f);

  const byGuard = new Map<number, Array<[number, number | null]>>();
  for (const row of table.rows) {
    const j = num(row, "j");
    if (!byGuard.has(j)) {
      byGuard.set(j, []);
    }
    byGuard.get(j)!.push([num(row, "i"), numeric(row, "value")]);
  }

  const body: string[] = [];
  const entries: Array<{ label: string; color: string; shape: "line" }> = [];
  for (const j of [...byGuard.keys()].sort((a, b) => a - b)) {
    const color = PALETTE[(j - 1) % PALETTE.length];
    const pts = byGuard
      .get(j)!
      .sort((a, b) => a[0] - b[0])
      .flatMap(([i, v]): Array<[number, number]> =>
        v === null ? [] : [[centers[i - 1], scale(v)]]
      );
    body.push(polyline(pts, color));
    body.push(dots(pts, color));
    entries.push({ label: `guard v${j}`, color, shape: "line" });
  }
  body.push(xAxis(f, rounds.map(String), "evaluated against round"));
  body.push(yAxis(f, RATE_TICKS, scale, "defense rate", "left"));
  body.push(legend(f, entries));
  return document(f, "Cross-round defense effectiveness", body.join("\n"));
}

// --- false positives --------------------------------------------------------

const FPR_THRESHOLD = 0.05;

export function renderFprBars(csvText: string): string {
  const table = loadTable(csvText, ["epoch", "fpr"]);
  const f = frame();
  const epochs = table.rows.map((r) => num(r, "epoch"));
  const centers = bandCenters(epochs.length, f.margin.left, f.margin.left + f.plotWidth);
  const band = f.plotWidth / Math.max(epochs.length, 1);

  const cells = table.rows.map((r) => numeric(r, "fpr"));
  const peak = Math.max(FPR_THRESHOLD * 2, ...cells.filter((v): v is number => v !== null));
  const ticks = niceTicks(peak);
  const scale = linearScale(0, ticks[ticks.length - 1], f.margin.top + f.plotHeight, f.margin.top);

  const bottom = f.margin.top + f.plotHeight;
  const bars = cells.flatMap((v, i) => {
    if (v === null) {
      return [];  // no benign traffic that round
    }
    const top = scale(v);
    return [
      tag("rect", {
        class: "bar",
        x: centers[i] - band * 0.28,
        y: top,
        width: band * 0.56,
        height: Math.max(bottom - top, 0.5),  // keep zero-rate bars visible
        fill: BAR_FILL,
      }),
    ];
  });

  const ty = scale(FPR_THRESHOLD);
  const body = [
    ...bars,
    tag("line", {
      class: "threshold",
      x1: f.margin.left, y1: ty, x2: f.margin.left + f.plotWidth, y2: ty,
      stroke: PALETTE[3], "stroke-width": 1.5, "stroke-dasharray": "5 4",
    }),
    text(f.margin.left + f.plotWidth - 4, ty - 5, `threshold ${FPR_THRESHOLD}`, {
      "text-anchor": "end", fill: PALETTE[3], class: "threshold-label",
    }),
    xAxis(f, epochs.map(String), "round"),
    yAxis(f, ticks, scale, "false positive rate", "left"),
  ].join("\n");
  return document(f, "Benign traffic blocked per round", body);
}

// --- attempts heatmap: task x round -----------------------------------------

function mix(t: number): string {
  // light #eff6fc to dark #08306b, channel-wise
  const channel = (a: number, b: number) => Math.round(a + (b - a) * t);
  const r = channel(0xef, 0x08);
  const g = channel(0xf6, 0x30);
  const b = channel(0xfc, 0x6b);
  return `#${[r, g, b].map((c) => c.toString(16).padStart(2, "0")).join("")}`;
}

export function renderAttemptHeatmap(csvText: string): string {
  const table = loadTable(csvText, ["task", "epoch", "attempts", "success"]);
  const f = frame();
  const tasks = [...new Set(table.rows.map((r) => r.task))].sort();
  const epochs = [...new Set(table.rows.map((r) => num(r, "epoch")))].sort((a, b) => a - b);
  const xs = bandCenters(epochs.length, f.margin.left, f.margin.left + f.plotWidth);
  const ys = bandCenters(tasks.length, f.margin.top, f.margin.top + f.plotHeight);
  const cellW = f.plotWidth / Math.max(epochs.length, 1);
  const cellH = f.plotHeight / Math.max(tasks.length, 1);

  const values = table.rows.map((r) => num(r, "attempts"));
  const lo = Math.min(...values);
  const hi = Math.max(...values);

  const body: string[] = [];
  for (const row of table.rows) {
    const xi = epochs.indexOf(num(row, "epoch"));
    const yi = tasks.indexOf(row.task);
    const attempts = num(row, "attempts");
    const t = hi === lo ? 0 : (attempts - lo) / (hi - lo);
    const failed = num(row, "success") === 0;
    body.push(
      tag("rect", {
        class: "cell",
        x: xs[xi] - cellW / 2 + 1,
        y: ys[yi] - cellH / 2 + 1,
        width: cellW - 2,
        height: cellH - 2,
        fill: mix(t),
        stroke: failed ? PALETTE[3] : "#cccccc",
        "stroke-width": failed ? 2 : 0.5,
      })
    );
    body.push(
      text(xs[xi], ys[yi] + 4, String(attempts), {
        "text-anchor": "middle",
        class: "cell-label",
        fill: t > 0.55 ? "white" : "#333333",
      })
    );
  }
  tasks.forEach((task, i) => {
    body.push(text(f.margin.left - 6, ys[i] + 4, task, { "text-anchor": "end", class: "y-label" }));
  });
  body.push(xAxis(f, epochs.map(String), "round"));
  return document(f, "Attack attempts per task and round (red border: never landed)", body.join("\n"));
}

// --- out-of-distribution guard comparison -----------------------------------

export function renderOodComparison(csvText: string): string {
  const table = loadTable(csvText, ["corpus", "guard", "dsr"]);
  const f = frame();
  const versionOrder = (a: string, b: string) => {
    const ma = /^v(\d+)$/.exec(a);
    const mb = /^v(\d+)$/.exec(b);
    return ma && mb ? Number(ma[1]) - Number(mb[1]) : a.localeCompare(b);
  };
  const guards = [...new Set(table.rows.map((r) => r.guard))].sort(versionOrder);
  const corpora = [...new Set(table.rows.map((r) => r.corpus))].sort();
  const centers = bandCenters(guards.length, f.margin.left, f.margin.left + f.plotWidth);
  const band = f.plotWidth / Math.max(guards.length, 1);
  const scale = rateScale(f);

  const slot = (band * 0.7) / Math.max(corpora.length, 1);
  const bottom = f.margin.top + f.plotHeight;
  const body: string[] = [];
  for (const row of table.rows) {
    const value = numeric(row, "dsr");
    if (value === null) {
      continue;
    }
    const gi = guards.indexOf(row.guard);
    const ci = corpora.indexOf(row.corpus);
    const x = centers[gi] - (slot * corpora.length) / 2 + ci * slot;
    const top = scale(value);
    body.push(
      tag("rect", {
        class: "bar",
        x: x + 1,
        y: top,
        width: slot - 2,
        height: bottom - top,
        fill: PALETTE[ci % PALETTE.length],
      })
    );
  }
  body.push(xAxis(f, guards, "guard version"));
  body.push(yAxis(f, RATE_TICKS, scale, "defense success rate", "left"));
  body.push(
    legend(f, corpora.map((c, ci) => ({
      label: c, color: PALETTE[ci % PALETTE.length], shape: "box" as const,
    })))
  );
  return document(f, "Guard versions against held-out prompts", body.join("\n"));
}

// --- dispatch ---------------------------------------------------------------

const RENDERERS: Record<ChartKind, (csvText: string) => string> = {
  DsrAscTrajectory: renderDsrAscTrajectory,
  TdsrFdsrSdrComparison: renderTdsrFdsrSdrComparison,
  DsrAatCombo: renderDsrAatCombo,
  CrdeLines: renderCrdeLines,
  FprBars: renderFprBars,
  AttemptHeatmap: renderAttemptHeatmap,
  OodComparison: renderOodComparison,
};

export function renderChart(kind: string, csvText: string): string {
  const renderer = RENDERERS[kind as ChartKind];
  if (!renderer) {
    throw new SchemaError(
      `unknown chart kind "${kind}" (expected one of: ${CHART_KINDS.join(", ")})`
    );
  }
  return renderer(csvText);
}
