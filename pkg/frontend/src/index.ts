export { CHART_KINDS, renderChart } from "./charts";
export type { ChartKind } from "./charts";
export {
  renderAttemptHeatmap,
  renderCrdeLines,
  renderDsrAatCombo,
  renderDsrAscTrajectory,
  renderFprBars,
  renderOodComparison,
  renderTdsrFdsrSdrComparison,
} from "./charts";
export { SchemaError, loadTable, numeric, parseCsv, requireColumns } from "./csv";
export type { Table } from "./csv";
export { main } from "./cli";
