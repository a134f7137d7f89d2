/**
 * Reader for the engine's exported metric tables.
 *
 * The export format is deliberately narrow: comma-separated, one header
 * line, no quoting (column values are numbers, short ids, or the word
 * "undefined"), so a plain split is a full parser here.
 */

export class SchemaError extends Error {}

export interface Table {
  columns: string[];
  rows: Record<string, string>[];
}

export function parseCsv(text: string): Table {
  const lines = text.split("\n").filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new SchemaError("empty input, expected a header line");
  }
  const columns = lines[0].split(",");
  const rows = lines.slice(1).map((line, index) => {
    const parts = line.split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(
        `row ${index + 1} has ${parts.length} fields, header has ${columns.length}`
      );
    }
    const row: Record<string, string> = {};
    columns.forEach((name, i) => {
      row[name] = parts[i];
    });
    return row;
  });
  return { columns, rows };
}

export function requireColumns(table: Table, needed: readonly string[]): void {
  for (const name of needed) {
    if (!table.columns.includes(name)) {
      throw new SchemaError(`missing column "${name}"`);
    }
  }
}

/** A metric cell: a number, or null where the export says "undefined". */
export function numeric(row: Record<string, string>, column: string): number | null {
  const raw = row[column];
  if (raw === "undefined") {
    return null;
  }
  const value = Number(raw);
  if (!Number.isFinite(value)) {
    throw new SchemaError(`column "${column}" holds non-numeric value "${raw}"`);
  }
  return value;
}

export function loadTable(text: string, needed: readonly string[]): Table {
  const table = parseCsv(text);
  requireColumns(table, needed);
  return table;
}
