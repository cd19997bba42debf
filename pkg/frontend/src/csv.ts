import { readFileSync } from "node:fs";
import Papa from "papaparse";

/** A CSV whose header is missing columns the figure needs. */
export class SchemaError extends Error {}

/** Anything else wrong with the data (empty file, bad number, mismatch). */
export class DataError extends Error {}

export type Row = Record<string, string>;

/**
 * Read a CSV file into header-keyed string rows, verifying the required
 * columns exist.  The error message lists every missing column so a user
 * can see at once which file was handed to the wrong figure kind.
 */
export function readCsv(path: string, required: string[]): Row[] {
  const text = readFileSync(path, "utf-8");
  const parsed = Papa.parse<Row>(text, {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0]!;
    throw new DataError(`${path}: ${first.message} (row ${first.row})`);
  }
  const fields = parsed.meta.fields ?? [];
  const missing = required.filter((c) => !fields.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(
      `${path}: missing required column(s): ${missing.join(", ")}`,
    );
  }
  if (parsed.data.length === 0) {
    throw new DataError(`${path}: no data rows`);
  }
  return parsed.data;
}

/** Extract one column as finite numbers. */
export function numberColumn(rows: Row[], name: string, path: string): number[] {
  return rows.map((row, i) => {
    const value = Number(row[name]);
    if (!Number.isFinite(value)) {
      throw new DataError(
        `${path}: row ${i + 1}: column ${name} is not a finite number ` +
          `(got ${JSON.stringify(row[name])})`,
      );
    }
    return value;
  });
}
