/**
 * Comment-aware CSV reading for the stiefelkf artifact files.
 *
 * Every artifact starts with `#` comment lines (provenance: resolved config
 * JSON and base seed) followed by a header row and numeric data rows.
 */

export interface Table {
  /** `#` comment lines with the marker stripped */
  comments: string[];
  columns: string[];
  /** column name -> values, all parsed as numbers */
  data: Map<string, number[]>;
  rows: number;
}

export class SchemaError extends Error {}

export function parseCsv(text: string): Table {
  const comments: string[] = [];
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  let i = 0;
  while (i < lines.length && lines[i].startsWith("#")) {
    comments.push(lines[i].replace(/^#\s?/, ""));
    i++;
  }
  if (i >= lines.length) {
    throw new SchemaError("no header row found");
  }
  const columns = lines[i].split(",").map((c) => c.trim());
  i++;
  const data = new Map<string, number[]>(columns.map((c) => [c, []]));
  let rows = 0;
  for (; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(
        `row ${rows + 1} has ${parts.length} fields, expected ${columns.length}`,
      );
    }
    columns.forEach((c, j) => data.get(c)!.push(Number(parts[j])));
    rows++;
  }
  return { comments, columns, data, rows };
}

/** Column accessor that names the missing column in its error. */
export function column(table: Table, name: string): number[] {
  const values = table.data.get(name);
  if (values === undefined) {
    throw new SchemaError(
      `missing column "${name}" (have: ${table.columns.join(", ")})`,
    );
  }
  return values;
}

export function requireColumns(table: Table, names: string[]): void {
  for (const name of names) {
    column(table, name);
  }
}

/** Provenance check: artifacts must carry their resolved config. */
export function requireProvenance(table: Table, what: string): void {
  if (!table.comments.some((c) => c.startsWith("config:"))) {
    throw new SchemaError(`${what} lacks the provenance header ("# config: ...")`);
  }
}

/** Manifold size from the `# n=<n> k=<k>` comment. */
export function manifoldSize(table: Table): { n: number; k: number } {
  for (const c of table.comments) {
    const m = c.match(/^n=(\d+) k=(\d+)$/);
    if (m) return { n: Number(m[1]), k: Number(m[2]) };
  }
  throw new SchemaError('missing "# n=<n> k=<k>" comment');
}

/** Coordinate column names in row-major order, e.g. p11, p12, p21, ... */
export function coordColumns(prefix: string, n: number, k: number): string[] {
  const out: string[] = [];
  for (let i = 1; i <= n; i++) {
    for (let j = 1; j <= k; j++) {
      out.push(`${prefix}${i}${j}`);
    }
  }
  return out;
}
