/**
 * CLI: `stiefelkf-figures render --kind <coords|sphere3d|snr|eta>
 *        --in <csv...> --out <file.svg>`
 *
 * Input order for coords/sphere3d: trajectory.csv measurements.csv
 * filtered.csv.  snr takes sweep.csv; eta takes one or more eta_curve.csv.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { FigureKind, render } from "./render.js";

function usage(): never {
  console.error(
    "usage: stiefelkf-figures render --kind <coords|sphere3d|snr|eta> " +
      "--in <csv...> --out <file.svg>",
  );
  process.exit(2);
}

export function main(argv: string[]): number {
  if (argv[0] !== "render") usage();
  let kind: string | undefined;
  const inputs: string[] = [];
  let out: string | undefined;
  for (let i = 1; i < argv.length; i++) {
    switch (argv[i]) {
      case "--kind":
        kind = argv[++i];
        break;
      case "--in":
        while (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
          inputs.push(argv[++i]);
        }
        break;
      case "--out":
        out = argv[++i];
        break;
      default:
        usage();
    }
  }
  if (!kind || !out || inputs.length === 0) usage();
  if (!["coords", "sphere3d", "snr", "eta"].includes(kind)) {
    console.error(`error: unknown figure kind "${kind}"`);
    return 1;
  }
  try {
    const svg = render({
      kind: kind as FigureKind,
      inputs: inputs.map((p) => readFileSync(p, "utf8")),
    });
    writeFileSync(out, svg);
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
  return 0;
}

process.exit(main(process.argv.slice(2)));
