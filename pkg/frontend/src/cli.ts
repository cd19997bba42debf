#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { DataError, SchemaError } from "./csv.js";
import { renderPlot, type PlotKind } from "./plot.js";

class UsageFailure extends Error {}

export async function main(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .command(
      "plot",
      "render one SVG figure from preqmdl CSV output",
      (y) =>
        y
          .option("kind", {
            choices: ["regret", "pareto", "rolling_loss"] as const,
            demandOption: true,
            describe: "figure type",
          })
          .option("in", {
            type: "string",
            demandOption: true,
            describe: "steps.csv (regret, rolling_loss) or index.csv (pareto)",
          })
          .option("against", {
            type: "string",
            describe: "baseline steps.csv for regret; defaults to --in",
          })
          .option("out", {
            type: "string",
            demandOption: true,
            describe: "output .svg path",
          })
          .option("window", {
            type: "number",
            default: 500,
            describe: "rolling mean window (rolling_loss only)",
          }),
      (args) => {
        renderPlot({
          kind: args.kind as PlotKind,
          input: args.in,
          against: args.against,
          output: args.out,
          window: args.window,
        });
        console.log(`wrote ${args.out}`);
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      if (err) throw err;
      throw new UsageFailure(msg);
    })
    .exitProcess(false);

  try {
    await parser.parseAsync();
    return 0;
  } catch (err) {
    if (err instanceof UsageFailure) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    const isFsError = err instanceof Error && "code" in err;
    if (err instanceof SchemaError || err instanceof DataError || isFsError) {
      console.error(`data error: ${(err as Error).message}`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
