/**
 * Pairwise perceptual scoring plugin.
 *
 * Speaks the external-scorer protocol: the last argument is a manifest
 * whose lines are "<index> <gt_path> <pred_path>", and one
 * "<index> <score>" line is printed per pair, in manifest order with
 * indices preserved. The backbone choice is recorded on stderr so it
 * lands in logs without disturbing the scored stream. Exit codes: 0
 * success, 2 input error (bad manifest or unreadable pair).
 */

import { readFileSync } from "fs";
import { LPIPS_BACKBONE, lpipsScore } from "./lpips";
import { loadRaster } from "./png";

function fail(code: number, message: string): never {
  process.stderr.write(message + "\n");
  process.exit(code);
}

interface Pair {
  index: number;
  gt: string;
  pred: string;
}

function parseManifest(path: string): Pair[] {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch (err) {
    fail(2, `cannot read manifest ${path}: ${(err as Error).message}`);
  }
  const pairs: Pair[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (line.length === 0) {
      continue;
    }
    const fields = line.split(/\s+/);
    const index = Number(fields[0]);
    if (fields.length !== 3 || !Number.isInteger(index)) {
      fail(2, `malformed manifest line: ${line}`);
    }
    pairs.push({ index, gt: fields[1], pred: fields[2] });
  }
  if (pairs.length === 0) {
    fail(2, `manifest ${path} has no pairs`);
  }
  return pairs;
}

function main(): void {
  const argv = process.argv.slice(2);
  if (argv.length === 0) {
    fail(2, "usage: cli-lpips MANIFEST");
  }
  const pairs = parseManifest(argv[argv.length - 1]);
  process.stderr.write(`backbone: ${LPIPS_BACKBONE}\n`);
  const lines: string[] = [];
  for (const pair of pairs) {
    let score: number;
    try {
      score = lpipsScore(loadRaster(pair.gt), loadRaster(pair.pred));
    } catch (err) {
      fail(2, (err as Error).message);
    }
    lines.push(`${pair.index} ${score}`);
  }
  process.stdout.write(lines.join("\n") + "\n");
}

main();
