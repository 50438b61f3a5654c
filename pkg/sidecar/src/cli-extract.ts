/**
 * Feature extraction entry point.
 *
 * Usage: cli-extract --images LIST --out FILE [--extractor TAG]
 *
 * LIST is a newline-separated file of image paths; features are written
 * to FILE in AFS1 layout with the extractor tag and policies recorded
 * in the metadata trailer. Exit codes: 0 success, 2 input error.
 */

import { readFileSync } from "fs";
import { writeAfs1 } from "./afs";
import {
  EXTRACTOR_TAG,
  extractFeatures,
  extractorMetadata,
  FEATURE_DIM,
} from "./extractor";

const USAGE = "usage: cli-extract --images LIST --out FILE [--extractor TAG]";

function fail(code: number, message: string): never {
  process.stderr.write(message + "\n");
  process.exit(code);
}

interface Args {
  images: string;
  out: string;
  extractor: string;
}

function parseArgs(argv: string[]): Args {
  let images = "";
  let out = "";
  let extractor = EXTRACTOR_TAG;
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) {
      fail(2, `missing value for ${flag}\n${USAGE}`);
    }
    if (flag === "--images") {
      images = value;
    } else if (flag === "--out") {
      out = value;
    } else if (flag === "--extractor") {
      extractor = value;
    } else {
      fail(2, `unknown flag ${flag}\n${USAGE}`);
    }
  }
  if (images === "" || out === "") {
    fail(2, USAGE);
  }
  return { images, out, extractor };
}

function main(): void {
  const args = parseArgs(process.argv.slice(2));
  if (args.extractor !== EXTRACTOR_TAG) {
    fail(2, `unknown extractor tag ${args.extractor}; available: ${EXTRACTOR_TAG}`);
  }
  let listing: string;
  try {
    listing = readFileSync(args.images, "utf-8");
  } catch (err) {
    fail(2, `cannot read image list ${args.images}: ${(err as Error).message}`);
  }
  const paths = listing
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  if (paths.length === 0) {
    fail(2, `image list ${args.images} is empty`);
  }
  try {
    const rows = extractFeatures(paths);
    writeAfs1(args.out, rows, paths.length, FEATURE_DIM, extractorMetadata(paths.length));
  } catch (err) {
    fail(2, (err as Error).message);
  }
  process.stdout.write(
    `wrote ${paths.length} rows of ${FEATURE_DIM} to ${args.out} (${args.extractor})\n`,
  );
}

main();
