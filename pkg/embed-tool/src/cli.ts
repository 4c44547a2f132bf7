#!/usr/bin/env node
/** Command line: pvrag-embed --images DIR --manifest FILE --out FILE
 *                            [--encoder NAME] [--device auto] */

import { DEFAULT_ENCODER } from './encoder.js';
import { embedDirectory } from './embed.js';

interface CliArgs {
  images?: string;
  manifest?: string;
  out?: string;
  encoder: string;
  device: string;
}

const USAGE =
  'usage: pvrag-embed --images DIR --manifest FILE --out FILE ' +
  `[--encoder NAME (default ${DEFAULT_ENCODER})] [--device auto]`;

function parseArgs(argv: string[]): CliArgs {
  const args: CliArgs = { encoder: DEFAULT_ENCODER, device: 'auto' };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = argv[i + 1];
    switch (flag) {
      case '--images':
      case '--manifest':
      case '--out':
      case '--encoder':
      case '--device':
        if (value === undefined) {
          throw new UsageError(`missing value for ${flag}`);
        }
        args[flag.slice(2) as 'images' | 'manifest' | 'out' | 'encoder' | 'device'] = value;
        i++;
        break;
      case '--help':
      case '-h':
        console.log(USAGE);
        process.exit(0);
        break;
      default:
        throw new UsageError(`unknown flag ${flag}`);
    }
  }
  if (!args.images || !args.manifest || !args.out) {
    throw new UsageError('--images, --manifest and --out are required');
  }
  return args;
}

class UsageError extends Error {}

export function main(argv: string[]): number {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(USAGE);
    return 2;
  }
  try {
    const summary = embedDirectory({
      imagesDir: args.images!,
      manifestPath: args.manifest!,
      outPath: args.out!,
      encoderName: args.encoder,
    });
    console.log(
      `embedded ${summary.records} records (dimension ${summary.dimension}, ` +
        `encoder ${summary.encoder}) -> ${summary.outPath}`,
    );
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
