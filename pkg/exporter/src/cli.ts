#!/usr/bin/env node
/**
 * ncli-export: extract token-level embeddings for a dialogue corpus and
 * write them in the engine's binary import format.
 *
 *   ncli-export --corpus corpus.jsonl --model Xenova/all-MiniLM-L6-v2 --out export/
 *   ncli-export --corpus corpus.jsonl --model test --out export/ [--test-dim 32]
 *
 * Flags: --layer last (default), --max-tokens 256 (default).
 */

import { buildEncoder } from './encoder.js';
import { exportCorpus } from './export.js';

interface Args {
  corpus: string;
  model: string;
  out: string;
  layer: string;
  maxTokens: number;
  testDim: number;
}

function parseArgs(argv: string[]): Args {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith('--') || value === undefined) {
      throw new Error(`cannot parse arguments near ${flag}`);
    }
    args[flag.slice(2)] = value;
  }
  for (const required of ['corpus', 'model', 'out']) {
    if (!(required in args)) {
      throw new Error(`missing required flag --${required}`);
    }
  }
  const maxTokens = Number(args['max-tokens'] ?? '256');
  const testDim = Number(args['test-dim'] ?? '32');
  if (!Number.isInteger(maxTokens) || maxTokens < 1) {
    throw new Error(`--max-tokens must be a positive integer, got ${args['max-tokens']}`);
  }
  if (!Number.isInteger(testDim) || testDim < 4) {
    throw new Error(`--test-dim must be an integer >= 4, got ${args['test-dim']}`);
  }
  return {
    corpus: args.corpus,
    model: args.model,
    out: args.out,
    layer: args.layer ?? 'last',
    maxTokens,
    testDim,
  };
}

export async function main(argv: string[]): Promise<number> {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err: any) {
    console.error(`error: ${err.message}`);
    return 1;
  }
  try {
    const encoder = await buildEncoder(args.model, args.layer, args.testDim);
    const manifest = await exportCorpus(encoder, {
      corpusPath: args.corpus,
      outDir: args.out,
      layer: args.layer,
      maxTokens: args.maxTokens,
    });
    console.log(
      JSON.stringify({
        out: args.out,
        model: manifest.model,
        tokenizer_id: manifest.tokenizer_id,
        d: manifest.d,
        records: manifest.records.length,
        truncated: manifest.records.filter((r) => r.truncated).length,
      }),
    );
    return 0;
  } catch (err: any) {
    console.error(`error: ${err.message}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1] && import.meta.url.endsWith(process.argv[1].split('/').pop()!);
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
