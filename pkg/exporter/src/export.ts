import { mkdirSync, renameSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { encodeRecord } from './binfmt.js';
import { distinctCorpusTexts } from './corpus.js';
import { Encoder } from './encoder.js';
import { hash64Hex } from './hash.js';

export interface ManifestRecord {
  text_hash: string;
  token_count: number;
  offset: number;
  truncated?: boolean;
}

export interface Manifest {
  model: string;
  tokenizer_id: string;
  d: number;
  layer: string;
  max_tokens: number;
  records: ManifestRecord[];
}

export interface ExportOptions {
  corpusPath: string;
  outDir: string;
  layer: string;
  maxTokens: number;
}

/**
 * Embed every distinct corpus text and write the engine's import layout:
 * `embeddings.bin` (concatenated binary records) and `manifest.json`.
 * Writes are append-only into temp files, finalized by atomic rename.
 */
export async function exportCorpus(encoder: Encoder, options: ExportOptions): Promise<Manifest> {
  const texts = distinctCorpusTexts(options.corpusPath);
  mkdirSync(options.outDir, { recursive: true });

  const chunks: Buffer[] = [];
  let offset = 0;
  const records: ManifestRecord[] = [];
  for (const text of texts) {
    let { tokens, vectors } = await encoder.encode(text);
    let truncated = false;
    if (tokens.length > options.maxTokens) {
      tokens = tokens.slice(0, options.maxTokens);
      vectors = vectors.slice(0, options.maxTokens * encoder.d);
      truncated = true;
    }
    const record = encodeRecord(encoder.tokenizerId, tokens, vectors, encoder.d);
    const entry: ManifestRecord = {
      text_hash: hash64Hex(encoder.tokenizerId, text),
      token_count: tokens.length,
      offset,
    };
    if (truncated) {
      entry.truncated = true;
    }
    records.push(entry);
    chunks.push(record);
    offset += record.length;
  }

  const manifest: Manifest = {
    model: encoder.model,
    tokenizer_id: encoder.tokenizerId,
    d: encoder.d,
    layer: options.layer,
    max_tokens: options.maxTokens,
    records,
  };

  const blobTmp = join(options.outDir, '.tmp-embeddings.bin');
  writeFileSync(blobTmp, Buffer.concat(chunks));
  renameSync(blobTmp, join(options.outDir, 'embeddings.bin'));
  const manifestTmp = join(options.outDir, '.tmp-manifest.json');
  writeFileSync(manifestTmp, JSON.stringify(manifest, null, 2) + '\n');
  renameSync(manifestTmp, join(options.outDir, 'manifest.json'));
  return manifest;
}
