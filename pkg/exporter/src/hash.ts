import { createHash } from 'node:crypto';

/**
 * 64-bit content hash shared with the engine: first 8 bytes, little-endian,
 * of SHA-256(namespace || 0x1F || payload), rendered as 16 lowercase hex
 * digits. The namespace is the tokenizer id, so engine-side lookups agree
 * with exported records by construction.
 */
export function hash64Hex(namespace: string, payload: string): string {
  const digest = createHash('sha256')
    .update(Buffer.from(namespace, 'utf-8'))
    .update(Buffer.from([0x1f]))
    .update(Buffer.from(payload, 'utf-8'))
    .digest();
  // Little-endian u64: most significant byte is digest[7].
  return Buffer.from(digest.subarray(0, 8)).reverse().toString('hex');
}
