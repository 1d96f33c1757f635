/**
 * Binary embedding record, matching the engine reader exactly
 * (docs/FORMATS.md in the engine repository):
 *
 *   magic "NCLI" | version u8=1 | tokenizer_id (u32 LE len + utf8)
 *   | d u32 LE | s u32 LE | s x token (u32 LE len + utf8)
 *   | s*d float32 LE row-major
 */

export const FORMAT_MAGIC = Buffer.from('NCLI', 'ascii');
export const FORMAT_VERSION = 1;

export interface DecodedRecord {
  tokenizerId: string;
  tokens: string[];
  d: number;
  vectors: Float32Array; // s*d row-major
  end: number;
}

function u32(value: number): Buffer {
  const buf = Buffer.alloc(4);
  buf.writeUInt32LE(value >>> 0);
  return buf;
}

function lengthPrefixed(text: string): Buffer {
  const bytes = Buffer.from(text, 'utf-8');
  return Buffer.concat([u32(bytes.length), bytes]);
}

export function encodeRecord(
  tokenizerId: string,
  tokens: string[],
  vectors: Float32Array,
  d: number,
): Buffer {
  const s = tokens.length;
  if (vectors.length !== s * d) {
    throw new Error(`vector payload has ${vectors.length} floats, expected ${s}*${d}`);
  }
  const floats = Buffer.alloc(4 * vectors.length);
  for (let i = 0; i < vectors.length; i++) {
    floats.writeFloatLE(vectors[i], 4 * i);
  }
  return Buffer.concat([
    FORMAT_MAGIC,
    Buffer.from([FORMAT_VERSION]),
    lengthPrefixed(tokenizerId),
    u32(d),
    u32(s),
    ...tokens.map(lengthPrefixed),
    floats,
  ]);
}

export function decodeRecord(buf: Buffer, offset = 0): DecodedRecord {
  if (!buf.subarray(offset, offset + 4).equals(FORMAT_MAGIC)) {
    throw new Error(`bad magic at offset ${offset}`);
  }
  let pos = offset + 4;
  const version = buf.readUInt8(pos);
  pos += 1;
  if (version !== FORMAT_VERSION) {
    throw new Error(`unsupported format version ${version}`);
  }
  const tidLen = buf.readUInt32LE(pos);
  pos += 4;
  const tokenizerId = buf.subarray(pos, pos + tidLen).toString('utf-8');
  pos += tidLen;
  const d = buf.readUInt32LE(pos);
  const s = buf.readUInt32LE(pos + 4);
  pos += 8;
  const tokens: string[] = [];
  for (let i = 0; i < s; i++) {
    const len = buf.readUInt32LE(pos);
    pos += 4;
    tokens.push(buf.subarray(pos, pos + len).toString('utf-8'));
    pos += len;
  }
  const vectors = new Float32Array(s * d);
  for (let i = 0; i < vectors.length; i++) {
    vectors[i] = buf.readFloatLE(pos + 4 * i);
  }
  pos += 4 * vectors.length;
  return { tokenizerId, tokens, d, vectors, end: pos };
}
