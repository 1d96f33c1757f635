import { createHash } from 'node:crypto';

export interface TokenEmbedding {
  tokens: string[];
  /** s*d row-major token embeddings. */
  vectors: Float32Array;
}

export interface Encoder {
  /** Model identifier recorded in the manifest. */
  model: string;
  /** Hashing namespace; the engine hashes lookups with this id. */
  tokenizerId: string;
  /** Hidden size per token. */
  d: number;
  encode(text: string): Promise<TokenEmbedding>;
}

/**
 * Deterministic offline encoder used by the tests and as a stand-in when
 * no model hub is reachable. Tokenizes on whitespace (lowercased) and
 * derives each token's vector from SHA-256 over (model config, position,
 * token), so exports are byte-identical across runs and platforms. The
 * layer flag is mixed into the stream to mimic layer-dependent outputs.
 */
export class TestEncoder implements Encoder {
  readonly model: string;
  readonly tokenizerId: string;
  readonly d: number;
  private readonly layer: string;

  constructor(d = 32, layer = 'last') {
    this.d = d;
    this.layer = layer;
    this.model = `test-encoder-d${d}`;
    this.tokenizerId = `test-encoder-d${d}-${layer}`;
  }

  async encode(text: string): Promise<TokenEmbedding> {
    const tokens = text.toLowerCase().split(/\s+/).filter((t) => t.length > 0);
    if (tokens.length === 0) {
      throw new Error(`text has no tokens: ${JSON.stringify(text)}`);
    }
    const vectors = new Float32Array(tokens.length * this.d);
    tokens.forEach((token, position) => {
      const row = this.tokenVector(token, position);
      vectors.set(row, position * this.d);
    });
    return { tokens, vectors };
  }

  private tokenVector(token: string, position: number): Float32Array {
    const seed = `${this.tokenizerId}|pos=${position}|${token}`;
    const row = new Float32Array(this.d);
    let block = Buffer.alloc(0);
    let counter = 0;
    for (let i = 0; i < this.d; i++) {
      const needed = 4 * (i % 8) + 4;
      if (i % 8 === 0) {
        block = createHash('sha256').update(`${seed}|${counter++}`).digest();
      }
      const value = block.readUInt32LE(needed - 4);
      row[i] = (value / 0xffffffff) * 2 - 1; // uniform in [-1, 1]
    }
    return row;
  }
}

/**
 * Encoder backed by a pretrained transformer from a public model hub via
 * `@huggingface/transformers` (an optional dependency, loaded lazily).
 * Exports the last hidden state per token in evaluation mode.
 */
export class HubEncoder implements Encoder {
  readonly model: string;
  readonly tokenizerId: string;
  readonly d: number;
  private readonly tokenizer: any;
  private readonly net: any;

  private constructor(model: string, tokenizer: any, net: any, d: number) {
    this.model = model;
    this.tokenizerId = `hub:${model}`;
    this.tokenizer = tokenizer;
    this.net = net;
    this.d = d;
  }

  static async load(model: string, layer: string): Promise<HubEncoder> {
    if (layer !== 'last') {
      throw new Error(`hub encoder exports the last hidden state only, got layer=${layer}`);
    }
    const moduleName = '@huggingface/transformers';
    let transformers: any;
    try {
      transformers = await import(moduleName);
    } catch (err: any) {
      throw new Error(
        `cannot load ${moduleName} (${err.message}); install it to export from a model hub, ` +
          `or use --model test`,
      );
    }
    let tokenizer: any;
    let net: any;
    try {
      tokenizer = await transformers.AutoTokenizer.from_pretrained(model);
      net = await transformers.AutoModel.from_pretrained(model);
    } catch (err: any) {
      throw new Error(`cannot load model ${model}: ${err.message}`);
    }
    const d =
      net.config?.hidden_size ?? net.config?.d_model ?? net.config?.n_embd ?? 0;
    if (!d) {
      throw new Error(`model ${model} does not expose a hidden size`);
    }
    return new HubEncoder(model, tokenizer, net, d);
  }

  async encode(text: string): Promise<TokenEmbedding> {
    const inputs = await this.tokenizer(text);
    const output = await this.net(inputs);
    const hidden = output.last_hidden_state; // [1, s, d]
    const [, s, d] = hidden.dims;
    const ids = Array.from(inputs.input_ids.data as Iterable<bigint | number>).map(Number);
    const tokens: string[] = this.tokenizer.model.convert_ids_to_tokens(ids);
    const vectors = new Float32Array(hidden.data.slice(0, s * d));
    return { tokens, vectors };
  }
}

export async function buildEncoder(model: string, layer: string, testDim: number): Promise<Encoder> {
  if (model === 'test' || model === 'test-encoder') {
    return new TestEncoder(testDim, layer);
  }
  return HubEncoder.load(model, layer);
}
