"""The binary embedding interchange format, end to end.

An external exporter (any language, any encoder) writes one binary record
per distinct corpus text plus a JSON manifest; the engine then grounds
with those embeddings instead of the built-in hashed provider. This demo
plays both sides in-process: it writes an export directory by hand, then
reads it back through the import provider.
"""

import json
import tempfile
from pathlib import Path

from ncli_ground import HashedProvider, ImportProvider, ProjectionMatrix, reduce_and_normalize
from ncli_ground.embedstore import encode_record
from ncli_ground.rng import hash64_hex

TOKENIZER_ID = "demo-export-v1"
texts = [
    "the colosseum could hold fifty thousand spectators",
    "i enjoy ancient history",
    "what is the colosseum",
]

# --- exporter side: records concatenated into one blob, offsets in the manifest
source = HashedProvider(seed=42, dim=32)  # stand-in for a neural encoder
blob = bytearray()
records = []
for text in texts:
    raw = source.embed(text)
    records.append(
        {"text_hash": hash64_hex(TOKENIZER_ID, text), "token_count": raw.s, "offset": len(blob)}
    )
    blob += encode_record(TOKENIZER_ID, raw.tokens, raw.vectors)

with tempfile.TemporaryDirectory() as out:
    out_dir = Path(out)
    (out_dir / "embeddings.bin").write_bytes(bytes(blob))
    (out_dir / "manifest.json").write_text(
        json.dumps({"model": "demo-encoder", "tokenizer_id": TOKENIZER_ID, "d": 32, "records": records})
    )
    print(f"exported {len(records)} records, {len(blob)} bytes")

    # --- engine side: look texts up by content hash, reduce, and score
    provider = ImportProvider(out_dir)
    projection = ProjectionMatrix.create(seed=0, d=provider.dim)
    for text in texts:
        raw = provider.embed(text)
        reduced = reduce_and_normalize(raw, projection)
        print(f"  {raw.text_hash}  s={raw.s:>2}  d={raw.d} -> d0={reduced.d0}  {text[:40]!r}")

    try:
        provider.embed("this text was never exported")
    except KeyError as exc:
        print(f"\nmissing text raises a miss naming the hash:\n  {exc}")
