"""Command-line entry point: ncli-ground {stats|precompute|train|ground|eval|sweep|bench}.

All outputs are JSON/JSONL with sorted keys, so every subcommand is
byte-deterministic for a fixed seed (wall-time fields excepted). Exit
codes: 0 success, 1 validation error, 2 internal failure.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

from .dataset import corpus_stats, load_corpus
from .embedstore import CacheCorruptError, precompute_candidates
from .grounding import (
    GroundingHead,
    GroundingOutput,
    LossWeights,
    TrainingDivergedError,
    fit_heads,
)
from .metrics import build_report
from .pipeline import (
    DEFAULT_DIM,
    DEFAULT_MAX_TOKENS,
    EmbeddingConfig,
    ScoringContext,
    corpus_features,
    ground_features,
    train_heads,
    turn_sim_matrices,
)

CACHE_DIR_ENV = "NCLI_CACHE_DIR"

DEFAULT_SWEEP_GRID = [
    (2.0, 2.0, 6.0),
    (2.0, 4.0, 4.0),
    (2.0, 6.0, 2.0),
    (4.0, 2.0, 4.0),
    (4.0, 4.0, 2.0),
    (6.0, 2.0, 2.0),
]

SWEEP_WEIGHT_SUM = 10.0
SWEEP_SUM_TOL = 1e-9


class ValidationError(ValueError):
    """Bad arguments or inputs; maps to exit code 1."""


class BenchMismatchError(RuntimeError):
    """Cache variants produced different grounding outputs (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; spec wants 1
        raise ValidationError(message)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _common_flags(parser: argparse.ArgumentParser, with_provider: bool = True) -> None:
    parser.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    parser.add_argument(
        "--dim", type=int, default=None,
        help=f"provider embedding dimension (default {DEFAULT_DIM}; import provider uses the manifest)",
    )
    parser.add_argument(
        "--max-tokens", type=int, default=DEFAULT_MAX_TOKENS,
        help=f"cap on tokens per text (default {DEFAULT_MAX_TOKENS})",
    )
    parser.add_argument(
        "--cache-dir", default=None,
        help=f"embedding cache directory (default: ${CACHE_DIR_ENV} if set)",
    )
    if with_provider:
        parser.add_argument("--provider", choices=["hashed", "import"], default="hashed")
        parser.add_argument("--import-dir", default=None, help="exported embeddings (provider=import)")


def _resolve_cache_dir(args) -> str | None:
    if args.cache_dir is not None:
        return args.cache_dir
    return os.environ.get(CACHE_DIR_ENV) or None


def _config(args, cache_dir: str | None) -> EmbeddingConfig:
    provider = getattr(args, "provider", "hashed")
    import_dir = getattr(args, "import_dir", None)
    if provider == "import" and import_dir is None:
        raise ValidationError("--provider import requires --import-dir")
    if provider == "import" and args.dim is not None:
        raise ValidationError("--dim is determined by the import manifest; drop the flag")
    dim = args.dim if args.dim is not None else DEFAULT_DIM
    if dim < 4:
        raise ValidationError(f"--dim must be >= 4, got {dim}")
    if args.max_tokens < 1:
        raise ValidationError(f"--max-tokens must be >= 1, got {args.max_tokens}")
    return EmbeddingConfig(
        provider=provider,
        seed=args.seed,
        dim=dim,
        max_tokens=args.max_tokens,
        cache_dir=cache_dir,
        import_dir=import_dir,
    )


def _load_heads(path: str) -> tuple[GroundingHead, GroundingHead]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        pg = GroundingHead(task="pg", **obj["pg"])
        kg = GroundingHead(task="kg", **obj["kg"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot load heads from {path}: {exc!r}") from None
    return pg, kg


def _save_heads(path: str, pg: GroundingHead, kg: GroundingHead) -> None:
    payload = _dump({"pg": pg.to_dict(), "kg": kg.to_dict()}) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def _write_grounded(path, grounded, sims_per_turn=None) -> bytes:
    lines = []
    for i, record in enumerate(grounded):
        obj = record.to_json()
        if sims_per_turn is not None:
            obj["sims"] = {name: sim.to_json() for name, sim in sims_per_turn[i].items()}
        lines.append(_dump(obj))
    payload = ("\n".join(lines) + "\n").encode("utf-8")
    if path is not None:
        Path(path).write_bytes(payload)
    return payload


def _cmd_stats(args) -> int:
    turns, candidate_sets = load_corpus(args.corpus)
    print(_dump(corpus_stats(turns, candidate_sets).to_dict()))
    return 0


def _cmd_precompute(args) -> int:
    cache_dir = _resolve_cache_dir(args)
    if cache_dir is None:
        raise ValidationError(f"precompute requires --cache-dir or ${CACHE_DIR_ENV}")
    turns, candidate_sets = load_corpus(args.corpus)
    ctx = ScoringContext(_config(args, cache_dir))
    stored = precompute_candidates(
        candidate_sets, ctx.provider, ctx.projection, ctx.cache, ctx.config.max_tokens
    )
    print(
        _dump(
            {
                "cache_dir": str(cache_dir),
                "provider_calls": ctx.cache.provider_calls,
                "stored": stored,
                "dialogs": len(candidate_sets),
            }
        )
    )
    return 0


def _weights_from_args(args) -> LossWeights:
    try:
        return LossWeights(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _cmd_train(args) -> int:
    weights = _weights_from_args(args)
    if args.epochs < 1:
        raise ValidationError(f"--epochs must be >= 1, got {args.epochs}")
    if args.lr <= 0:
        raise ValidationError(f"--lr must be > 0, got {args.lr}")
    turns, candidate_sets = load_corpus(args.corpus)
    config = _config(args, _resolve_cache_dir(args))
    pg, kg, history = train_heads(turns, candidate_sets, config, weights, args.lr, args.epochs)
    _save_heads(args.out, pg, kg)
    print(
        _dump(
            {
                "epochs": args.epochs,
                "final_loss": history[-1],
                "initial_loss": history[0],
                "loss_history": history,
                "out": str(args.out),
                "turns": len(turns),
            }
        )
    )
    return 0


def _cmd_ground(args) -> int:
    turns, candidate_sets = load_corpus(args.corpus)
    pg, kg = _load_heads(args.heads)
    ctx = ScoringContext(_config(args, _resolve_cache_dir(args)))
    features = corpus_features(turns, candidate_sets, ctx)
    grounded = ground_features(features, turns, candidate_sets, pg, kg)
    sims_per_turn = None
    if args.dump_sims:
        sims_per_turn = [
            turn_sim_matrices(turn, candidate_sets[turn.dialog_id], ctx) for turn in turns
        ]
    _write_grounded(args.out, grounded, sims_per_turn)
    print(_dump({"out": str(args.out), "turns": len(grounded)}))
    return 0


def _read_grounded(path: str) -> list[dict]:
    records = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path} line {line_number}: {exc.msg}") from None
    return records


def _read_nll_file(path: str) -> list[float]:
    nlls: list[float] = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                nlls.extend(float(v) for v in obj["nlls"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path} line {line_number}: {exc!r}") from None
    if not nlls:
        raise ValidationError(f"{path} contains no NLL values")
    return nlls


def _outputs_from_records(records: list[dict], turns) -> list[GroundingOutput]:
    if len(records) != len(turns):
        raise ValidationError(f"{len(records)} grounded records for {len(turns)} turns")
    outputs = []
    for record, turn in zip(records, turns):
        if (
            record.get("dialog_id") != turn.dialog_id
            or record.get("turn_index") != turn.turn_index
        ):
            raise ValidationError(
                f"grounded record for {record.get('dialog_id')!r}/{record.get('turn_index')} "
                f"does not align with corpus turn {turn.dialog_id!r}/{turn.turn_index}"
            )
        try:
            outputs.append(
                GroundingOutput(
                    persona_probs=tuple(record["persona_probs"]),
                    selected_personas=tuple(record["selected_personas"]),
                    knowledge_probs=tuple(record["knowledge_probs"]),
                    selected_knowledge=int(record["selected_knowledge"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed grounded record: {exc!r}") from None
    return outputs


def _cmd_eval(args) -> int:
    turns, candidate_sets = load_corpus(args.corpus)
    records = _read_grounded(args.grounded)
    outputs = _outputs_from_records(records, turns)
    # Hypothesis: the generated response when a record carries one, else the
    # selected knowledge text (generation is provider-external).
    text_pairs = []
    for record, turn, output in zip(records, turns, outputs):
        hypothesis = record.get("response")
        if hypothesis is None:
            hypothesis = candidate_sets[turn.dialog_id].knowledge[output.selected_knowledge]
        text_pairs.append((hypothesis, turn.answer))
    nlls = _read_nll_file(args.nll_file) if args.nll_file else None
    report = build_report(outputs, turns, text_pairs, nlls)
    print(_dump(report.to_dict()))
    return 0


def _parse_sweep_points(args) -> list[LossWeights]:
    if args.point:
        raw_points = []
        for spec_str in args.point:
            parts = spec_str.split(",")
            if len(parts) != 3:
                raise ValidationError(f"--point expects alpha,beta,gamma; got {spec_str!r}")
            try:
                raw_points.append(tuple(float(p) for p in parts))
            except ValueError:
                raise ValidationError(f"non-numeric sweep point {spec_str!r}") from None
    else:
        raw_points = DEFAULT_SWEEP_GRID
    points = []
    for alpha, beta, gamma in raw_points:
        try:
            weights = LossWeights(alpha=alpha, beta=beta, gamma=gamma)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        if not weights.sweep_valid(SWEEP_WEIGHT_SUM, SWEEP_SUM_TOL):
            raise ValidationError(
                f"sweep point ({alpha}, {beta}, {gamma}) violates "
                f"alpha+beta+gamma={SWEEP_WEIGHT_SUM:g} "
                f"(sum={alpha + beta + gamma:g})"
            )
        points.append(weights)
    return points


def _cmd_sweep(args) -> int:
    points = _parse_sweep_points(args)  # validated before any training
    if args.epochs < 1:
        raise ValidationError(f"--epochs must be >= 1, got {args.epochs}")
    if args.lr <= 0:
        raise ValidationError(f"--lr must be > 0, got {args.lr}")
    turns, candidate_sets = load_corpus(args.corpus)

    cache_dir = _resolve_cache_dir(args)
    with tempfile.TemporaryDirectory(prefix="ncli-sweep-") as scratch:
        config = _config(args, cache_dir if cache_dir is not None else scratch)
        ctx = ScoringContext(config)
        precompute_candidates(
            candidate_sets, ctx.provider, ctx.projection, ctx.cache, config.max_tokens
        )
        features = corpus_features(turns, candidate_sets, ctx)

        rows = []
        for weights in points:
            pg, kg, history = fit_heads(features, weights, args.lr, args.epochs)
            grounded = ground_features(features, turns, candidate_sets, pg, kg)
            outputs = [g.output for g in grounded]
            text_pairs = [
                (
                    candidate_sets[t.dialog_id].knowledge[o.selected_knowledge],
                    t.answer,
                )
                for t, o in zip(turns, outputs)
            ]
            report = build_report(outputs, turns, text_pairs)
            rows.append(
                {
                    "alpha": weights.alpha,
                    "beta": weights.beta,
                    "gamma": weights.gamma,
                    "final_loss": history[-1],
                    "report": report.to_dict(),
                }
            )
    rows.sort(key=lambda r: (-r["report"]["kg_accuracy"], (r["alpha"], r["beta"], r["gamma"])))
    payload = _dump(rows)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


def _bench_variant(variant, turns, candidate_sets, config, pg, kg):
    start = time.monotonic_ns()
    ctx = ScoringContext(config)
    if ctx.cache is not None:
        precompute_candidates(
            candidate_sets, ctx.provider, ctx.projection, ctx.cache, config.max_tokens
        )
    features = corpus_features(turns, candidate_sets, ctx)
    grounded = ground_features(features, turns, candidate_sets, pg, kg)
    wall_ms = (time.monotonic_ns() - start) // 1_000_000
    payload = b"".join(_dump(g.to_json()).encode("utf-8") + b"\n" for g in grounded)
    candidate_calls = ctx.cache.provider_calls if ctx.cache is not None else ctx.candidate_calls
    report = {
        "variant": variant,
        "provider_calls": candidate_calls,
        "utterance_calls": ctx.utterance_calls,
        "wall_time_ms": int(wall_ms),
        "turns_processed": len(turns),
    }
    return report, payload


def run_bench(turns, candidate_sets, config: EmbeddingConfig, cache_root: str | Path, pg, kg):
    """Ground the corpus three ways (no-cache, cold, warm) and verify the
    outputs are bit-identical; only timing may differ."""
    bench_dir = Path(cache_root) / "bench-cache"
    if bench_dir.exists():
        shutil.rmtree(bench_dir)

    base = {k: getattr(config, k) for k in ("provider", "seed", "dim", "max_tokens", "import_dir")}
    reports = []
    payloads = []
    for variant, cache_dir in (
        ("no-cache", None),
        ("cold", bench_dir),
        ("warm", bench_dir),
    ):
        report, payload = _bench_variant(
            variant, turns, candidate_sets, EmbeddingConfig(cache_dir=cache_dir, **base), pg, kg
        )
        reports.append(report)
        payloads.append(payload)
    if not (payloads[0] == payloads[1] == payloads[2]):
        raise BenchMismatchError(
            "grounding outputs differ across cache variants; caching changed semantics"
        )
    warm = reports[2]
    if warm["provider_calls"] != 0:
        raise BenchMismatchError(
            f"warm run made {warm['provider_calls']} candidate provider calls, expected 0"
        )
    return reports, payloads[0]


def _cmd_bench(args) -> int:
    turns, candidate_sets = load_corpus(args.corpus)
    if args.heads:
        pg, kg = _load_heads(args.heads)
    else:
        # Untrained scoring heads: probabilities follow the raw similarities.
        pg = GroundingHead(w1=0.0, w2=1.0, bias=0.0, task="pg")
        kg = GroundingHead(w1=0.0, w2=1.0, bias=0.0, task="kg")

    cache_dir = _resolve_cache_dir(args)
    with tempfile.TemporaryDirectory(prefix="ncli-bench-") as scratch:
        root = cache_dir if cache_dir is not None else scratch
        config = _config(args, None)
        reports, _ = run_bench(turns, candidate_sets, config, root, pg, kg)
    print(_dump({"outputs_identical": True, "variants": reports}))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="ncli-ground", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="print corpus statistics as JSON")
    p.add_argument("corpus", help="JSONL corpus file")
    _common_flags(p, with_provider=False)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("precompute", help="embed all candidate entries into the cache")
    p.add_argument("--corpus", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_precompute)

    p = sub.add_parser("train", help="train grounding heads by full-batch descent")
    p.add_argument("--corpus", required=True)
    p.add_argument("--alpha", type=float, required=True, help="knowledge-grounding loss weight")
    p.add_argument("--beta", type=float, required=True, help="persona-grounding loss weight")
    p.add_argument("--gamma", type=float, required=True, help="language-model loss weight")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--out", required=True, help="output heads JSON path")
    _common_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("ground", help="select personas/knowledge for every turn")
    p.add_argument("--corpus", required=True)
    p.add_argument("--heads", required=True, help="heads JSON from train")
    p.add_argument("--out", required=True, help="output grounded JSONL path")
    p.add_argument("--dump-sims", action="store_true", help="include similarity matrices")
    _common_flags(p)
    p.set_defaults(func=_cmd_ground)

    p = sub.add_parser("eval", help="evaluate grounded output against the corpus")
    p.add_argument("--grounded", required=True, help="grounded JSONL from ground")
    p.add_argument("--corpus", required=True)
    p.add_argument("--nll-file", default=None, help="per-turn token NLLs (JSONL with 'nlls')")
    _common_flags(p, with_provider=False)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="train+evaluate over a loss-weight grid")
    p.add_argument("--corpus", required=True)
    p.add_argument(
        "--point",
        action="append",
        default=None,
        metavar="A,B,G",
        help=f"grid point alpha,beta,gamma summing to {SWEEP_WEIGHT_SUM:g} (repeatable)",
    )
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--out", default=None, help="also write the table to this path")
    _common_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("bench", help="compare no-cache/cold/warm grounding runs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--heads", default=None, help="optional heads JSON (default: scoring heads)")
    _common_flags(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (TrainingDivergedError, CacheCorruptError, BenchMismatchError) as exc:
        print(f"internal failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
