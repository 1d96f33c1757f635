"""End-to-end wiring: corpus turns -> embeddings -> similarities -> grounding.

Candidate (persona/knowledge) embeddings may be served from a persistent
cache; utterance embeddings are always computed fresh within the run
(utterances are not known ahead of time, so caching them would not model
deployment). A per-run memo still dedups identical utterance texts.

Grounding outputs are bit-identical with the cache on or off: the cached
path stores exactly the float32 matrices the direct path computes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .dataset import CandidateSet, DialogTurn
from .embedstore import (
    EmbeddingCache,
    HashedProvider,
    ImportProvider,
    ProjectionMatrix,
    TokenMatrix,
    cache_get_or_embed,
    cache_scope,
    embed_text,
    reduce_and_normalize,
)
from .grounding import (
    GroundingHead,
    GroundingOutput,
    LossWeights,
    TurnFeatures,
    build_lm_input,
    fit_heads,
    ground_turn,
)
from .ncli import ncli

DEFAULT_DIM = 64
DEFAULT_MAX_TOKENS = 256


@dataclass(frozen=True)
class EmbeddingConfig:
    """How texts become reduced token matrices for scoring."""

    provider: str = "hashed"
    seed: int = 0
    dim: int = DEFAULT_DIM
    max_tokens: int = DEFAULT_MAX_TOKENS
    cache_dir: str | Path | None = None
    import_dir: str | Path | None = None


def build_provider(config: EmbeddingConfig):
    if config.provider == "hashed":
        return HashedProvider(seed=config.seed, dim=config.dim)
    if config.provider == "import":
        if config.import_dir is None:
            raise ValueError("provider 'import' requires an import directory")
        return ImportProvider(config.import_dir)
    raise ValueError(f"unknown embedding provider {config.provider!r}")


class ScoringContext:
    """Provider + projection + optional cache, with per-run utterance memo.

    Tracks candidate and utterance provider invocations separately so the
    cache benchmark can report them.
    """

    def __init__(self, config: EmbeddingConfig):
        self.config = config
        self.provider = build_provider(config)
        self.projection = ProjectionMatrix.create(seed=config.seed, d=self.provider.dim)
        self.cache: EmbeddingCache | None = None
        if config.cache_dir is not None:
            scope = cache_scope(self.provider, self.projection, config.max_tokens)
            self.cache = EmbeddingCache(config.cache_dir, scope)
        self._utterance_memo: dict[str, TokenMatrix] = {}
        self.candidate_calls = 0
        self.utterance_calls = 0

    @property
    def d0(self) -> int:
        return self.projection.d0

    def _embed_reduce(self, text: str) -> TokenMatrix:
        raw = embed_text(text, self.provider).truncated(self.config.max_tokens)
        return reduce_and_normalize(raw, self.projection)

    def candidate_matrix(self, text: str) -> TokenMatrix:
        if self.cache is not None:
            before = self.cache.provider_calls
            matrix = cache_get_or_embed(
                text, self.provider, self.projection, self.cache, self.config.max_tokens
            )
            self.candidate_calls += self.cache.provider_calls - before
            return matrix
        self.candidate_calls += 1
        return self._embed_reduce(text)

    def utterance_matrix(self, text: str) -> TokenMatrix:
        hit = self._utterance_memo.get(text)
        if hit is not None:
            return hit
        self.utterance_calls += 1
        matrix = self._embed_reduce(text)
        self._utterance_memo[text] = matrix
        return matrix


def utterance_text(turn: DialogTurn) -> str:
    """The text scored against candidates: the history joined by spaces."""
    return " ".join(turn.utterance_history)


def turn_sim_matrices(turn: DialogTurn, cs: CandidateSet, ctx: ScoringContext):
    """The four pairwise similarity matrices of one turn, each computed
    independently (the kernel is asymmetric, so none is a transpose)."""
    u = [ctx.utterance_matrix(utterance_text(turn))]
    personas = [ctx.candidate_matrix(p) for p in cs.persona]
    knowledge = [ctx.candidate_matrix(k) for k in cs.knowledge]
    return {
        "s_pu": ncli(personas, u, "persona", "utterance"),
        "s_pk": ncli(personas, knowledge, "persona", "knowledge"),
        "s_ku": ncli(knowledge, u, "knowledge", "utterance"),
        "s_kp": ncli(knowledge, personas, "knowledge", "persona"),
    }


def turn_features(turn: DialogTurn, cs: CandidateSet, ctx: ScoringContext, l_lm: float = 0.0) -> TurnFeatures:
    """Similarity features of one turn: the four NCLI matrices collapsed to
    the vectors the grounding heads consume."""
    mats = turn_sim_matrices(turn, cs, ctx)
    return TurnFeatures(
        dialog_id=turn.dialog_id,
        turn_index=turn.turn_index,
        s_pk_mean=mats["s_pk"].mean_rows(),
        s_pu=mats["s_pu"].values[:, 0],
        s_kp_mean=mats["s_kp"].mean_rows(),
        s_ku=mats["s_ku"].values[:, 0],
        persona_labels=turn.persona_labels,
        knowledge_label=turn.knowledge_label,
        l_lm=l_lm,
    )


def corpus_features(
    turns: list[DialogTurn],
    candidate_sets: dict[str, CandidateSet],
    ctx: ScoringContext,
    lm_loss_provider=None,
) -> list[TurnFeatures]:
    """Features for every turn, in corpus order (deterministic)."""
    features = []
    for turn in turns:
        l_lm = float(lm_loss_provider(turn)) if lm_loss_provider is not None else 0.0
        features.append(turn_features(turn, candidate_sets[turn.dialog_id], ctx, l_lm))
    return features


def train_heads(
    turns: list[DialogTurn],
    candidate_sets: dict[str, CandidateSet],
    config: EmbeddingConfig,
    weights: LossWeights,
    lr: float,
    epochs: int,
    lm_loss_provider=None,
) -> tuple[GroundingHead, GroundingHead, list[float]]:
    """Extract features once, then run deterministic full-batch descent."""
    ctx = ScoringContext(config)
    features = corpus_features(turns, candidate_sets, ctx, lm_loss_provider)
    return fit_heads(features, weights, lr, epochs)


@dataclass(frozen=True)
class GroundedTurn:
    dialog_id: str
    turn_index: int
    output: GroundingOutput
    lm_input: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "dialog_id": self.dialog_id,
            "turn_index": self.turn_index,
            "persona_probs": list(self.output.persona_probs),
            "selected_personas": list(self.output.selected_personas),
            "knowledge_probs": list(self.output.knowledge_probs),
            "selected_knowledge": self.output.selected_knowledge,
            "lm_input": list(self.lm_input),
        }


def ground_features(
    features: list[TurnFeatures],
    turns: list[DialogTurn],
    candidate_sets: dict[str, CandidateSet],
    pg_head: GroundingHead,
    kg_head: GroundingHead,
) -> list[GroundedTurn]:
    """Ground precomputed features (features aligned with turns)."""
    grounded = []
    for turn, f in zip(turns, features):
        cs = candidate_sets[turn.dialog_id]
        output = ground_turn(pg_head, kg_head, f)
        lm_input = build_lm_input(
            cs.knowledge[output.selected_knowledge],
            [cs.persona[i] for i in output.selected_personas],
            list(turn.utterance_history),
        )
        grounded.append(
            GroundedTurn(
                dialog_id=turn.dialog_id,
                turn_index=turn.turn_index,
                output=output,
                lm_input=tuple(lm_input),
            )
        )
    return grounded


def ground_corpus(
    turns: list[DialogTurn],
    candidate_sets: dict[str, CandidateSet],
    ctx: ScoringContext,
    pg_head: GroundingHead,
    kg_head: GroundingHead,
) -> list[GroundedTurn]:
    """Ground every turn: select personas and knowledge, build the LM input."""
    features = corpus_features(turns, candidate_sets, ctx)
    return ground_features(features, turns, candidate_sets, pg_head, kg_head)
