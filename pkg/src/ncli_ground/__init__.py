"""Context retrieval for persona- and knowledge-grounded dialogue.

The engine scores candidate persona/knowledge entries against a
conversation with length-normalized token-level late interaction,
selects entries through small trainable grounding heads, evaluates with
standard dialogue metrics, and caches candidate embeddings so repeated
grounding never re-invokes the embedding provider.
"""

from .dataset import (
    CandidateSet,
    CorpusStats,
    DialogTurn,
    corpus_stats,
    load_corpus,
    save_corpus,
    synth_corpus,
)
from .embedstore import (
    EmbeddingCache,
    HashedProvider,
    ImportProvider,
    ProjectionMatrix,
    RawTokenMatrix,
    TokenMatrix,
    cache_get_or_embed,
    embed_text,
    precompute_candidates,
    reduce_and_normalize,
)
from .grounding import (
    GroundingHead,
    GroundingOutput,
    LossWeights,
    build_lm_input,
    fit_heads,
    head_gradients,
    kg_forward,
    kg_loss,
    kg_select,
    mean_rows,
    pg_forward,
    pg_loss,
    pg_select,
    total_loss,
)
from .metrics import (
    EvalReport,
    bleu_avg,
    grounding_accuracies,
    perplexity,
    rouge_l,
    rouge_n,
    unigram_f1,
)
from .ncli import SimMatrix, ncli, ncolbert
from .pipeline import EmbeddingConfig, ScoringContext, ground_corpus, train_heads
from .tokenizer import tokenize

__version__ = "0.1.0"

__all__ = [
    "CandidateSet",
    "CorpusStats",
    "DialogTurn",
    "EmbeddingCache",
    "EmbeddingConfig",
    "EvalReport",
    "GroundingHead",
    "GroundingOutput",
    "HashedProvider",
    "ImportProvider",
    "LossWeights",
    "ProjectionMatrix",
    "RawTokenMatrix",
    "ScoringContext",
    "SimMatrix",
    "TokenMatrix",
    "bleu_avg",
    "build_lm_input",
    "cache_get_or_embed",
    "corpus_stats",
    "embed_text",
    "fit_heads",
    "ground_corpus",
    "grounding_accuracies",
    "head_gradients",
    "kg_forward",
    "kg_loss",
    "kg_select",
    "load_corpus",
    "mean_rows",
    "ncli",
    "ncolbert",
    "perplexity",
    "pg_forward",
    "pg_loss",
    "pg_select",
    "precompute_candidates",
    "reduce_and_normalize",
    "rouge_l",
    "rouge_n",
    "save_corpus",
    "synth_corpus",
    "tokenize",
    "total_loss",
    "train_heads",
    "unigram_f1",
]
