"""Dialogue evaluation metrics: perplexity, ROUGE-1/2/L, averaged BLEU,
unigram F1, and grounding accuracies.

Conventions, pinned so scores are comparable only within this engine:

* all text metrics tokenize with the engine tokenizer;
* ROUGE is reported as F-measure;
* ``bleu_avg`` is the mean of smoothed sentence BLEU-1..4 with add-one
  smoothing on every n-gram precision and brevity penalty
  exp(1 - |ref|/|hyp|) when the hypothesis is shorter; it is in [0, 1] at
  function level and scaled to [0, 100] in reports;
* F1 is token-overlap F1 (the dialogue-literature convention), not a
  label-level confusion-matrix F1.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .dataset import DialogTurn
from .grounding import GroundingOutput
from .tokenizer import tokenize


def perplexity(token_nlls: list[float]) -> float:
    """exp(mean of per-token negative log-likelihoods, natural-log units)."""
    if not token_nlls:
        raise ValueError("perplexity needs at least one NLL value")
    return math.exp(sum(token_nlls) / len(token_nlls))


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_overlap(hyp: Counter, ref: Counter) -> int:
    return sum((hyp & ref).values())


def _f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(hypothesis: str, reference: str, n: int) -> float:
    """F-measure of clipped n-gram overlap; 0 when either side lacks n-grams."""
    hyp = _ngrams(tokenize(hypothesis), n)
    ref = _ngrams(tokenize(reference), n)
    hyp_total = sum(hyp.values())
    ref_total = sum(ref.values())
    if hyp_total == 0 or ref_total == 0:
        return 0.0
    overlap = _clipped_overlap(hyp, ref)
    return _f_measure(overlap / hyp_total, overlap / ref_total)


def rouge_l(hypothesis: str, reference: str) -> float:
    """LCS-based F-measure: P = LCS/|hyp|, R = LCS/|ref|."""
    hyp = tokenize(hypothesis)
    ref = tokenize(reference)
    if not hyp or not ref:
        return 0.0
    prev = [0] * (len(ref) + 1)
    for h_token in hyp:
        current = [0]
        for j, r_token in enumerate(ref, start=1):
            if h_token == r_token:
                current.append(prev[j - 1] + 1)
            else:
                current.append(max(prev[j], current[j - 1]))
        prev = current
    lcs = prev[-1]
    return _f_measure(lcs / len(hyp), lcs / len(ref))


def unigram_f1(hypothesis: str, reference: str) -> float:
    """Token-overlap F1 over clipped unigram counts."""
    return rouge_n(hypothesis, reference, 1)


def bleu_avg(hypothesis: str, reference: str) -> float:
    """Mean of smoothed sentence BLEU-1..4, in [0, 1].

    Every n-gram precision is add-one smoothed: (matches+1)/(count+1).
    """
    hyp = tokenize(hypothesis)
    ref = tokenize(reference)
    if not hyp:
        return 0.0
    brevity = math.exp(1.0 - len(ref) / len(hyp)) if len(hyp) < len(ref) else 1.0
    precisions = []
    for n in range(1, 5):
        hyp_ngrams = _ngrams(hyp, n)
        ref_ngrams = _ngrams(ref, n)
        matches = _clipped_overlap(hyp_ngrams, ref_ngrams)
        total = sum(hyp_ngrams.values())
        precisions.append((matches + 1.0) / (total + 1.0))
    bleus = []
    for k in range(1, 5):
        geo_mean = math.exp(sum(math.log(p) for p in precisions[:k]) / k)
        bleus.append(brevity * geo_mean)
    return sum(bleus) / 4.0


def grounding_accuracies(
    outputs: list[GroundingOutput], turns: list[DialogTurn]
) -> tuple[float, float, float]:
    """(PG, PG_MTL, KG) accuracies as percentages.

    PG scores every (turn, persona entry) pair; PG_MTL requires every entry of
    a turn to be predicted correctly; KG compares the selected knowledge
    index against the gold label.
    """
    if len(outputs) != len(turns):
        raise ValueError(f"{len(outputs)} outputs for {len(turns)} turns")
    pair_hits = pair_total = 0
    mtl_hits = kg_hits = 0
    for output, turn in zip(outputs, turns):
        if len(output.persona_probs) != len(turn.persona_labels):
            raise ValueError(
                f"dialog {turn.dialog_id!r} turn {turn.turn_index}: "
                f"{len(output.persona_probs)} persona probs for "
                f"{len(turn.persona_labels)} labels"
            )
        selected = set(output.selected_personas)
        matches = [(i in selected) == label for i, label in enumerate(turn.persona_labels)]
        pair_hits += sum(matches)
        pair_total += len(matches)
        mtl_hits += all(matches)
        kg_hits += output.selected_knowledge == turn.knowledge_label
    n = len(turns)
    return (
        100.0 * pair_hits / pair_total,
        100.0 * mtl_hits / n,
        100.0 * kg_hits / n,
    )


@dataclass(frozen=True)
class EvalReport:
    """Corpus-level evaluation summary; text metrics are means over turns."""

    f1: float
    rouge1: float
    rouge2: float
    rougeL: float
    bleu_avg: float  # scaled to [0, 100] at report level
    pg_accuracy: float
    pg_mtl_accuracy: float
    kg_accuracy: float
    perplexity: float | None
    turn_count: int

    def to_dict(self) -> dict:
        return {
            "f1": self.f1,
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "bleu_avg": self.bleu_avg,
            "pg_accuracy": self.pg_accuracy,
            "pg_mtl_accuracy": self.pg_mtl_accuracy,
            "kg_accuracy": self.kg_accuracy,
            "perplexity": self.perplexity,
            "turn_count": self.turn_count,
        }


def build_report(
    outputs: list[GroundingOutput],
    turns: list[DialogTurn],
    text_pairs: list[tuple[str, str]],
    token_nlls: list[float] | None = None,
) -> EvalReport:
    """Aggregate per-turn metrics; ``text_pairs`` are (hypothesis,
    reference) per turn, perplexity is omitted without NLLs."""
    if len(text_pairs) != len(turns):
        raise ValueError(f"{len(text_pairs)} text pairs for {len(turns)} turns")
    pg, pg_mtl, kg = grounding_accuracies(outputs, turns)
    n = len(turns)

    def mean(metric) -> float:
        return sum(metric(h, r) for h, r in text_pairs) / n

    return EvalReport(
        f1=mean(unigram_f1),
        rouge1=mean(lambda h, r: rouge_n(h, r, 1)),
        rouge2=mean(lambda h, r: rouge_n(h, r, 2)),
        rougeL=mean(rouge_l),
        bleu_avg=100.0 * mean(bleu_avg),
        pg_accuracy=pg,
        pg_mtl_accuracy=pg_mtl,
        kg_accuracy=kg,
        perplexity=perplexity(token_nlls) if token_nlls else None,
        turn_count=n,
    )
