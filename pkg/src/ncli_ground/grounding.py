"""Persona- and knowledge-grounding heads over late-interaction similarities.

Persona grounding (PG) is multi-label: an entrywise affine map over
(mean persona-knowledge similarity, persona-utterance similarity) through
a sigmoid; entries with probability strictly greater than 0.5 are
selected. Knowledge grounding (KG) is single-label: the analogous affine
map through a softmax, argmax-selected with lowest-index tie-break.

The two heads carry independent (w1, w2, bias) triples. Training is
full-batch gradient descent on closed-form gradients; the language-model
loss term is a pluggable per-turn provider. The default provider returns
0, in which case the gamma weight has no effect on head training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedstore import ShapeError
from .ncli import SimMatrix

_PROB_CLAMP = 1e-12

KNOWLEDGE_MARKER = "<knowledge>"
PERSONA_MARKER = "<persona>"
UTTERANCE_MARKER = "<utt>"
EOS_MARKER = "<eos>"


class TrainingDivergedError(RuntimeError):
    """Training hit a non-finite loss; message names the offending turn."""


@dataclass
class GroundingHead:
    """Trainable scalars of one grounding task ('pg' or 'kg')."""

    w1: float = 0.0
    w2: float = 0.0
    bias: float = 0.0
    task: str = "pg"

    def __post_init__(self):
        if self.task not in ("pg", "kg"):
            raise ValueError(f"unknown grounding task {self.task!r}")

    def to_dict(self) -> dict:
        return {"w1": self.w1, "w2": self.w2, "bias": self.bias}


@dataclass(frozen=True)
class LossWeights:
    """Weights of the combined objective: alpha*KG + beta*PG + gamma*LM."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name, value in (("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)):
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    def sweep_valid(self, target: float = 10.0, tol: float = 1e-9) -> bool:
        """Sweep-mode constraint: the three weights sum to the target."""
        return abs(self.alpha + self.beta + self.gamma - target) <= tol


@dataclass(frozen=True)
class GroundingOutput:
    persona_probs: tuple[float, ...]
    selected_personas: tuple[int, ...]
    knowledge_probs: tuple[float, ...]
    selected_knowledge: int


def mean_rows(sim: SimMatrix) -> np.ndarray:
    """Row means of a similarity matrix (out[i] = mean of row i)."""
    return sim.mean_rows()


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _affine(head: GroundingHead, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise ShapeError(f"input vectors differ in shape: {v1.shape} vs {v2.shape}")
    return head.w1 * v1 + head.w2 * v2 + head.bias


def pg_forward(head: GroundingHead, s_pk_mean: np.ndarray, s_pu: np.ndarray) -> np.ndarray:
    """Entrywise sigmoid(w1*s_pk_mean + w2*s_pu + bias)."""
    if head.task != "pg":
        raise ValueError(f"pg_forward needs a pg head, got task {head.task!r}")
    return _sigmoid(_affine(head, s_pk_mean, s_pu))


def pg_select(persona_probs: np.ndarray) -> tuple[int, ...]:
    """Indices with probability strictly greater than 0.5 (may be empty)."""
    return tuple(int(i) for i in np.nonzero(np.asarray(persona_probs) > 0.5)[0])


def kg_forward(head: GroundingHead, s_kp_mean: np.ndarray, s_ku: np.ndarray) -> np.ndarray:
    """softmax(w1*s_kp_mean + w2*s_ku + bias), max-subtracted for stability."""
    if head.task != "kg":
        raise ValueError(f"kg_forward needs a kg head, got task {head.task!r}")
    logits = _affine(head, s_kp_mean, s_ku)
    logits -= logits.max()
    ez = np.exp(logits)
    return ez / ez.sum()


def kg_select(knowledge_probs: np.ndarray) -> int:
    """Lowest index attaining the maximum probability."""
    return int(np.argmax(knowledge_probs))


def _clamped(probs: np.ndarray) -> np.ndarray:
    return np.clip(probs, _PROB_CLAMP, 1.0 - _PROB_CLAMP)


def pg_loss(persona_probs: np.ndarray, labels) -> float:
    """Mean binary cross-entropy over persona entries."""
    p = _clamped(np.asarray(persona_probs, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"{p.shape[0]} probabilities but {y.shape[0]} labels")
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def kg_loss(knowledge_probs: np.ndarray, label: int) -> float:
    """Cross-entropy of the gold knowledge index: -ln probs[label]."""
    p = np.asarray(knowledge_probs, dtype=np.float64)
    if not 0 <= label < p.shape[0]:
        raise IndexError(f"knowledge label {label} out of range [0, {p.shape[0]})")
    return float(-np.log(_clamped(p)[label]))


def total_loss(weights: LossWeights, l_kg: float, l_pg: float, l_lm: float) -> float:
    """Exact weighted sum alpha*l_kg + beta*l_pg + gamma*l_lm."""
    return weights.alpha * l_kg + weights.beta * l_pg + weights.gamma * l_lm


def pg_gradients(
    head: GroundingHead, s_pk_mean: np.ndarray, s_pu: np.ndarray, labels
) -> tuple[float, float, float]:
    """Closed-form gradients of pg_loss(pg_forward(...)) w.r.t. (w1, w2, bias)."""
    v1 = np.asarray(s_pk_mean, dtype=np.float64)
    v2 = np.asarray(s_pu, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    p = pg_forward(head, v1, v2)
    residual = (p - y) / p.shape[0]
    return float(residual @ v1), float(residual @ v2), float(residual.sum())


def kg_gradients(
    head: GroundingHead, s_kp_mean: np.ndarray, s_ku: np.ndarray, label: int
) -> tuple[float, float, float]:
    """Closed-form gradients of kg_loss(kg_forward(...)) w.r.t. (w1, w2, bias).

    The bias gradient is identically zero (softmax shift invariance)."""
    v1 = np.asarray(s_kp_mean, dtype=np.float64)
    v2 = np.asarray(s_ku, dtype=np.float64)
    p = kg_forward(head, v1, v2)
    residual = p.copy()
    residual[label] -= 1.0
    return float(residual @ v1), float(residual @ v2), float(residual.sum())


def head_gradients(head: GroundingHead, inputs, labels) -> tuple[float, float, float]:
    """Gradient dispatch by task: inputs is the (v1, v2) similarity pair."""
    v1, v2 = inputs
    if head.task == "pg":
        return pg_gradients(head, v1, v2, labels)
    return kg_gradients(head, v1, v2, labels)


@dataclass(frozen=True, eq=False)
class TurnFeatures:
    """Per-turn similarity features consumed by head training and scoring."""

    dialog_id: str
    turn_index: int
    s_pk_mean: np.ndarray
    s_pu: np.ndarray
    s_kp_mean: np.ndarray
    s_ku: np.ndarray
    persona_labels: tuple[bool, ...]
    knowledge_label: int
    l_lm: float = 0.0


def fit_heads(
    features: list[TurnFeatures],
    weights: LossWeights,
    lr: float,
    epochs: int,
) -> tuple[GroundingHead, GroundingHead, list[float]]:
    """Deterministic full-batch gradient descent from zero-initialized heads.

    Returns (pg_head, kg_head, history) where history[0] is the initial
    combined loss and history[e] the loss after e updates. The ordered
    reduction over turns makes results run-to-run identical.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if lr <= 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    if not features:
        raise ValueError("cannot train on an empty corpus")

    pg_head = GroundingHead(task="pg")
    kg_head = GroundingHead(task="kg")
    n = len(features)

    def batch_loss() -> float:
        total = 0.0
        for f in features:
            l_pg = pg_loss(pg_forward(pg_head, f.s_pk_mean, f.s_pu), f.persona_labels)
            l_kg = kg_loss(kg_forward(kg_head, f.s_kp_mean, f.s_ku), f.knowledge_label)
            turn_total = total_loss(weights, l_kg, l_pg, f.l_lm)
            if not math.isfinite(turn_total):
                raise TrainingDivergedError(
                    f"non-finite loss at dialog {f.dialog_id!r} turn {f.turn_index}"
                )
            total += turn_total
        return total / n

    history = [batch_loss()]
    for _ in range(epochs):
        pg_acc = np.zeros(3)
        kg_acc = np.zeros(3)
        for f in features:
            pg_acc += pg_gradients(pg_head, f.s_pk_mean, f.s_pu, f.persona_labels)
            kg_acc += kg_gradients(kg_head, f.s_kp_mean, f.s_ku, f.knowledge_label)
        pg_head.w1 = float(pg_head.w1 - lr * weights.beta * pg_acc[0] / n)
        pg_head.w2 = float(pg_head.w2 - lr * weights.beta * pg_acc[1] / n)
        pg_head.bias = float(pg_head.bias - lr * weights.beta * pg_acc[2] / n)
        kg_head.w1 = float(kg_head.w1 - lr * weights.alpha * kg_acc[0] / n)
        kg_head.w2 = float(kg_head.w2 - lr * weights.alpha * kg_acc[1] / n)
        kg_head.bias = float(kg_head.bias - lr * weights.alpha * kg_acc[2] / n)
        history.append(batch_loss())
    return pg_head, kg_head, history


def ground_turn(
    pg_head: GroundingHead, kg_head: GroundingHead, f: TurnFeatures
) -> GroundingOutput:
    """Forward both heads over one turn's features."""
    persona_probs = pg_forward(pg_head, f.s_pk_mean, f.s_pu)
    knowledge_probs = kg_forward(kg_head, f.s_kp_mean, f.s_ku)
    return GroundingOutput(
        persona_probs=tuple(float(p) for p in persona_probs),
        selected_personas=pg_select(persona_probs),
        knowledge_probs=tuple(float(p) for p in knowledge_probs),
        selected_knowledge=kg_select(knowledge_probs),
    )


def build_lm_input(
    selected_knowledge: str,
    selected_personas: list[str],
    utterance_history: list[str],
) -> list[str]:
    """Token sequence [knowledge; personas; history] with segment markers.

    Each segment opens with its marker token; an empty persona selection
    contributes no persona segment; the sequence ends with the EOS marker.
    """
    from .tokenizer import tokenize

    out: list[str] = [KNOWLEDGE_MARKER, *tokenize(selected_knowledge)]
    for persona in selected_personas:
        out += [PERSONA_MARKER, *tokenize(persona)]
    for utterance in utterance_history:
        out += [UTTERANCE_MARKER, *tokenize(utterance)]
    out.append(EOS_MARKER)
    return out
