"""Dialogue corpus ingestion, validation, statistics, and synthesis.

Corpus file format: UTF-8 JSONL, one dialog per line:

    {"dialog_id": str,
     "persona": [str, ...],              # N_p entries, fixed per dialog
     "knowledge": [str, ...],            # N_k entries, fixed per dialog
     "turns": [{"utterance_history": [str, ...],   # last element = question
                "answer": str,
                "persona_labels": [bool, ...],     # length N_p
                "knowledge_label": int}, ...]}     # index into knowledge

Loading is single-threaded and order-preserving; loaded objects are
immutable and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import tokenizer
from .rng import stream


class CorpusParseError(ValueError):
    """Raised for malformed JSON; message carries the 1-based line number."""


class CorpusSchemaError(ValueError):
    """Raised for structurally valid JSON violating the corpus schema."""


@dataclass(frozen=True)
class DialogTurn:
    dialog_id: str
    turn_index: int
    utterance_history: tuple[str, ...]
    answer: str
    persona_labels: tuple[bool, ...]
    knowledge_label: int

    @property
    def question(self) -> str:
        """Last history element: the user question this turn answers."""
        return self.utterance_history[-1]


@dataclass(frozen=True)
class CandidateSet:
    persona: tuple[str, ...]
    knowledge: tuple[str, ...]

    @property
    def n_persona(self) -> int:
        return len(self.persona)

    @property
    def n_knowledge(self) -> int:
        return len(self.knowledge)


@dataclass(frozen=True)
class CorpusStats:
    dialog_count: int
    average_rounds: float
    avg_human_utterance_length: float
    avg_machine_utterance_length: float
    persona_knowledge_answer_count: int
    knowledge_only_answer_count: int

    def to_dict(self) -> dict:
        return {
            "dialog_count": self.dialog_count,
            "average_rounds": self.average_rounds,
            "avg_human_utterance_length": self.avg_human_utterance_length,
            "avg_machine_utterance_length": self.avg_machine_utterance_length,
            "persona_knowledge_answer_count": self.persona_knowledge_answer_count,
            "knowledge_only_answer_count": self.knowledge_only_answer_count,
        }


def _schema_error(dialog_id: str, message: str) -> CorpusSchemaError:
    return CorpusSchemaError(f"dialog {dialog_id!r}: {message}")


def _validate_dialog(obj: dict, line_number: int) -> tuple[list[DialogTurn], str, CandidateSet]:
    if not isinstance(obj, dict):
        raise CorpusParseError(f"line {line_number}: expected a JSON object")
    try:
        dialog_id = obj["dialog_id"]
        persona = obj["persona"]
        knowledge = obj["knowledge"]
        raw_turns = obj["turns"]
    except KeyError as exc:
        raise CorpusParseError(f"line {line_number}: missing field {exc.args[0]!r}") from None

    if not isinstance(dialog_id, str) or not dialog_id:
        raise CorpusParseError(f"line {line_number}: dialog_id must be a non-empty string")
    if not isinstance(persona, list) or not persona:
        raise _schema_error(dialog_id, "persona must be a non-empty list")
    if not isinstance(knowledge, list) or not knowledge:
        raise _schema_error(dialog_id, "knowledge must be a non-empty list")
    for kind, entries in (("persona", persona), ("knowledge", knowledge)):
        for i, entry in enumerate(entries):
            if not isinstance(entry, str):
                raise _schema_error(dialog_id, f"{kind}[{i}] is not a string")
            if not tokenizer.tokenize(entry):
                raise _schema_error(dialog_id, f"{kind}[{i}] has no tokens: {entry!r}")

    candidate_set = CandidateSet(persona=tuple(persona), knowledge=tuple(knowledge))
    n_p, n_k = candidate_set.n_persona, candidate_set.n_knowledge

    if not isinstance(raw_turns, list) or not raw_turns:
        raise _schema_error(dialog_id, "turns must be a non-empty list")

    turns: list[DialogTurn] = []
    for t, raw in enumerate(raw_turns):
        if not isinstance(raw, dict):
            raise _schema_error(dialog_id, f"turn {t} is not an object")
        history = raw.get("utterance_history")
        answer = raw.get("answer")
        labels = raw.get("persona_labels")
        k_label = raw.get("knowledge_label")
        if not isinstance(history, list) or not history or not all(isinstance(u, str) for u in history):
            raise _schema_error(dialog_id, f"turn {t}: utterance_history must be a non-empty list of strings")
        if not isinstance(answer, str):
            raise _schema_error(dialog_id, f"turn {t}: answer must be a string")
        if not isinstance(labels, list) or not all(isinstance(b, bool) for b in labels):
            raise _schema_error(dialog_id, f"turn {t}: persona_labels must be a list of booleans")
        if len(labels) != n_p:
            raise _schema_error(
                dialog_id,
                f"turn {t}: persona_labels has length {len(labels)}, expected {n_p}",
            )
        if not isinstance(k_label, int) or isinstance(k_label, bool) or not (0 <= k_label < n_k):
            raise _schema_error(
                dialog_id,
                f"turn {t}: knowledge_label {k_label!r} out of range [0, {n_k})",
            )
        turns.append(
            DialogTurn(
                dialog_id=dialog_id,
                turn_index=t,
                utterance_history=tuple(history),
                answer=answer,
                persona_labels=tuple(labels),
                knowledge_label=k_label,
            )
        )
    return turns, dialog_id, candidate_set


def load_corpus(path: str | Path) -> tuple[list[DialogTurn], dict[str, CandidateSet]]:
    """Load a JSONL corpus, preserving turn order.

    Raises CorpusParseError for malformed JSON (with line number) and
    CorpusSchemaError for label/shape violations (naming the dialog).
    """
    p = Path(path)
    turns: list[DialogTurn] = []
    candidate_sets: dict[str, CandidateSet] = {}
    with p.open("r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"line {line_number}: {exc.msg}") from None
            dialog_turns, dialog_id, candidate_set = _validate_dialog(obj, line_number)
            if dialog_id in candidate_sets:
                raise _schema_error(dialog_id, f"duplicate dialog_id at line {line_number}")
            candidate_sets[dialog_id] = candidate_set
            turns.extend(dialog_turns)
    return turns, candidate_sets


def save_corpus(
    turns: list[DialogTurn],
    candidate_sets: dict[str, CandidateSet],
    path: str | Path,
) -> None:
    """Serialize back to the JSONL schema (round-trips with load_corpus)."""
    by_dialog: dict[str, list[DialogTurn]] = {}
    for turn in turns:
        by_dialog.setdefault(turn.dialog_id, []).append(turn)
    with Path(path).open("w", encoding="utf-8") as f:
        for dialog_id, dialog_turns in by_dialog.items():
            cs = candidate_sets[dialog_id]
            obj = {
                "dialog_id": dialog_id,
                "persona": list(cs.persona),
                "knowledge": list(cs.knowledge),
                "turns": [
                    {
                        "utterance_history": list(t.utterance_history),
                        "answer": t.answer,
                        "persona_labels": list(t.persona_labels),
                        "knowledge_label": t.knowledge_label,
                    }
                    for t in sorted(dialog_turns, key=lambda t: t.turn_index)
                ],
            }
            f.write(json.dumps(obj, sort_keys=True) + "\n")


def corpus_stats(
    turns: list[DialogTurn],
    candidate_sets: dict[str, CandidateSet],
) -> CorpusStats:
    """Corpus statistics; an empty corpus yields zeroed stats.

    Utterance lengths are measured in engine-tokenizer tokens. The human
    utterance of a turn is its question (last history element), the machine
    utterance is its answer. A turn counts as persona-knowledge when any
    persona label is true, else knowledge-only.
    """
    dialog_ids = {t.dialog_id for t in turns}
    n_turns = len(turns)
    if n_turns == 0:
        return CorpusStats(0, 0.0, 0.0, 0.0, 0, 0)

    human_tokens = sum(len(tokenizer.tokenize(t.question)) for t in turns)
    machine_tokens = sum(len(tokenizer.tokenize(t.answer)) for t in turns)
    pk_count = sum(1 for t in turns if any(t.persona_labels))
    return CorpusStats(
        dialog_count=len(dialog_ids),
        average_rounds=n_turns / len(dialog_ids),
        avg_human_utterance_length=human_tokens / n_turns,
        avg_machine_utterance_length=machine_tokens / n_turns,
        persona_knowledge_answer_count=pk_count,
        knowledge_only_answer_count=n_turns - pk_count,
    )


_N_PERSONA = 5
_GOLD_FILLER_TOKENS = 2
_DISTRACTOR_LENGTH = 5
_PERSONA_LENGTH = 4
_QUESTION_LENGTH = 9
_ANSWER_FILLER_TOKENS = 4


def synth_corpus(
    seed: int,
    n_dialogs: int,
    overlap_tokens: int,
) -> tuple[list[DialogTurn], dict[str, CandidateSet]]:
    """Deterministic synthetic corpus for desk-scale training and benchmarks.

    Construction (a pure function of the arguments):

    * token vocabularies are disjoint by role: questions draw fresh
      ``ctx####`` tokens, knowledge filler draws ``fact####`` tokens,
      persona filler ``per####``, answers ``ans####``;
    * each dialog has 5 persona entries and 4-6 knowledge entries;
    * each turn's gold knowledge entry contains exactly ``overlap_tokens``
      tokens copied from that turn's question plus a little filler, and
      distractor entries contain none of the copied tokens, so token
      overlap alone identifies the gold entry (for overlap_tokens = 0 the
      gold entry is indistinguishable from the distractors);
    * 1-2 persona entries are labeled true per turn; a true entry shares
      two tokens with the question of the turn that selected it;
    * answers echo the copied question tokens plus answer filler, keeping
      answers lexically grounded in the selected knowledge;
    * histories are single-question (one element) so earlier turns never
      leak gold tokens into later contexts.

    Parameters are clamped to sane minima: n_dialogs >= 1, overlap >= 0,
    and overlap is capped at the question length (9 tokens).
    """
    n_dialogs = max(1, int(n_dialogs))
    overlap_tokens = max(0, min(int(overlap_tokens), _QUESTION_LENGTH))
    rng = stream("synth-corpus", f"n={n_dialogs}|overlap={overlap_tokens}", seed)

    fresh_counter = 0

    def fresh(prefix: str) -> str:
        nonlocal fresh_counter
        fresh_counter += 1
        return f"{prefix}{fresh_counter:05d}"

    turns: list[DialogTurn] = []
    candidate_sets: dict[str, CandidateSet] = {}
    for d in range(n_dialogs):
        dialog_id = f"dlg{d:05d}"
        n_turns = 2 + rng.randrange(2)
        n_knowledge = 4 + rng.randrange(3)

        questions = [[fresh("ctx") for _ in range(_QUESTION_LENGTH)] for _ in range(n_turns)]
        copied = [
            [q[i] for i in sorted(rng.sample_indices(_QUESTION_LENGTH, overlap_tokens))]
            for q in questions
        ]
        # Distinct gold entries per turn, so each gold entry overlaps exactly
        # one question and distractors overlap none.
        gold_labels = rng.sample_indices(n_knowledge, n_turns)

        gold_filler = max(_GOLD_FILLER_TOKENS, _DISTRACTOR_LENGTH - overlap_tokens)
        knowledge_tokens: list[list[str]] = []
        for k in range(n_knowledge):
            if k in gold_labels:
                t = gold_labels.index(k)
                entry = [fresh("fact") for _ in range(gold_filler)] + copied[t]
            else:
                entry = [fresh("fact") for _ in range(_DISTRACTOR_LENGTH)]
            knowledge_tokens.append(entry)

        persona_true: list[list[int]] = []
        for t in range(n_turns):
            count = 1 + rng.randrange(2)
            persona_true.append(sorted(rng.sample_indices(_N_PERSONA, count)))
        persona_tokens: list[list[str]] = []
        for p in range(_N_PERSONA):
            entry = [fresh("per") for _ in range(_PERSONA_LENGTH - 2)]
            for t in range(n_turns):
                if p in persona_true[t]:
                    entry = entry + [questions[t][0], questions[t][1]]
            if len(entry) == _PERSONA_LENGTH - 2:
                entry = entry + [fresh("per"), fresh("per")]
            persona_tokens.append(entry)

        candidate_sets[dialog_id] = CandidateSet(
            persona=tuple(" ".join(toks) for toks in persona_tokens),
            knowledge=tuple(" ".join(toks) for toks in knowledge_tokens),
        )
        for t in range(n_turns):
            answer_tokens = copied[t] + [fresh("ans") for _ in range(_ANSWER_FILLER_TOKENS)]
            turns.append(
                DialogTurn(
                    dialog_id=dialog_id,
                    turn_index=t,
                    utterance_history=(" ".join(questions[t]),),
                    answer=" ".join(answer_tokens),
                    persona_labels=tuple(p in persona_true[t] for p in range(_N_PERSONA)),
                    knowledge_label=gold_labels[t],
                )
            )
    return turns, candidate_sets
