from __future__ import annotations

import json
from pathlib import Path

import pytest


def dialog_obj(dialog_id: str, n_turns: int = 3, n_persona: int = 5, n_knowledge: int = 4) -> dict:
    """A small well-formed dialog object for corpus fixtures."""
    return {
        "dialog_id": dialog_id,
        "persona": [f"{dialog_id} persona entry {i} likes hiking" for i in range(n_persona)],
        "knowledge": [f"{dialog_id} knowledge paragraph {j} about the landmark" for j in range(n_knowledge)],
        "turns": [
            {
                "utterance_history": [f"{dialog_id} earlier line {t}", f"{dialog_id} question {t}?"],
                "answer": f"{dialog_id} answer {t} about the landmark",
                "persona_labels": [t % 2 == 0] + [False] * (n_persona - 1),
                "knowledge_label": t % n_knowledge,
            }
            for t in range(n_turns)
        ],
    }


def write_corpus(path: Path, dialogs: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as f:
        for obj in dialogs:
            f.write(json.dumps(obj) + "\n")
    return path


@pytest.fixture
def fixture_corpus(tmp_path: Path) -> Path:
    """Two dialogs of three turns each (5 personas, 4 knowledge entries)."""
    return write_corpus(
        tmp_path / "corpus.jsonl",
        [dialog_obj("alpha", n_turns=3), dialog_obj("beta", n_turns=3)],
    )
