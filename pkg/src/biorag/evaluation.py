"""QA scoring: exact match, boolean with yes/no mapping, multiple choice, gene-set recall."""

from __future__ import annotations

import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import IO, Mapping, Sequence, Union

from .errors import EmptyDataset, ParseError

Prediction = Union[str, Sequence[str]]

_TERMINAL_PUNCT = re.compile(r"[\s.,;:!?]+$")
_WS = re.compile(r"\s+")
_GENE_SPLIT = re.compile(r"[,;\s]+")


class TaskKind(str, Enum):
    EXACT_MATCH = "ExactMatch"
    GENE_DISEASE_RECALL = "GeneDiseaseRecall"
    PROTEIN_CODING_BOOLEAN = "ProteinCodingBoolean"
    MULTIPLE_CHOICE = "MultipleChoice"

    @classmethod
    def parse(cls, value: str) -> "TaskKind":
        for member in cls:
            if value.casefold() in (member.value.casefold(), member.name.casefold()):
                return member
        raise ValueError(f"unknown task kind {value!r}; expected one of {[m.value for m in cls]}")


@dataclass(frozen=True)
class QaExample:
    id: str
    question: str
    gold: tuple[str, ...]
    task: TaskKind

    def __post_init__(self):
        if not self.gold:
            raise ValueError("gold answers must be nonempty")


@dataclass
class ScoreReport:
    per_task: dict[str, float]
    per_example: list[tuple[str, float]]
    n: int
    missing: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "per_task": self.per_task,
            "per_example": [{"id": i, "score": s} for i, s in self.per_example],
            "missing": self.missing,
        }


@lru_cache(maxsize=1)
def species_table() -> dict[str, str]:
    raw = json.loads(resources.files("biorag").joinpath("data/species.json").read_text("utf-8"))
    return {latin.casefold(): common for latin, common in raw["species"].items()}


def load_dataset(source: IO[str], task: TaskKind) -> list[QaExample]:
    examples = []
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            gold = obj["gold"]
            if isinstance(gold, str):
                gold = [gold]
            if not isinstance(gold, list) or not gold or not all(isinstance(g, str) for g in gold):
                raise ValueError("gold must be a nonempty list of strings")
            examples.append(QaExample(str(obj["id"]), str(obj["question"]), tuple(gold), task))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(lineno, str(exc)) from exc
    return examples


def normalize_answer(raw: str, task: TaskKind, strict: bool = False) -> str:
    text = raw.strip()
    if strict:
        return text
    text = _TERMINAL_PUNCT.sub("", text).strip()
    text = _WS.sub(" ", text)
    if task is TaskKind.PROTEIN_CODING_BOOLEAN:
        folded = text.casefold()
        if folded == "yes":
            return "TRUE"
        if folded == "no":
            return "NA"
        return species_table().get(folded, text)
    return text


def _genes(pred: Prediction, task: TaskKind, strict: bool) -> set[str]:
    parts = _GENE_SPLIT.split(pred) if isinstance(pred, str) else list(pred)
    return {normalize_answer(p, task, strict) for p in parts if p.strip()}


def score_example(predicted: Prediction, example: QaExample, strict: bool = False) -> float:
    task = example.task
    if task is TaskKind.GENE_DISEASE_RECALL:
        gold = _genes(example.gold, task, strict)
        return len(_genes(predicted, task, strict) & gold) / len(gold)
    if not isinstance(predicted, str):
        predicted = ", ".join(predicted)
    guess = normalize_answer(predicted, task, strict)
    return 1.0 if any(guess == normalize_answer(g, task, strict) for g in example.gold) else 0.0


def evaluate_run(
    examples: Sequence[QaExample],
    predictions: Mapping[str, Prediction],
    strict: bool = False,
) -> ScoreReport:
    if not examples:
        raise EmptyDataset("no examples to score")
    per_example: list[tuple[str, float]] = []
    buckets: dict[str, list[float]] = defaultdict(list)
    missing = []
    for ex in examples:
        if ex.id in predictions:
            score = score_example(predictions[ex.id], ex, strict)
        else:
            missing.append(ex.id)
            score = 0.0
        per_example.append((ex.id, score))
        buckets[ex.task.value].append(score)
    per_task = {task: math.fsum(scores) / len(scores) for task, scores in sorted(buckets.items())}
    return ScoreReport(per_task, per_example, len(examples), missing)


def load_predictions(source: IO[str]) -> dict[str, Prediction]:
    """Predictions as a JSON object ``{id: answer}`` or JSONL ``{"id", "prediction"}`` lines."""
    text = source.read()
    stripped = text.strip()
    if not stripped:
        return {}
    try:
        obj = json.loads(stripped)
        if isinstance(obj, dict) and "id" not in obj:
            return dict(obj)
    except json.JSONDecodeError:
        pass
    out: dict[str, Prediction] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out[str(obj["id"])] = obj["prediction"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(lineno, str(exc)) from exc
    return out
