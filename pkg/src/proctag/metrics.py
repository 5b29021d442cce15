"""Answer-scoring and agreement metrics: average normalized Levenshtein
similarity with the standard 0.5 cutoff, and chance-corrected inter-rater
agreement over a confusion matrix.

Answers are normalized (trim, collapse internal whitespace, lowercase)
before edit-distance comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from .errors import ProcTagError

DEFAULT_ANLS_TAU = 0.5


class EmptyInput(ProcTagError):
    pass


class DegenerateMarginals(ProcTagError):
    """Chance agreement is 1, leaving the statistic undefined."""


@dataclass(frozen=True)
class Prediction:
    record_id: str
    predicted: str
    golds: list[str]


@dataclass
class ConfusionMatrix:
    """Square matrix of label counts, rater A on rows, rater B on columns."""

    counts: list[list[float]]

    def validate(self) -> None:
        k = len(self.counts)
        if k == 0 or any(len(row) != k for row in self.counts):
            raise ValueError("confusion matrix must be square and non-empty")
        if any(c < 0 for row in self.counts for c in row):
            raise ValueError("confusion matrix counts must be non-negative")
        if sum(c for row in self.counts for c in row) <= 0:
            raise EmptyInput("confusion matrix has no observations")


def normalize_answer(s: str) -> str:
    return " ".join(s.split()).lower()


def levenshtein(a: str, b: str) -> int:
    """Plain edit distance (insert/delete/substitute, unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_levenshtein(a: str, b: str) -> float:
    """Edit distance over the longer normalized length; 0 for two empty strings."""
    a = normalize_answer(a)
    b = normalize_answer(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def anls(predictions: Sequence[Prediction], tau: float = DEFAULT_ANLS_TAU) -> float:
    """Mean over predictions of the best per-gold similarity 1 - NL, zeroed
    when NL >= tau."""
    if not predictions:
        raise EmptyInput("no predictions to score")
    total = 0.0
    for pred in predictions:
        if not pred.golds:
            raise EmptyInput(f"prediction {pred.record_id} has no gold answers")
        best = 0.0
        for gold in pred.golds:
            nl = normalized_levenshtein(pred.predicted, gold)
            score = 1.0 - nl if nl < tau else 0.0
            best = max(best, score)
        total += best
    return total / len(predictions)


def cohen_kappa(m: ConfusionMatrix) -> float:
    """(p_o - p_e) / (1 - p_e) from observed and chance agreement."""
    m.validate()
    total = sum(c for row in m.counts for c in row)
    k = len(m.counts)
    p_o = sum(m.counts[i][i] for i in range(k)) / total
    row_marg = [sum(row) for row in m.counts]
    col_marg = [sum(m.counts[i][j] for i in range(k)) for j in range(k)]
    p_e = sum(row_marg[i] * col_marg[i] for i in range(k)) / (total * total)
    if abs(1.0 - p_e) < 1e-12:
        raise DegenerateMarginals("chance agreement is 1")
    return (p_o - p_e) / (1.0 - p_e)


def agreement_band(kappa: float) -> str:
    """Conventional interpretive label for an agreement score."""
    if kappa < 0:
        return "poor"
    if kappa <= 0.2:
        return "slight"
    if kappa <= 0.4:
        return "fair"
    if kappa <= 0.6:
        return "moderate"
    if kappa <= 0.8:
        return "substantial"
    return "almost perfect"


def kappa_report(m: ConfusionMatrix) -> dict[str, Any]:
    value = cohen_kappa(m)
    return {"kappa": value, "band": agreement_band(value)}
