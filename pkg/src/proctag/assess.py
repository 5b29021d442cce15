"""Dataset efficacy assessment and tag-driven subset selection.

Complexity is the number of distinct tags in a dataset; diversity is the
mean number of distinct tags per record. Selection runs in two phases:
a greedy set-cover phase that maximizes new-tag coverage per pick, then a
fill phase ordered by distinct-tag count. The selection sequence does not
depend on the budget, so a smaller budget is always a prefix of a larger
one.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Any

from .errors import ProcTagError
from .tagnorm import TagProfile

MODES = ("budget", "ratio", "coverage")


class EmptyDataset(ProcTagError):
    pass


class EmptyVocabulary(ProcTagError):
    pass


class InfeasibleCoverage(ProcTagError):
    pass


class ZeroBaseline(ProcTagError):
    pass


@dataclass
class DatasetAssessment:
    complexity: int
    diversity: float
    vocabulary_sizes: dict[str, int]
    record_count: int

    def to_dict(self) -> dict[str, Any]:
        return {"complexity": self.complexity, "diversity": self.diversity,
                "vocabulary_sizes": self.vocabulary_sizes,
                "record_count": self.record_count}


@dataclass(frozen=True)
class SampleSpec:
    """Which subset to select; exactly the field for the active mode is used."""

    mode: str
    budget: int | None = None
    ratio: float | None = None
    coverage_target: float | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "budget" and (self.budget is None or self.budget < 0):
            raise ValueError("budget mode requires a non-negative budget")
        if self.mode == "ratio" and (self.ratio is None or not 0 < self.ratio <= 1):
            raise ValueError("ratio mode requires ratio in (0, 1]")
        if self.mode == "coverage" and self.coverage_target is None:
            raise ValueError("coverage mode requires coverage_target")


@dataclass(frozen=True)
class EfficacyReport:
    p_cur: float
    p_best: float
    efficacy: float


def complexity(profiles: list[TagProfile]) -> int:
    """Number of distinct tags across the dataset."""
    tags: set[str] = set()
    for p in profiles:
        tags.update(p.tags)
    return len(tags)


def diversity(profiles: list[TagProfile]) -> float:
    """Mean distinct-tag count per record."""
    if not profiles:
        raise EmptyDataset("diversity of an empty dataset is undefined")
    return sum(len(set(p.tags)) for p in profiles) / len(profiles)


def tag_coverage(subset: list[TagProfile], full: list[TagProfile]) -> float:
    """Fraction of the full dataset's distinct tags present in the subset."""
    full_tags: set[str] = set()
    for p in full:
        full_tags.update(p.tags)
    if not full_tags:
        raise EmptyVocabulary("full dataset has no tags")
    covered: set[str] = set()
    for p in subset:
        covered.update(p.tags)
    return len(covered & full_tags) / len(full_tags)


def assess_dataset(profiles: list[TagProfile]) -> DatasetAssessment:
    stages: dict[str, set[str]] = {}
    for p in profiles:
        stages.setdefault(p.stage, set()).update(p.tags)
    return DatasetAssessment(
        complexity=complexity(profiles),
        diversity=diversity(profiles) if profiles else 0.0,
        vocabulary_sizes={stage: len(tags) for stage, tags in sorted(stages.items())},
        record_count=len(profiles),
    )


def _selection_sequence(profiles: list[TagProfile]) -> tuple[list[TagProfile], list[TagProfile]]:
    """Budget-independent pick order.

    Phase 1 greedily picks the record covering the most uncovered tags (ties:
    larger distinct-tag count, then smaller record_id) until no pick gains
    coverage. Phase 2 orders the rest by distinct-tag count descending, then
    record_id; records with empty profiles therefore come last.
    """
    tagsets = [set(p.tags) for p in profiles]
    remaining = list(range(len(profiles)))
    covered: set[str] = set()
    phase1: list[int] = []
    while remaining:
        best = None
        best_key = None
        for i in remaining:
            key = (-len(tagsets[i] - covered), -len(tagsets[i]), profiles[i].record_id)
            if best_key is None or key < best_key:
                best, best_key = i, key
        if not tagsets[best] - covered:
            break
        covered |= tagsets[best]
        phase1.append(best)
        remaining.remove(best)
    phase2 = sorted(remaining, key=lambda i: (-len(tagsets[i]), profiles[i].record_id))
    return [profiles[i] for i in phase1], [profiles[i] for i in phase2]


def sample(profiles: list[TagProfile], spec: SampleSpec) -> list[str]:
    """Select record ids per the spec; deterministic for fixed inputs."""
    spec.validate()
    n = len(profiles)
    phase1, phase2 = _selection_sequence(profiles)
    if spec.mode == "coverage":
        if spec.coverage_target > 1.0:
            raise InfeasibleCoverage(f"coverage target {spec.coverage_target} exceeds 1.0")
        universe: set[str] = set()
        for p in profiles:
            universe.update(p.tags)
        if not universe:
            return []  # nothing to cover
        selected: list[str] = []
        covered: set[str] = set()
        if len(covered) / len(universe) >= spec.coverage_target:
            return selected
        for p in phase1:
            selected.append(p.record_id)
            covered.update(p.tags)
            if len(covered) / len(universe) >= spec.coverage_target:
                return selected
        return selected  # phase 1 exhausts all attainable coverage
    budget = spec.budget if spec.mode == "budget" else math.ceil(spec.ratio * n)
    budget = min(budget, n)
    ordered = phase1 + phase2
    return [p.record_id for p in ordered[:budget]]


def random_sample(profiles: list[TagProfile], ratio: float, seed: int) -> list[str]:
    """Uniform sample without replacement, reproducible per seed."""
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    ids = [p.record_id for p in profiles]
    k = math.ceil(ratio * len(ids))
    return random.Random(seed).sample(ids, k)


def efficacy(p_cur: float, p_best: float) -> EfficacyReport:
    """Data-efficacy ratio of current to best performance."""
    if p_best <= 0:
        raise ZeroBaseline("best performance must be positive")
    return EfficacyReport(p_cur=p_cur, p_best=p_best, efficacy=p_cur / p_best)
