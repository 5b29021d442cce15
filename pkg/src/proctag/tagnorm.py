"""Tag normalization: frequency filtering, embedding-based density
clustering of the vocabulary, and adjacency-constrained association
aggregation of ordered tag pairs.

Profiles move forward through the stages raw -> filtered -> clustered ->
aggregated. Every stage is a deterministic batch computation over immutable
snapshots; given the same profiles, embeddings, and thresholds the output is
identical across runs.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Protocol

import numpy as np
import requests

from .errors import ProcTagError
from .tagparse import collapse_adjacent, normalize_name

STAGES = ("raw", "filtered", "clustered", "aggregated")

DEFAULT_DBSCAN_EPS = 0.015
DEFAULT_DBSCAN_MIN_PTS = 2
DEFAULT_MIN_SUPPORT = 40
DEFAULT_MIN_CONFIDENCE = 0.99
# corpora at or above this record count use the stricter long-tail cutoff
LARGE_CORPUS_RECORDS = 40_000
LARGE_CORPUS_MIN_COUNT = 4
SMALL_CORPUS_MIN_COUNT = 2


class ZeroVector(ProcTagError):
    """Cosine distance is undefined for a zero-norm vector."""


class DegenerateMerge(ProcTagError):
    """Nothing of the second tag survives the merge rule."""


@dataclass
class TagProfile:
    """Ordered tag sequence for one record at a given stage."""

    record_id: str
    tags: list[str]
    stage: str = "raw"
    source: str = "grammar"
    emptied_by_filter: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"record_id": self.record_id, "tags": self.tags, "stage": self.stage,
                "source": self.source, "emptied_by_filter": self.emptied_by_filter}


@dataclass
class TagVocabulary:
    """Tag -> corpus occurrence count at one stage."""

    entries: dict[str, int]
    stage: str


@dataclass
class ClusterAssignment:
    """Tag -> cluster id (None = noise) and cluster id -> representative."""

    labels: dict[str, int | None]
    representatives: dict[int, str]

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for tag, cid in self.labels.items():
            if cid is not None:
                out.setdefault(cid, []).append(tag)
        return {cid: sorted(tags) for cid, tags in out.items()}


@dataclass(frozen=True)
class AdjacentPairStat:
    """Ordered adjacent pair counts: support is the number of profiles where
    the pair occurs adjacently in that order (at most one per profile);
    confidence divides by the number of profiles containing the first tag."""

    first: str
    second: str
    support: int
    confidence: float


def _require_stage(profiles: list[TagProfile], stage: str) -> None:
    for p in profiles:
        if p.stage != stage:
            raise ValueError(f"profile {p.record_id} at stage {p.stage!r}, expected {stage!r}")


def tag_frequencies(profiles: list[TagProfile]) -> dict[str, int]:
    """Corpus occurrence count per tag (multiple occurrences in one profile count)."""
    freq: Counter[str] = Counter()
    for p in profiles:
        freq.update(p.tags)
    return dict(freq)


def default_min_count(n_records: int) -> int:
    return LARGE_CORPUS_MIN_COUNT if n_records >= LARGE_CORPUS_RECORDS else SMALL_CORPUS_MIN_COUNT


def frequency_filter(profiles: list[TagProfile],
                     min_count: int) -> tuple[list[TagProfile], TagVocabulary]:
    """Drop long-tail tags (corpus frequency < min_count) from every profile,
    preserving the relative order of survivors. Emptied profiles stay, flagged."""
    if min_count < 1:
        raise ValueError("min_count must be a positive integer")
    _require_stage(profiles, "raw")
    freq = tag_frequencies(profiles)
    out: list[TagProfile] = []
    for p in profiles:
        kept = [t for t in p.tags if freq[t] >= min_count]
        out.append(TagProfile(record_id=p.record_id, tags=kept, stage="filtered",
                              source=p.source,
                              emptied_by_filter=bool(p.tags) and not kept))
    vocab = TagVocabulary({t: c for t, c in freq.items() if c >= min_count}, stage="filtered")
    return out, vocab


# ---------------------------------------------------------------------------
# clustering


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine distance undefined for zero vector")
    return float(np.clip(1.0 - float(np.dot(u, v)) / (nu * nv), 0.0, 2.0))


def dbscan(vectors: Mapping[str, np.ndarray], eps: float, min_pts: int,
           frequencies: Mapping[str, int] | None = None) -> ClusterAssignment:
    """Density clustering under cosine distance.

    Tags are visited in lexicographic order, which fixes cluster ids and
    border assignment. The eps-neighbourhood counts the point itself. Each
    cluster's representative is its highest-frequency member, ties broken
    lexicographically.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be a positive integer")
    tags = sorted(vectors)
    if not tags:
        return ClusterAssignment(labels={}, representatives={})
    mat = np.array([np.asarray(vectors[t], dtype=float) for t in tags])
    if mat.ndim != 2:
        raise ValueError("all vectors must share one dimension")
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ZeroVector("cannot cluster zero vectors")
    unit = mat / norms[:, None]
    dist = np.clip(1.0 - unit @ unit.T, 0.0, 2.0)
    neighborhoods = dist <= eps

    n = len(tags)
    labels: list[int | None] = [None] * n
    visited = [False] * n
    cluster_id = -1
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        seeds_i = np.flatnonzero(neighborhoods[i])
        if len(seeds_i) < min_pts:
            continue  # noise for now; may later join a cluster as a border point
        cluster_id += 1
        labels[i] = cluster_id
        queue = deque(int(j) for j in seeds_i)
        while queue:
            j = queue.popleft()
            if visited[j]:
                if labels[j] is None:
                    labels[j] = cluster_id
                continue
            visited[j] = True
            labels[j] = cluster_id
            seeds_j = np.flatnonzero(neighborhoods[j])
            if len(seeds_j) >= min_pts:
                queue.extend(int(k) for k in seeds_j)

    freq = frequencies or {}
    members: dict[int, list[str]] = {}
    for tag, lab in zip(tags, labels):
        if lab is not None:
            members.setdefault(lab, []).append(tag)
    representatives = {cid: min(ms, key=lambda t: (-freq.get(t, 0), t))
                       for cid, ms in members.items()}
    return ClusterAssignment(labels=dict(zip(tags, labels)), representatives=representatives)


def apply_clusters(profiles: list[TagProfile],
                   assignment: ClusterAssignment) -> list[TagProfile]:
    """Rewrite clustered tags to their cluster representative (noise tags are
    untouched) and collapse any adjacent duplicates this creates."""
    _require_stage(profiles, "filtered")
    rep_of = {tag: assignment.representatives[cid]
              for tag, cid in assignment.labels.items() if cid is not None}
    out: list[TagProfile] = []
    for p in profiles:
        rewritten = collapse_adjacent([rep_of.get(t, t) for t in p.tags])
        out.append(replace(p, tags=rewritten, stage="clustered"))
    return out


# ---------------------------------------------------------------------------
# association aggregation


def mine_adjacent_pairs(profiles: list[TagProfile]) -> list[AdjacentPairStat]:
    """Count ordered adjacent tag pairs; one support unit per profile."""
    _require_stage(profiles, "clustered")
    pair_support: Counter[tuple[str, str]] = Counter()
    first_count: Counter[str] = Counter()
    for p in profiles:
        pair_support.update(set(zip(p.tags, p.tags[1:])))
        first_count.update(set(p.tags))
    stats = [AdjacentPairStat(first=a, second=b, support=s,
                              confidence=s / first_count[a])
             for (a, b), s in pair_support.items()]
    stats.sort(key=lambda st: (-st.support, st.first, st.second))
    return stats


def merge_name(first: str, second: str) -> str:
    """Combine two tags: first's tokens, then second's tokens minus its
    leading token and minus tokens already present in first."""
    if first == second:
        raise DegenerateMerge(f"self-merge of {first!r}")
    first_tokens = first.split("_")
    extra = [t for t in second.split("_")[1:] if t not in first_tokens]
    if not extra:
        raise DegenerateMerge(f"nothing of {second!r} survives merging into {first!r}")
    return normalize_name("_".join(first_tokens + extra))


def aggregate_pairs(profiles: list[TagProfile], stats: list[AdjacentPairStat],
                    min_support: int = DEFAULT_MIN_SUPPORT,
                    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
                    ) -> tuple[list[TagProfile], list[dict[str, Any]]]:
    """Merge every qualifying pair (support and confidence at or above the
    thresholds) wherever it occurs adjacently.

    Single pass over pairs sorted by support descending (ties lexicographic);
    merged names are not re-mined. Self-pairs and degenerate merges are
    skipped. Returns the aggregated profiles and a report of applied merges.
    """
    _require_stage(profiles, "clustered")
    qualifying = [st for st in stats
                  if st.support >= min_support and st.confidence >= min_confidence
                  and st.first != st.second]
    qualifying.sort(key=lambda st: (-st.support, st.first, st.second))
    tag_lists = [list(p.tags) for p in profiles]
    applied: list[dict[str, Any]] = []
    for st in qualifying:
        try:
            merged = merge_name(st.first, st.second)
        except DegenerateMerge:
            continue
        for tags in tag_lists:
            i = 0
            while i < len(tags) - 1:
                if tags[i] == st.first and tags[i + 1] == st.second:
                    tags[i:i + 2] = [merged]
                i += 1
        applied.append({"first": st.first, "second": st.second, "merged": merged,
                        "support": st.support, "confidence": st.confidence})
    out = [replace(p, tags=tags, stage="aggregated")
           for p, tags in zip(profiles, tag_lists)]
    return out, applied


# ---------------------------------------------------------------------------
# embedding providers


class EmbeddingProvider(Protocol):
    def embed(self, tag: str) -> np.ndarray:
        """Map a tag to a fixed-dimension vector; same tag, same vector."""
        ...


class HashingEmbedder:
    """Offline embedding: character trigrams of ^tag$ hashed into a
    fixed-width count vector, L2-normalized. Pure and dependency-free."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def embed(self, tag: str) -> np.ndarray:
        padded = f"^{tag}$"
        vec = np.zeros(self.dim)
        for i in range(len(padded) - 2):
            tri = padded[i:i + 3].encode("utf-8")
            vec[int.from_bytes(hashlib.sha1(tri).digest()[:4], "big") % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ZeroVector(f"no trigrams for tag {tag!r}")
        return vec / norm


class RemoteEmbedder:
    """HTTP encoder endpoint adapter (POST {"input": tag} -> {"embedding": [...]})."""

    def __init__(self, url: str | None = None, api_key: str | None = None,
                 timeout: float = 60.0, session: requests.Session | None = None):
        self.url = url or os.environ.get("PROCTAG_EMBED_URL", "")
        self.api_key = api_key if api_key is not None else os.environ.get("PROCTAG_EMBED_KEY")
        self.timeout = timeout
        self._session = session or requests.Session()
        if not self.url:
            raise ProcTagError("no embedding URL (set PROCTAG_EMBED_URL)")

    def embed(self, tag: str) -> np.ndarray:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._session.post(self.url, json={"input": tag}, headers=headers,
                                      timeout=self.timeout)
        except requests.RequestException as exc:
            raise ProcTagError(f"embedding transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise ProcTagError(f"embedding endpoint returned HTTP {resp.status_code}")
        try:
            return np.asarray(resp.json()["embedding"], dtype=float)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProcTagError(f"unexpected embedding response: {exc}") from exc


class CachingEmbedder:
    """Content-addressed vector cache around an inner provider; replay-only
    when ``inner=None``."""

    def __init__(self, cache_dir: Path | str, inner: EmbeddingProvider | None = None):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.inner = inner

    def embed(self, tag: str) -> np.ndarray:
        key = hashlib.sha256(tag.encode("utf-8")).hexdigest()
        path = self.cache_dir / f"{key}.json"
        if path.exists():
            return np.asarray(json.loads(path.read_text(encoding="utf-8"))["vector"])
        if self.inner is None:
            raise ProcTagError(f"embedding cache miss for {tag!r} in replay-only mode")
        vec = self.inner.embed(tag)
        entry = {"tag": tag, "vector": [float(x) for x in vec],
                 "created_at": datetime.now(timezone.utc).isoformat()}
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(entry, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)
        return vec


# ---------------------------------------------------------------------------
# full normalization pass


@dataclass
class NormalizationResult:
    profiles: list[TagProfile]                    # aggregated stage
    stage_profiles: dict[str, list[TagProfile]]   # every stage, for audit
    vocabularies: dict[str, TagVocabulary]
    assignment: ClusterAssignment
    pair_stats: list[AdjacentPairStat]
    merges: list[dict[str, Any]] = field(default_factory=list)


def normalize_corpus(profiles: list[TagProfile], embedder: EmbeddingProvider, *,
                     min_count: int | None = None,
                     dbscan_eps: float = DEFAULT_DBSCAN_EPS,
                     dbscan_min_pts: int = DEFAULT_DBSCAN_MIN_PTS,
                     min_support: int = DEFAULT_MIN_SUPPORT,
                     min_confidence: float = DEFAULT_MIN_CONFIDENCE) -> NormalizationResult:
    """Run filter -> cluster -> aggregate over raw profiles.

    ``min_count=None`` picks the long-tail cutoff from the corpus size.
    """
    if min_count is None:
        min_count = default_min_count(len(profiles))
    raw_vocab = TagVocabulary(tag_frequencies(profiles), stage="raw")
    filtered, filtered_vocab = frequency_filter(profiles, min_count)
    vectors = {t: embedder.embed(t) for t in sorted(filtered_vocab.entries)}
    assignment = dbscan(vectors, dbscan_eps, dbscan_min_pts,
                        frequencies=filtered_vocab.entries)
    clustered = apply_clusters(filtered, assignment)
    clustered_vocab = TagVocabulary(tag_frequencies(clustered), stage="clustered")
    stats = mine_adjacent_pairs(clustered)
    aggregated, merges = aggregate_pairs(clustered, stats, min_support, min_confidence)
    aggregated_vocab = TagVocabulary(tag_frequencies(aggregated), stage="aggregated")
    return NormalizationResult(
        profiles=aggregated,
        stage_profiles={"raw": profiles, "filtered": filtered,
                        "clustered": clustered, "aggregated": aggregated},
        vocabularies={"raw": raw_vocab, "filtered": filtered_vocab,
                      "clustered": clustered_vocab, "aggregated": aggregated_vocab},
        assignment=assignment,
        pair_stats=stats,
        merges=merges,
    )
