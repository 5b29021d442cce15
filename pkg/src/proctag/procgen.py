"""Execution-process generation: prompt construction, completion parsing, and
the retry/discard loop around a pluggable completion backend.

A record gets at most three backend calls (one initial try plus two
retries). The first parseable completion wins; if all three fail to parse
the record is discarded and counted in the ledger. Transport failures share
the same budget but surface as :class:`BackendUnavailable` instead of a
discard when the final attempt could not reach the backend at all.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Protocol

import requests

from .errors import ProcTagError
from .ingest import InstructionRecord
from .render import DocumentRepresentation
from .tagparse import GrammarViolation, ProcessStep, parse_pseudocode

MAX_ATTEMPTS = 3  # one call plus two retries

ANSWER_PREFIX = "ANSWER:"
DOCUMENT_VAR = "document"


class ParseFailure(ProcTagError):
    """A completion did not satisfy the response contract."""


class BackendError(ProcTagError):
    """Transport-level failure talking to a backend (retryable)."""


class BackendUnavailable(ProcTagError):
    """Every attempt failed at the transport level."""


class EmptyLedger(ProcTagError):
    """No generation outcomes recorded yet."""


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int | None = None


class GenerationBackend(Protocol):
    def complete(self, prompt: str, params: DecodeParams, attempt: int = 1) -> str:
        """Return a completion for the prompt; raise BackendError on transport failure."""
        ...


@dataclass
class ExecutionProcess:
    """Chain-of-thought lines plus the parsed pseudo-code steps for one record."""

    cot: list[str]
    steps: list[ProcessStep]
    final_answer: str | None = None
    attempts: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "cot": self.cot,
            "steps": [{"index": s.index, "output_var": s.output_var,
                       "function_name": s.function_name, "args": s.args}
                      for s in self.steps],
            "final_answer": self.final_answer,
            "attempts": self.attempts,
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "ExecutionProcess":
        steps = [ProcessStep(index=s["index"], output_var=s["output_var"],
                             function_name=s["function_name"], args=list(s["args"]))
                 for s in obj["steps"]]
        return cls(cot=list(obj["cot"]), steps=steps,
                   final_answer=obj.get("final_answer"), attempts=obj.get("attempts", 1))


@dataclass
class Discarded:
    """Marker result for a record whose completions never parsed."""

    record_id: str
    reason: str
    attempts: int
    last_completion: str | None = None


class GenerationLedger:
    """Thread-safe success/discard accounting; total == succeeded + discarded."""

    def __init__(self) -> None:
        self.succeeded = 0
        self.discarded = 0
        self.attempts_by_record: dict[str, int] = {}
        self._lock = threading.Lock()

    @property
    def total(self) -> int:
        return self.succeeded + self.discarded

    def record_success(self, record_id: str, attempts: int) -> None:
        with self._lock:
            self.succeeded += 1
            self.attempts_by_record[record_id] = attempts

    def record_discard(self, record_id: str, attempts: int) -> None:
        with self._lock:
            self.discarded += 1
            self.attempts_by_record[record_id] = attempts

    def to_dict(self) -> dict[str, Any]:
        return {"total": self.total, "succeeded": self.succeeded,
                "discarded": self.discarded,
                "attempts_by_record": dict(self.attempts_by_record)}


def discard_rate(ledger: GenerationLedger) -> float:
    if ledger.total == 0:
        raise EmptyLedger("no generation outcomes recorded")
    return ledger.discarded / ledger.total


# ---------------------------------------------------------------------------
# prompting and parsing

_PROMPT_TEMPLATE = """\
You are given the text of a document page and a question about it.

Document:
<BEGIN DOCUMENT>
{document}
<END DOCUMENT>

Question: {question}

First write a numbered step-by-step explanation of how to answer the question
from the document, one step per line, like "1. ...".
Then translate those steps into pseudo-code inside a single triple-backtick
code fence. Use exactly one line per step, of the form
`stepN: result_var = function_name(arguments)`, where the first step takes
the variable `document` and every later step consumes the output variable of
an earlier step.
Finally, on its own line, write the answer as `ANSWER: <answer>`.
"""

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_COT_LINE_RE = re.compile(r"^\s*\d+[.):]\s*(.+)$")
_ANSWER_RE = re.compile(r"^\s*ANSWER:\s*(.*)$", re.MULTILINE)
_IDENT_RE = re.compile(r"^[A-Za-z_]\w*$")


def build_prompt(rep: DocumentRepresentation, question: str) -> str:
    """Deterministic prompt embedding the representation and question verbatim."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    return _PROMPT_TEMPLATE.format(document=rep.text, question=question)


def validate_chain(steps: list[ProcessStep]) -> bool:
    """True when every step after the first consumes a previously defined
    output variable or the document variable."""
    defined = {DOCUMENT_VAR}
    for pos, step in enumerate(steps):
        if pos > 0 and not any(a in defined for a in step.args if _IDENT_RE.match(a)):
            return False
        defined.add(step.output_var)
    return True


def parse_response(completion: str) -> ExecutionProcess:
    """Extract CoT lines, the first fenced pseudo-code block, and the answer
    line; raises ParseFailure when the contract is not met."""
    fence = _FENCE_RE.search(completion)
    if not fence:
        raise ParseFailure("no pseudo-code block")
    try:
        steps = parse_pseudocode(fence.group(1))
    except GrammarViolation as exc:
        raise ParseFailure(f"grammar: {exc}") from exc
    if not steps:
        raise ParseFailure("empty pseudo-code block")
    if not validate_chain(steps):
        raise ParseFailure("broken step chaining")
    cot = [m.group(1).strip() for m in
           (_COT_LINE_RE.match(line) for line in completion[:fence.start()].splitlines())
           if m]
    answers = _ANSWER_RE.findall(completion)
    final_answer = answers[-1].strip() if answers else None
    return ExecutionProcess(cot=cot, steps=steps, final_answer=final_answer or None)


# ---------------------------------------------------------------------------
# generation loop


def generate_process(record: InstructionRecord, rep: DocumentRepresentation,
                     backend: GenerationBackend, ledger: GenerationLedger,
                     params: DecodeParams = DecodeParams()) -> ExecutionProcess | Discarded:
    """Run the retry loop for one record; never more than MAX_ATTEMPTS calls."""
    prompt = build_prompt(rep, record.question)
    last_error: Exception | None = None
    last_completion: str | None = None
    transport_failed_last = False
    for attempt in range(1, MAX_ATTEMPTS + 1):
        try:
            completion = backend.complete(prompt, params, attempt=attempt)
        except BackendError as exc:
            last_error = exc
            transport_failed_last = True
            continue
        transport_failed_last = False
        last_completion = completion
        try:
            process = parse_response(completion)
        except ParseFailure as exc:
            last_error = exc
            continue
        process.attempts = attempt
        ledger.record_success(record.record_id, attempt)
        return process
    if transport_failed_last:
        raise BackendUnavailable(f"{record.record_id}: {last_error}")
    ledger.record_discard(record.record_id, MAX_ATTEMPTS)
    return Discarded(record_id=record.record_id, reason=str(last_error),
                     attempts=MAX_ATTEMPTS, last_completion=last_completion)


def generate_all(records: list[InstructionRecord],
                 reps: dict[str, DocumentRepresentation],
                 backend: GenerationBackend, ledger: GenerationLedger,
                 params: DecodeParams = DecodeParams(),
                 max_inflight: int = 4) -> list[ExecutionProcess | Discarded]:
    """Generate concurrently; results come back in input record order."""
    if max_inflight < 1:
        raise ValueError("max_inflight must be >= 1")

    def one(record: InstructionRecord) -> ExecutionProcess | Discarded:
        return generate_process(record, reps[record.page_id], backend, ledger, params)

    if max_inflight == 1 or len(records) <= 1:
        return [one(r) for r in records]
    with ThreadPoolExecutor(max_workers=max_inflight) as pool:
        return list(pool.map(one, records))


# ---------------------------------------------------------------------------
# backends

_MOCK_VERBS = ("find", "extract", "locate", "get", "read", "compare")
_MOCK_NOUNS = ("table", "row", "value", "title", "item", "total", "header", "date")


class MockBackend:
    """Deterministic offline backend; the completion is a pure function of
    the prompt text. A fixed fraction of completions opens with the same two
    steps so the downstream association stage has something to aggregate."""

    def complete(self, prompt: str, params: DecodeParams = DecodeParams(),
                 attempt: int = 1) -> str:
        seed = int.from_bytes(hashlib.sha256(prompt.encode("utf-8")).digest()[:8], "big")
        rng = random.Random(seed)
        n_steps = rng.randint(2, 4)
        names: list[str] = []
        if rng.random() < 0.3:
            # fixed opening pair, outside the random vocabulary, so large mock
            # corpora give the association stage something to merge
            names += ["scan_list", "pick_entry"]
        while len(names) < n_steps:
            names.append(f"{rng.choice(_MOCK_VERBS)}_{rng.choice(_MOCK_NOUNS)}")
        cot = [f"{i}. Apply {name} to narrow down the answer."
               for i, name in enumerate(names, start=1)]
        code = []
        prev = DOCUMENT_VAR
        for i, name in enumerate(names, start=1):
            var = f"r{i}"
            args = prev if rng.random() < 0.7 else f'{prev}, "{rng.choice(_MOCK_NOUNS)}"'
            code.append(f"step{i}: {var} = {name}({args})")
            prev = var
        answer = f"{rng.choice(_MOCK_NOUNS)} {rng.randint(1, 999)}"
        return "\n".join(cot) + "\n\n```\n" + "\n".join(code) + "\n```\n\n" \
            + f"{ANSWER_PREFIX} {answer}\n"


class RemoteBackend:
    """Chat-completion HTTP adapter; the wire-format mapping is isolated here."""

    def __init__(self, url: str | None = None, api_key: str | None = None,
                 model: str = "default", timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.url = url or os.environ.get("PROCTAG_BACKEND_URL", "")
        self.api_key = api_key if api_key is not None else os.environ.get("PROCTAG_BACKEND_KEY")
        self.model = model
        self.timeout = timeout
        self._session = session or requests.Session()
        if not self.url:
            raise BackendError("no backend URL (set PROCTAG_BACKEND_URL)")

    def complete(self, prompt: str, params: DecodeParams = DecodeParams(),
                 attempt: int = 1) -> str:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
        }
        if params.max_tokens is not None:
            payload["max_tokens"] = params.max_tokens
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._session.post(self.url, json=payload, headers=headers,
                                      timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"backend returned HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response shape: {exc}") from exc


def _cache_key(prompt: str, params: DecodeParams, attempt: int) -> str:
    material = json.dumps({"prompt": prompt, "temperature": params.temperature,
                           "max_tokens": params.max_tokens, "attempt": attempt},
                          sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class CachingBackend:
    """Content-addressed completion cache around an inner backend.

    The cache key covers prompt, decode parameters, and the attempt index, so
    retries are cached independently. With ``inner=None`` the cache is
    replay-only and a miss is a transport failure.
    """

    def __init__(self, cache_dir: Path | str, inner: GenerationBackend | None = None):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.inner = inner

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def complete(self, prompt: str, params: DecodeParams = DecodeParams(),
                 attempt: int = 1) -> str:
        path = self._path(_cache_key(prompt, params, attempt))
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))["completion"]
        if self.inner is None:
            raise BackendError(f"cache miss for {path.name} in replay-only mode")
        completion = self.inner.complete(prompt, params, attempt=attempt)
        entry = {"prompt": prompt, "completion": completion,
                 "created_at": datetime.now(timezone.utc).isoformat()}
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(entry, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)
        return completion
