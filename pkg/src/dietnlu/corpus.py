"""Labeled utterance corpora: loading, validation, tokenization, stats, CV folds.

Datasets are JSON-lines files, one object per line:

    {"id": str, "text": str, "intent": str,
     "entities": [{"start": int, "end": int, "entity": str, "value": str}]}

``entities`` is optional and defaults to empty. Files are UTF-8 with LF
line endings.
"""

from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "DatasetError",
    "Entity",
    "Utterance",
    "Dataset",
    "DatasetStats",
    "FoldPlan",
    "load_dataset",
    "save_dataset",
    "tokenize",
    "tokenize_with_spans",
    "whitespace_words",
    "compute_stats",
    "class_distribution",
    "stratified_kfold",
]

# Split convention shared with external tooling: ASCII whitespace only, so
# that reimplementations in other runtimes segment identically.
_WHITESPACE_RE = re.compile(r"[ \t\n\r\f\v]+")
_STRIP_CHARS = string.punctuation


class DatasetError(ValueError):
    """Raised for malformed dataset files or invalid utterance data."""


@dataclass(frozen=True)
class Entity:
    start: int
    end: int
    entity: str
    value: str


@dataclass(frozen=True)
class Utterance:
    id: str
    text: str
    intent: str
    entities: tuple[Entity, ...] = ()

    def validate(self) -> None:
        if not self.text.strip():
            raise DatasetError(f"utterance {self.id!r}: empty text")
        if not self.intent:
            raise DatasetError(f"utterance {self.id!r}: empty intent")
        spans = sorted(self.entities, key=lambda e: (e.start, e.end))
        prev_end = -1
        for ent in spans:
            if not (0 <= ent.start < ent.end <= len(self.text)):
                raise DatasetError(
                    f"utterance {self.id!r}: entity span [{ent.start}, {ent.end})"
                    f" out of bounds for text of length {len(self.text)}"
                )
            if ent.start < prev_end:
                raise DatasetError(f"utterance {self.id!r}: overlapping entity spans")
            prev_end = ent.end


@dataclass(frozen=True)
class Dataset:
    name: str
    utterances: tuple[Utterance, ...]

    @property
    def intents(self) -> frozenset[str]:
        return frozenset(u.intent for u in self.utterances)

    @property
    def entity_types(self) -> frozenset[str]:
        return frozenset(e.entity for u in self.utterances for e in u.entities)

    @property
    def n_samples(self) -> int:
        return len(self.utterances)

    def validate(self) -> None:
        if not self.utterances:
            raise DatasetError(f"dataset {self.name!r}: empty dataset")
        seen: set[str] = set()
        for utt in self.utterances:
            if utt.id in seen:
                raise DatasetError(f"dataset {self.name!r}: duplicate id {utt.id!r}")
            seen.add(utt.id)
            utt.validate()

    def fingerprint(self) -> str:
        """Content hash used to pair reports produced from the same data."""
        import hashlib

        h = hashlib.sha256()
        for utt in self.utterances:
            h.update(utt.id.encode("utf-8"))
            h.update(b"\x00")
            h.update(utt.text.encode("utf-8"))
            h.update(b"\x00")
            h.update(utt.intent.encode("utf-8"))
            h.update(b"\x01")
        return h.hexdigest()


@dataclass(frozen=True)
class DatasetStats:
    n_intents: int
    n_samples: int
    min_samples_per_intent: int
    max_samples_per_intent: int
    avg_samples_per_intent: float
    vocab_size: int
    total_words: int
    min_words_per_sample: int
    max_words_per_sample: int
    avg_words_per_sample: float

    def to_dict(self) -> dict:
        return {
            "n_intents": self.n_intents,
            "n_samples": self.n_samples,
            "min_samples_per_intent": self.min_samples_per_intent,
            "max_samples_per_intent": self.max_samples_per_intent,
            "avg_samples_per_intent": self.avg_samples_per_intent,
            "vocab_size": self.vocab_size,
            "total_words": self.total_words,
            "min_words_per_sample": self.min_words_per_sample,
            "max_words_per_sample": self.max_words_per_sample,
            "avg_words_per_sample": self.avg_words_per_sample,
        }


def _parse_entity(obj: dict, line_no: int) -> Entity:
    try:
        return Entity(
            start=int(obj["start"]),
            end=int(obj["end"]),
            entity=str(obj["entity"]),
            value=str(obj.get("value", "")),
        )
    except KeyError as exc:
        raise DatasetError(f"line {line_no}: entity missing field {exc.args[0]!r}") from None


def _parse_line(raw: str, line_no: int) -> Utterance:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"line {line_no}: malformed JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise DatasetError(f"line {line_no}: expected a JSON object")
    for key in ("id", "text", "intent"):
        if key not in obj:
            raise DatasetError(f"line {line_no}: missing required field {key!r}")
    entities = tuple(_parse_entity(e, line_no) for e in obj.get("entities") or [])
    utt = Utterance(
        id=str(obj["id"]), text=str(obj["text"]), intent=str(obj["intent"]), entities=entities
    )
    try:
        utt.validate()
    except DatasetError as exc:
        raise DatasetError(f"line {line_no}: {exc}") from None
    return utt


def load_dataset(path: str | Path, name: str | None = None) -> Dataset:
    """Parse a JSONL dataset file, validating every record.

    Raises DatasetError with the offending line number for malformed JSON,
    missing fields, bad entity spans, duplicate ids, or an empty file.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    utterances = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        utterances.append(_parse_line(raw, line_no))
    ds = Dataset(name=name or path.stem, utterances=tuple(utterances))
    ds.validate()
    return ds


def save_dataset(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    lines = []
    for utt in ds.utterances:
        obj: dict = {"id": utt.id, "text": utt.text, "intent": utt.intent}
        if utt.entities:
            obj["entities"] = [
                {"start": e.start, "end": e.end, "entity": e.entity, "value": e.value}
                for e in utt.entities
            ]
        lines.append(json.dumps(obj, ensure_ascii=False))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def whitespace_words(text: str) -> list[str]:
    """Raw whitespace-separated words, the unit used by dataset statistics."""
    return [w for w in _WHITESPACE_RE.split(text) if w]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation per token.

    Tokens that are punctuation-only disappear; the result is empty only
    for input with no word characters at all.
    """
    tokens = []
    for word in _WHITESPACE_RE.split(text.lower()):
        tok = word.strip(_STRIP_CHARS)
        if tok:
            tokens.append(tok)
    return tokens


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Like tokenize, but each token carries its character span in ``text``.

    Spans index the original string; lowercasing is assumed to preserve
    length (true for the ASCII data this targets).
    """
    out = []
    for match in re.finditer(r"[^ \t\n\r\f\v]+", text.lower()):
        word = match.group(0)
        lead = len(word) - len(word.lstrip(_STRIP_CHARS))
        stripped = word.strip(_STRIP_CHARS)
        if stripped:
            start = match.start() + lead
            out.append((stripped, start, start + len(stripped)))
    return out


def compute_stats(ds: Dataset) -> DatasetStats:
    """Corpus summary. Word counts use raw whitespace words of the text."""
    if not ds.utterances:
        raise DatasetError("empty dataset")
    counts = class_distribution(ds)
    per_intent = list(counts.values())
    word_counts = []
    vocab: set[str] = set()
    total_words = 0
    for utt in ds.utterances:
        words = whitespace_words(utt.text)
        word_counts.append(len(words))
        total_words += len(words)
        vocab.update(w.lower() for w in words)
    n = ds.n_samples
    return DatasetStats(
        n_intents=len(counts),
        n_samples=n,
        min_samples_per_intent=min(per_intent),
        max_samples_per_intent=max(per_intent),
        avg_samples_per_intent=n / len(counts),
        vocab_size=len(vocab),
        total_words=total_words,
        min_words_per_sample=min(word_counts),
        max_words_per_sample=max(word_counts),
        avg_words_per_sample=total_words / n,
    )


def class_distribution(ds: Dataset) -> dict[str, int]:
    """Per-intent sample counts; intents never observed are absent."""
    counts = Counter(u.intent for u in ds.utterances)
    return dict(sorted(counts.items()))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    assignment: dict[str, int]
    warnings: tuple[str, ...] = field(default=())

    def test_ids(self, fold: int) -> list[str]:
        return [uid for uid, f in self.assignment.items() if f == fold]

    def train_ids(self, fold: int) -> list[str]:
        return [uid for uid, f in self.assignment.items() if f != fold]

    def split(self, ds: Dataset, fold: int) -> tuple[Dataset, Dataset]:
        """(train, test) sub-datasets for one fold, preserving corpus order."""
        train, test = [], []
        for utt in ds.utterances:
            (test if self.assignment[utt.id] == fold else train).append(utt)
        return (
            Dataset(name=f"{ds.name}-f{fold}-train", utterances=tuple(train)),
            Dataset(name=f"{ds.name}-f{fold}-test", utterances=tuple(test)),
        )


def stratified_kfold(ds: Dataset, k: int, seed: int) -> FoldPlan:
    """Stratified fold assignment, deterministic for a fixed seed.

    Each class is shuffled and dealt round-robin; the fold cursor carries
    over between classes so overall fold sizes also differ by at most one.
    Classes with fewer than k samples land in only some folds and are
    reported in the plan's warnings.
    """
    import numpy as np

    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > ds.n_samples:
        raise ValueError(f"k={k} exceeds dataset size {ds.n_samples}")
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[str]] = {}
    for utt in ds.utterances:
        by_class.setdefault(utt.intent, []).append(utt.id)

    assignment: dict[str, int] = {}
    warn: list[str] = []
    cursor = 0
    for intent in sorted(by_class):
        ids = by_class[intent]
        order = rng.permutation(len(ids))
        if len(ids) < k:
            warn.append(
                f"intent {intent!r} has {len(ids)} samples for k={k};"
                " it will be absent from some folds"
            )
        for i in order:
            assignment[ids[i]] = cursor % k
            cursor += 1
    # Report in corpus order regardless of assignment order.
    assignment = {utt.id: assignment[utt.id] for utt in ds.utterances}
    return FoldPlan(k=k, seed=seed, assignment=assignment, warnings=tuple(warn))
