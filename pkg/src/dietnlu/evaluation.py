"""Metrics, confusion matrices, error listings, score comparison, and
corpus shift reports.

micro_f1 goes through pooled true/false positive counts rather than a
shortcut, so the single-label identity micro-F1 = accuracy stays a testable
property instead of a definition.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import Dataset, compute_stats

__all__ = [
    "EvalReport",
    "ScoreSummary",
    "ShiftReport",
    "ShiftSide",
    "compare_reports",
    "confusion_matrix",
    "error_listing",
    "evaluate",
    "macro_f1",
    "micro_f1",
    "per_intent_prf",
    "render_error_table",
    "shift_report",
]


def _check_pair(gold, pred) -> None:
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold labels vs {len(pred)} predictions")
    if not gold:
        raise ValueError("no labels to score")


def _pair_counts(gold, pred):
    tp: Counter = Counter()
    fp: Counter = Counter()
    fn: Counter = Counter()
    for g, p in zip(gold, pred):
        if g == p:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    return tp, fp, fn


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def micro_f1(gold: list[str], pred: list[str]) -> float:
    """Micro-averaged F1 over pooled per-sample decisions.

    For single-label multi-class input every error is one false positive
    and one false negative, so this equals accuracy.
    """
    _check_pair(gold, pred)
    tp, fp, fn = _pair_counts(gold, pred)
    tp_sum = sum(tp.values())
    fp_sum = sum(fp.values())
    fn_sum = sum(fn.values())
    precision = tp_sum / (tp_sum + fp_sum) if tp_sum + fp_sum else 0.0
    recall = tp_sum / (tp_sum + fn_sum) if tp_sum + fn_sum else 0.0
    return _f1(precision, recall)


def per_intent_prf(gold: list[str], pred: list[str]) -> dict[str, dict]:
    """precision/recall/F1/support per label, 0 convention for 0/0."""
    _check_pair(gold, pred)
    tp, fp, fn = _pair_counts(gold, pred)
    support = Counter(gold)
    out = {}
    for label in sorted(set(gold) | set(pred)):
        p_den = tp[label] + fp[label]
        r_den = tp[label] + fn[label]
        precision = tp[label] / p_den if p_den else 0.0
        recall = tp[label] / r_den if r_den else 0.0
        out[label] = {
            "precision": precision,
            "recall": recall,
            "f1": _f1(precision, recall),
            "support": support[label],
        }
    return out


def macro_f1(gold: list[str], pred: list[str]) -> float:
    per = per_intent_prf(gold, pred)
    return sum(row["f1"] for row in per.values()) / len(per)


def confusion_matrix(gold: list[str], pred: list[str]) -> tuple[list[str], np.ndarray]:
    """(labels, matrix) with rows = gold, columns = predicted."""
    _check_pair(gold, pred)
    labels = sorted(set(gold) | set(pred))
    index = {lab: i for i, lab in enumerate(labels)}
    mat = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, pred):
        mat[index[g], index[p]] += 1
    return labels, mat


@dataclass
class EvalReport:
    micro_f1: float
    macro_f1: float
    per_intent: dict[str, dict]
    labels: list[str]
    confusion: list[list[int]]
    errors: list[dict]

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(gold: list[str], pred: list[str], texts: list[str] | None = None) -> EvalReport:
    labels, mat = confusion_matrix(gold, pred)
    if texts is None:
        texts = [""] * len(gold)
    errors = [
        {"text": t, "gold": g, "predicted": p}
        for t, g, p in zip(texts, gold, pred)
        if g != p
    ]
    return EvalReport(
        micro_f1=micro_f1(gold, pred),
        macro_f1=macro_f1(gold, pred),
        per_intent=per_intent_prf(gold, pred),
        labels=labels,
        confusion=mat.tolist(),
        errors=errors,
    )


def error_listing(ds: Dataset, preds: list[str]) -> list[dict]:
    """Mismatch rows {text, gold, predicted} in dataset order."""
    if len(preds) != ds.n_samples:
        raise ValueError("one prediction per utterance required")
    return [
        {"text": u.text, "gold": u.intent, "predicted": p}
        for u, p in zip(ds.utterances, preds)
        if u.intent != p
    ]


def render_error_table(rows: list[dict]) -> str:
    """Plain-text table: Sample Utterance | Intent | Prediction."""
    header = ("Sample Utterance", "Intent", "Prediction")
    cells = [(r["text"], r["gold"], r["predicted"]) for r in rows]
    widths = [max(len(col[i]) for col in [header, *cells]) for i in range(3)]
    lines = [" | ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("-+-".join("-" * w for w in widths))
    for row in cells:
        lines.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


# --------------------------------------------------------------------------
# score comparison


@dataclass(frozen=True)
class ScoreSummary:
    """A mean ± std micro-F1 figure tied to the dataset it was measured on."""

    mean: float
    std: float
    dataset_fingerprint: str
    label: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def compare_reports(a: ScoreSummary, b: ScoreSummary) -> dict:
    """Performance gain of b over a; both scores must share a dataset."""
    if a.dataset_fingerprint != b.dataset_fingerprint:
        raise ValueError("cannot compare scores from different datasets")
    return {
        "gain": b.mean - a.mean,
        "a_mean": a.mean,
        "a_std": a.std,
        "b_mean": b.mean,
        "b_std": b.std,
        "dataset_fingerprint": a.dataset_fingerprint,
    }


# --------------------------------------------------------------------------
# corpus shift


@dataclass(frozen=True)
class ShiftSide:
    n_samples: int
    vocab_size: int
    avg_words: float
    oos_share: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ShiftReport:
    a: ShiftSide
    b: ShiftSide
    unseen_a_to_b: list[str]
    unseen_b_to_a: list[str]
    class_divergence: float

    def to_dict(self) -> dict:
        return {
            "a": self.a.to_dict(),
            "b": self.b.to_dict(),
            "unseen_a_to_b": self.unseen_a_to_b,
            "unseen_b_to_a": self.unseen_b_to_a,
            "class_divergence": self.class_divergence,
        }


def _shift_side(ds: Dataset, oos_label: str) -> ShiftSide:
    stats = compute_stats(ds)
    oos = sum(1 for u in ds.utterances if u.intent == oos_label)
    return ShiftSide(
        n_samples=stats.n_samples,
        vocab_size=stats.vocab_size,
        avg_words=stats.avg_words_per_sample,
        oos_share=oos / stats.n_samples,
    )


def _class_probs(ds: Dataset) -> dict[str, float]:
    counts = Counter(u.intent for u in ds.utterances)
    n = ds.n_samples
    return {label: c / n for label, c in counts.items()}


def shift_report(ds_a: Dataset, ds_b: Dataset, oos_label: str = "out-of-scope") -> ShiftReport:
    """Corpus-level drift between two datasets sharing a label space."""
    pa = _class_probs(ds_a)
    pb = _class_probs(ds_b)
    labels = set(pa) | set(pb)
    tv = 0.5 * sum(abs(pa.get(l, 0.0) - pb.get(l, 0.0)) for l in labels)
    return ShiftReport(
        a=_shift_side(ds_a, oos_label),
        b=_shift_side(ds_b, oos_label),
        unseen_a_to_b=sorted(set(pa) - set(pb)),
        unseen_b_to_a=sorted(set(pb) - set(pa)),
        class_divergence=tv,
    )
