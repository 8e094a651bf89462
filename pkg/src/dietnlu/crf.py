"""Linear-chain CRF for BIO entity tagging, plus span/tag conversions.

Scores live in log space throughout; the forward algorithm, marginals, and
Viterbi all run in float64 regardless of the emission dtype so the log-sum-
exp identities hold tightly.
"""

from __future__ import annotations

import numpy as np

from .nn import Param

__all__ = [
    "CRF",
    "bio_tagset",
    "spans_to_tags",
    "tags_to_spans",
    "crf_log_z",
    "crf_score_path",
    "crf_forward_backward",
    "crf_viterbi",
]


def _logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))).squeeze(axis)


def crf_score_path(emissions: np.ndarray, transitions: np.ndarray,
                   tags: list[int]) -> float:
    """Unnormalized log score of one path, BOS and EOS transitions included.

    transitions is (L+2)x(L+2) with row L = BOS and column L+1 = EOS.
    """
    L = emissions.shape[1]
    bos, eos = L, L + 1
    score = transitions[bos, tags[0]] + emissions[0, tags[0]]
    for t in range(1, len(tags)):
        score += transitions[tags[t - 1], tags[t]] + emissions[t, tags[t]]
    return float(score + transitions[tags[-1], eos])


def crf_log_z(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """log partition via the forward algorithm in log space."""
    em = emissions.astype(np.float64)
    tr = transitions.astype(np.float64)
    T, L = em.shape
    bos, eos = L, L + 1
    alpha = tr[bos, :L] + em[0]
    for t in range(1, T):
        alpha = em[t] + _logsumexp(alpha[:, None] + tr[:L, :L], axis=0)
    return float(_logsumexp(alpha + tr[:L, eos], axis=0))


def crf_forward_backward(emissions: np.ndarray, transitions: np.ndarray):
    """(log Z, unary marginals [T,L], pairwise marginals [T-1,L,L]).

    Marginals are the exact gradient building blocks:
    d logZ / d em[t,j] = P(y_t = j), d logZ / d tr[i,j] = sum_t P(y_t=i, y_{t+1}=j).
    """
    em = emissions.astype(np.float64)
    tr = transitions.astype(np.float64)
    T, L = em.shape
    bos, eos = L, L + 1

    alpha = np.empty((T, L))
    alpha[0] = tr[bos, :L] + em[0]
    for t in range(1, T):
        alpha[t] = em[t] + _logsumexp(alpha[t - 1][:, None] + tr[:L, :L], axis=0)
    log_z = float(_logsumexp(alpha[-1] + tr[:L, eos], axis=0))

    beta = np.empty((T, L))
    beta[-1] = tr[:L, eos]
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(tr[:L, :L] + em[t + 1][None, :] + beta[t + 1][None, :], axis=1)

    unary = np.exp(alpha + beta - log_z)
    pairwise = np.empty((max(T - 1, 0), L, L))
    for t in range(T - 1):
        pairwise[t] = np.exp(
            alpha[t][:, None] + tr[:L, :L] + em[t + 1][None, :] + beta[t + 1][None, :] - log_z
        )
    return log_z, unary, pairwise


def crf_viterbi(emissions: np.ndarray, transitions: np.ndarray) -> list[int]:
    """Max-scoring path; argmax ties resolve to the lower tag index."""
    em = emissions.astype(np.float64)
    tr = transitions.astype(np.float64)
    T, L = em.shape
    bos, eos = L, L + 1
    delta = tr[bos, :L] + em[0]
    psi = np.zeros((T, L), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + tr[:L, :L]
        psi[t] = np.argmax(cand, axis=0)
        delta = em[t] + np.take_along_axis(cand, psi[t][None, :], axis=0)[0]
    last = int(np.argmax(delta + tr[:L, eos]))
    path = [last]
    for t in range(T - 1, 0, -1):
        path.append(int(psi[t, path[-1]]))
    path.reverse()
    return path


class CRF:
    """Trainable transition table over a tagset with implicit BOS/EOS.

    Transitions start at zero: emissions carry all signal initially and the
    documented all-zero tie-break stays observable before training.
    """

    def __init__(self, n_tags: int, name: str = "crf", dtype=np.float32):
        if n_tags < 1:
            raise ValueError("need at least one tag")
        self.n_tags = n_tags
        self.transitions = Param(np.zeros((n_tags + 2, n_tags + 2), dtype=dtype),
                                 f"{name}.transitions")

    def params(self) -> list[Param]:
        return [self.transitions]

    def nll(self, emissions: np.ndarray, tags: list[int]) -> tuple[float, np.ndarray]:
        """Negative log-likelihood of the gold path and d nll/d emissions.

        Transition gradients accumulate onto the Param; emission gradients
        are returned for the caller to push into its projection layer.
        """
        T, L = emissions.shape
        if len(tags) != T:
            raise ValueError(f"got {len(tags)} tags for {T} emission rows")
        if L != self.n_tags:
            raise ValueError(f"emissions have {L} columns, tagset has {self.n_tags}")
        tr = self.transitions.value
        log_z, unary, pairwise = crf_forward_backward(emissions, tr)
        gold = crf_score_path(emissions.astype(np.float64), tr.astype(np.float64), tags)
        nll = log_z - gold

        d_em = unary.copy()
        d_em[np.arange(T), tags] -= 1.0

        bos, eos = L, L + 1
        g = self.transitions.grad
        g[bos, :L] += unary[0]
        g[bos, tags[0]] -= 1.0
        g[:L, eos] += unary[-1]
        g[tags[-1], eos] -= 1.0
        if T > 1:
            g[:L, :L] += pairwise.sum(axis=0)
            for t in range(1, T):
                g[tags[t - 1], tags[t]] -= 1.0
        return nll, d_em.astype(emissions.dtype)

    def decode(self, emissions: np.ndarray) -> list[int]:
        if emissions.shape[1] != self.n_tags:
            raise ValueError(
                f"emissions have {emissions.shape[1]} columns, tagset has {self.n_tags}"
            )
        return crf_viterbi(emissions, self.transitions.value)


# --------------------------------------------------------------------------
# BIO scheme utilities


def bio_tagset(entity_types) -> list[str]:
    """['O', 'B-a', 'I-a', 'B-b', ...]; O first so zero-score ties decode to O."""
    tags = ["O"]
    for ent in sorted(set(entity_types)):
        tags.append(f"B-{ent}")
        tags.append(f"I-{ent}")
    return tags


def spans_to_tags(entities, token_spans: list[tuple[str, int, int]],
                  tagset: list[str]) -> list[int]:
    """BIO tag ids for each token; a token belongs to the entity containing it."""
    index = {t: i for i, t in enumerate(tagset)}
    tags = []
    prev_ent = None
    for _, start, end in token_spans:
        hit = None
        for ent in entities:
            if ent.start <= start and end <= ent.end:
                hit = ent
                break
        if hit is None:
            tags.append(index["O"])
            prev_ent = None
        else:
            prefix = "I" if hit is prev_ent else "B"
            tags.append(index[f"{prefix}-{hit.entity}"])
            prev_ent = hit
    return tags


def tags_to_spans(tag_ids: list[int], token_spans: list[tuple[str, int, int]],
                  tagset: list[str]) -> list[dict]:
    """Character spans from BIO ids; a dangling I- opens a span (lenient)."""
    spans = []
    open_span = None  # [start, end, entity]
    for tid, (_, start, end) in zip(tag_ids, token_spans):
        tag = tagset[tid]
        if tag == "O":
            if open_span:
                spans.append(open_span)
                open_span = None
            continue
        prefix, ent = tag.split("-", 1)
        if prefix == "I" and open_span and open_span["entity"] == ent:
            open_span["end"] = end
        else:
            if open_span:
                spans.append(open_span)
            open_span = {"start": start, "end": end, "entity": ent}
    if open_span:
        spans.append(open_span)
    return spans
