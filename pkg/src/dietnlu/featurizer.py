"""Sparse and dense featurization for token sequences plus the CLS slot.

Sparse features are one-hot token ids and multi-hot character n-grams over
a vocabulary fitted on training text only. Dense features come from a
DenseProvider: a token table, a sentence table, or a seeded hash embedder
that stands in for pretrained encoders in tests.
"""

from __future__ import annotations

import hashlib
import math
import re
import struct
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "DnseFormatError",
    "SentenceKeyError",
    "SparseSpec",
    "DenseProvider",
    "FeatureBundle",
    "fit_sparse",
    "char_ngrams",
    "featurize",
    "hash_embed",
    "normalize_key",
    "load_dense_file",
    "save_dense_file",
]

DNSE_MAGIC = b"DNSE"
DNSE_VERSION = 1
_KIND_TO_BYTE = {"token-table": 0x00, "sentence-table": 0x01}
_BYTE_TO_KIND = {v: k for k, v in _KIND_TO_BYTE.items()}

_WS_RE = re.compile(r"[ \t\n\r\f\v]+")


class DnseFormatError(ValueError):
    """Raised for malformed dense-feature files."""


class SentenceKeyError(LookupError):
    """A sentence-table provider was asked for a sentence it does not hold."""


def normalize_key(text: str) -> str:
    """Canonical lookup key: NFC, lowercased, ASCII whitespace collapsed.

    The same transform is applied by exporters when writing keys, so both
    sides of a dense file agree byte for byte.
    """
    text = unicodedata.normalize("NFC", text).lower()
    return _WS_RE.sub(" ", text).strip()


# --------------------------------------------------------------------------
# sparse side


@dataclass(frozen=True)
class SparseSpec:
    """Index layout: [token one-hots | n-gram multi-hots | optional OOV]."""

    token_vocab: dict[str, int]
    ngram_vocab: dict[str, int]
    ngram_range: tuple[int, int]
    oov_bucket: bool

    @property
    def dim(self) -> int:
        return len(self.token_vocab) + len(self.ngram_vocab) + (1 if self.oov_bucket else 0)

    @property
    def oov_index(self) -> int | None:
        if not self.oov_bucket:
            return None
        return len(self.token_vocab) + len(self.ngram_vocab)

    def encode_token(self, token: str) -> np.ndarray:
        """Sorted active indices for one token.

        A token activates its vocab slot (when known) plus every matched
        n-gram slot. Only a token matching nothing falls into the OOV
        bucket.
        """
        tok = token.lower()
        active: set[int] = set()
        idx = self.token_vocab.get(tok)
        if idx is not None:
            active.add(idx)
        for gram in set(char_ngrams(tok, *self.ngram_range)):
            gidx = self.ngram_vocab.get(gram)
            if gidx is not None:
                active.add(gidx)
        if not active and self.oov_bucket:
            active.add(self.oov_index)
        return np.array(sorted(active), dtype=np.int64)

    def to_dict(self) -> dict:
        tokens = [None] * len(self.token_vocab)
        for t, i in self.token_vocab.items():
            tokens[i] = t
        grams = [None] * len(self.ngram_vocab)
        base = len(self.token_vocab)
        for g, i in self.ngram_vocab.items():
            grams[i - base] = g
        return {
            "tokens": tokens,
            "ngrams": grams,
            "ngram_range": list(self.ngram_range),
            "oov_bucket": self.oov_bucket,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SparseSpec":
        tokens = {t: i for i, t in enumerate(obj["tokens"])}
        base = len(tokens)
        grams = {g: base + i for i, g in enumerate(obj["ngrams"])}
        n_min, n_max = obj["ngram_range"]
        return cls(tokens, grams, (int(n_min), int(n_max)), bool(obj["oov_bucket"]))


def char_ngrams(token: str, n_min: int, n_max: int) -> list[str]:
    """All contiguous substrings of lengths n_min..n_max, with multiplicity.

    No boundary markers are added; the multi-hot encoding later clips
    repeats to presence.
    """
    if not token:
        raise ValueError("empty token")
    tok = token.lower()
    out = []
    for n in range(n_min, n_max + 1):
        for i in range(len(tok) - n + 1):
            out.append(tok[i : i + n])
    return out


def fit_sparse(
    train_token_lists,
    ngram_range: tuple[int, int] = (1, 4),
    min_freq: int = 1,
    oov_bucket: bool = True,
) -> SparseSpec:
    """Build the sparse vocabulary from training-fold tokens only.

    Index assignment is lexicographic within each segment, so refitting the
    same corpus reproduces the same spec.
    """
    n_min, n_max = ngram_range
    if n_min < 1 or n_max < n_min:
        raise ValueError(f"bad ngram_range {ngram_range}")
    token_counts: Counter[str] = Counter()
    gram_counts: Counter[str] = Counter()
    n_tokens = 0
    for tokens in train_token_lists:
        for token in tokens:
            tok = token.lower()
            n_tokens += 1
            token_counts[tok] += 1
            gram_counts.update(char_ngrams(tok, n_min, n_max))
    if n_tokens == 0:
        raise ValueError("empty corpus")
    kept_tokens = sorted(t for t, c in token_counts.items() if c >= min_freq)
    kept_grams = sorted(g for g, c in gram_counts.items() if c >= min_freq)
    token_vocab = {t: i for i, t in enumerate(kept_tokens)}
    base = len(token_vocab)
    ngram_vocab = {g: base + i for i, g in enumerate(kept_grams)}
    return SparseSpec(token_vocab, ngram_vocab, (n_min, n_max), oov_bucket)


# --------------------------------------------------------------------------
# dense side


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


@lru_cache(maxsize=65536)
def _hash_embed_cached(key: str, dim: int, seed: int) -> np.ndarray:
    base = key.encode("utf-8") + struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF)
    vals = [0.0] * dim
    for i in range(dim):
        h = _fnv1a64(base + struct.pack("<Q", i))
        vals[i] = float(h) * 2.0**-63 - 1.0
    # Sequential float64 accumulation keeps the norm bit-reproducible in
    # other runtimes; vectorized sums may reassociate.
    acc = 0.0
    for v in vals:
        acc += v * v
    norm = math.sqrt(acc)
    vec = np.array([v / norm for v in vals], dtype=np.float64).astype(np.float32)
    vec.flags.writeable = False
    return vec


def hash_embed(key: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic unit vector from (key, dim, seed).

    Per component i: FNV-1a-64 over key bytes ++ u64-LE seed ++ u64-LE i,
    mapped to [-1, 1) by h * 2^-63 - 1, then L2-normalized in float64 and
    cast to float32. Byte-identical across conforming implementations.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return _hash_embed_cached(key, dim, int(seed))


class DenseProvider:
    """Immutable source of dense vectors keyed by normalized strings.

    kind 'token-table': per-token vectors, misses yield zeros.
    kind 'sentence-table': per-utterance vectors, misses are errors.
    kind 'hash': seeded stand-in that embeds any token on demand.
    """

    def __init__(self, kind: str, dim: int, table: dict[str, np.ndarray] | None = None,
                 seed: int | None = None):
        if kind not in ("token-table", "sentence-table", "hash"):
            raise ValueError(f"unknown provider kind {kind!r}")
        if kind == "hash":
            if seed is None:
                raise ValueError("hash provider needs a seed")
            table = {}
        else:
            if table is None:
                raise ValueError(f"{kind} provider needs a table")
            for key, vec in table.items():
                if vec.shape != (dim,):
                    raise ValueError(
                        f"vector for key {key!r} has shape {vec.shape}, expected ({dim},)"
                    )
        self.kind = kind
        self.dim = int(dim)
        self.seed = seed
        self._table = {k: np.asarray(v, dtype=np.float32) for k, v in (table or {}).items()}

    @classmethod
    def hash(cls, dim: int, seed: int) -> "DenseProvider":
        return cls("hash", dim, seed=seed)

    @classmethod
    def from_table(cls, kind: str, dim: int, table: dict[str, np.ndarray]) -> "DenseProvider":
        normed = {normalize_key(k): np.asarray(v, dtype=np.float32) for k, v in table.items()}
        return cls(kind, dim, table=normed)

    def __len__(self) -> int:
        return len(self._table)

    def keys(self):
        return self._table.keys()

    def token_vector(self, token: str) -> np.ndarray:
        if self.kind == "hash":
            return hash_embed(token, self.dim, self.seed)
        if self.kind == "sentence-table":
            raise ValueError("sentence-table provider has no token vectors")
        vec = self._table.get(normalize_key(token))
        if vec is None:
            return np.zeros(self.dim, dtype=np.float32)
        return vec

    def sentence_vector(self, raw_text: str) -> np.ndarray:
        if self.kind != "sentence-table":
            raise ValueError(f"{self.kind} provider has no sentence vectors")
        key = normalize_key(raw_text)
        vec = self._table.get(key)
        if vec is None:
            # A silent zero here would corrupt every downstream score.
            raise SentenceKeyError(f"no sentence vector for key {key!r}")
        return vec

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        if self.kind == "hash":
            h.update(f"hash:{self.dim}:{self.seed}".encode("ascii"))
        else:
            h.update(f"{self.kind}:{self.dim}".encode("ascii"))
            for key in sorted(self._table, key=lambda k: k.encode("utf-8")):
                h.update(key.encode("utf-8"))
                h.update(b"\x00")
                h.update(self._table[key].tobytes())
        return h.hexdigest()

    def items_sorted(self):
        for key in sorted(self._table, key=lambda k: k.encode("utf-8")):
            yield key, self._table[key]


# --------------------------------------------------------------------------
# feature bundles


@dataclass
class FeatureBundle:
    token_sparse: list[np.ndarray]
    token_dense: np.ndarray | None
    cls_sparse: np.ndarray
    cls_dense: np.ndarray | None
    length: int


def featurize(
    spec: SparseSpec,
    provider: DenseProvider | None,
    tokens: list[str],
    raw_text: str,
) -> FeatureBundle:
    """Per-token sparse/dense features plus the sentence-level CLS slot.

    cls_sparse is the presence union of the token sparse vectors. cls_dense
    is the sentence lookup for sentence-table providers and the mean of
    token_dense otherwise.
    """
    if not tokens:
        raise ValueError("cannot featurize an empty token sequence")
    token_sparse = [spec.encode_token(t) for t in tokens]
    union: set[int] = set()
    for arr in token_sparse:
        union.update(int(i) for i in arr)
    cls_sparse = np.array(sorted(union), dtype=np.int64)

    token_dense = None
    cls_dense = None
    if provider is not None:
        if provider.kind == "sentence-table":
            cls_dense = provider.sentence_vector(raw_text)
        else:
            token_dense = np.stack([provider.token_vector(t) for t in tokens])
            cls_dense = token_dense.mean(axis=0, dtype=np.float64).astype(np.float32)
    return FeatureBundle(
        token_sparse=token_sparse,
        token_dense=token_dense,
        cls_sparse=cls_sparse,
        cls_dense=cls_dense,
        length=len(tokens),
    )


# --------------------------------------------------------------------------
# DNSE file format


def save_dense_file(path: str | Path, provider: DenseProvider) -> bytes:
    """Write a table provider to the DNSE binary format; returns the payload.

    Layout: magic 'DNSE', version 0x01, kind byte, u32-LE dim, u32-LE count,
    then per record u16-LE key length, UTF-8 key, dim float32-LE. Keys are
    strictly ascending bytewise.
    """
    if provider.kind == "hash":
        raise ValueError("hash providers are recomputed, not serialized")
    chunks = [
        DNSE_MAGIC,
        bytes([DNSE_VERSION, _KIND_TO_BYTE[provider.kind]]),
        struct.pack("<II", provider.dim, len(provider)),
    ]
    for key, vec in provider.items_sorted():
        kb = key.encode("utf-8")
        if len(kb) > 0xFFFF:
            raise ValueError(f"key too long: {key[:40]!r}...")
        chunks.append(struct.pack("<H", len(kb)))
        chunks.append(kb)
        chunks.append(np.asarray(vec, dtype="<f4").tobytes())
    payload = b"".join(chunks)
    Path(path).write_bytes(payload)
    return payload


def load_dense_file(path: str | Path) -> DenseProvider:
    """Read a DNSE file, verifying magic, version, key order, and length."""
    data = Path(path).read_bytes()
    if len(data) < 14:
        raise DnseFormatError("file too short for DNSE header")
    if data[:4] != DNSE_MAGIC:
        raise DnseFormatError(f"bad magic {data[:4]!r}")
    version = data[4]
    if version != DNSE_VERSION:
        raise DnseFormatError(f"unsupported version {version}")
    kind = _BYTE_TO_KIND.get(data[5])
    if kind is None:
        raise DnseFormatError(f"unknown kind byte {data[5]:#04x}")
    dim, count = struct.unpack_from("<II", data, 6)
    if dim < 1:
        raise DnseFormatError(f"bad dimension {dim}")
    pos = 14
    table: dict[str, np.ndarray] = {}
    prev_key: bytes | None = None
    vec_bytes = 4 * dim
    for _ in range(count):
        if pos + 2 > len(data):
            raise DnseFormatError("truncated record header")
        (klen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + klen + vec_bytes > len(data):
            raise DnseFormatError("truncated record payload")
        kb = data[pos : pos + klen]
        pos += klen
        try:
            key = kb.decode("utf-8")
        except UnicodeDecodeError:
            raise DnseFormatError(f"key at offset {pos - klen} is not UTF-8") from None
        if prev_key is not None and kb <= prev_key:
            raise DnseFormatError(f"keys not strictly ascending at {key!r}")
        prev_key = kb
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).copy()
        pos += vec_bytes
        table[key] = vec
    if pos != len(data):
        raise DnseFormatError(f"{len(data) - pos} trailing bytes after {count} records")
    return DenseProvider(kind, dim, table=table)
