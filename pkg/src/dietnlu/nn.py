"""Minimal differentiable layers on numpy: exactly what the models need.

Every layer owns its Params and implements forward/backward with an
explicit cache; there is no general autodiff. Activations are float32 by
default with float64 accumulation in loss reductions, so central-difference
gradient checks stay meaningful at 32-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Param",
    "zero_grads",
    "xavier_uniform",
    "softmax",
    "masked_softmax",
    "cross_entropy",
    "Linear",
    "SparseLinear",
    "Embedding",
    "LayerNorm",
    "Dropout",
    "MultiHeadAttention",
    "FeedForward",
    "TransformerBlock",
    "TransformerEncoder",
    "Adam",
    "GradCheckReport",
    "grad_check",
]


class Param:
    def __init__(self, value: np.ndarray, name: str):
        self.value = value
        self.grad = np.zeros_like(value)
        self.name = name

    def __repr__(self) -> str:
        return f"Param({self.name}, shape={self.value.shape})"


def zero_grads(params: list[Param]) -> None:
    for p in params:
        p.grad[...] = 0


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...], dtype=np.float32) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def masked_softmax(scores: np.ndarray, key_mask: np.ndarray) -> np.ndarray:
    """Row softmax with masked-out keys at exactly 0.

    key_mask broadcasts over the last axis of scores (True = attend).
    Rows with no admissible key come back all-zero rather than NaN.
    """
    neg = np.where(key_mask, scores, -np.inf)
    rowmax = np.max(neg, axis=-1, keepdims=True)
    rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
    e = np.exp(neg - rowmax)
    denom = np.sum(e, axis=-1, keepdims=True)
    return np.where(denom > 0, e / np.where(denom > 0, denom, 1.0), 0.0)


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over rows; returns (loss, dlogits)."""
    n = logits.shape[0]
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    logp = shifted - logz
    loss = float(-np.sum(logp[np.arange(n), targets], dtype=np.float64) / n)
    dlogits = np.exp(logp)
    dlogits[np.arange(n), targets] -= 1.0
    return loss, (dlogits / n).astype(logits.dtype)


class Linear:
    """y = x @ W + b over the last axis; W is shared across all leading axes."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 name: str = "linear", dtype=np.float32):
        self.W = Param(xavier_uniform(rng, d_in, d_out, (d_in, d_out), dtype), f"{name}.W")
        self.b = Param(np.zeros(d_out, dtype=dtype), f"{name}.b")
        self._x: np.ndarray | None = None

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.W.value.shape[0]:
            raise ValueError(
                f"{self.W.name}: input width {x.shape[-1]} != {self.W.value.shape[0]}"
            )
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        flat_x = x.reshape(-1, x.shape[-1])
        flat_dy = dy.reshape(-1, dy.shape[-1])
        self.W.grad += flat_x.T @ flat_dy
        self.b.grad += flat_dy.sum(axis=0)
        return dy @ self.W.value.T


class SparseLinear:
    """Dense projection of {0,1} sparse rows given as active-index arrays.

    Equivalent to one-hot @ W + b, computed as a row gather-sum so the
    sparse dimension never materializes.
    """

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 name: str = "sparse_linear", dtype=np.float32):
        self.W = Param(xavier_uniform(rng, d_in, d_out, (d_in, d_out), dtype), f"{name}.W")
        self.b = Param(np.zeros(d_out, dtype=dtype), f"{name}.b")
        self._rows: list[np.ndarray] | None = None

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, rows: list[np.ndarray]) -> np.ndarray:
        out = np.tile(self.b.value, (len(rows), 1))
        W = self.W.value
        for i, idx in enumerate(rows):
            if idx.size:
                out[i] += W[idx].sum(axis=0)
        self._rows = rows
        return out

    def backward(self, dy: np.ndarray) -> None:
        for i, idx in enumerate(self._rows):
            if idx.size:
                np.add.at(self.W.grad, idx, dy[i])
        self.b.grad += dy.sum(axis=0)


class Embedding:
    """Row lookup table with scatter-add gradients."""

    def __init__(self, n: int, dim: int, rng: np.random.Generator,
                 name: str = "embedding", dtype=np.float32):
        self.E = Param(xavier_uniform(rng, n, dim, (n, dim), dtype), f"{name}.E")
        self._ids: np.ndarray | None = None

    def params(self) -> list[Param]:
        return [self.E]

    def forward(self, ids: np.ndarray) -> np.ndarray:
        self._ids = ids
        return self.E.value[ids]

    def backward(self, dy: np.ndarray) -> None:
        np.add.at(self.E.grad, self._ids, dy)


class LayerNorm:
    def __init__(self, dim: int, name: str = "ln", eps: float = 1e-5, dtype=np.float32):
        self.gamma = Param(np.ones(dim, dtype=dtype), f"{name}.gamma")
        self.beta = Param(np.zeros(dim, dtype=dtype), f"{name}.beta")
        self.eps = eps
        self._cache = None

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]

    def forward(self, x: np.ndarray) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv = self._cache
        n = xhat.shape[-1]
        self.gamma.grad += np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
        self.beta.grad += np.sum(dy, axis=tuple(range(dy.ndim - 1)))
        dxhat = dy * self.gamma.value
        return (inv / n) * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True)
        )


class Dropout:
    """Inverted dropout; exact identity in eval mode."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {p}")
        self.p = p
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray, rng: np.random.Generator | None,
                training: bool) -> np.ndarray:
        if not training or self.p == 0.0:
            self._mask = None
            return x
        keep = (rng.random(x.shape) >= self.p).astype(x.dtype)
        self._mask = keep / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return dy
        return dy * self._mask


class MultiHeadAttention:
    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 name: str = "attn", dtype=np.float32):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.d_head = dim // heads
        self.wq = Linear(dim, dim, rng, f"{name}.q", dtype)
        self.wk = Linear(dim, dim, rng, f"{name}.k", dtype)
        self.wv = Linear(dim, dim, rng, f"{name}.v", dtype)
        self.wo = Linear(dim, dim, rng, f"{name}.o", dtype)
        self._cache = None

    def params(self) -> list[Param]:
        return self.wq.params() + self.wk.params() + self.wv.params() + self.wo.params()

    def _split(self, x: np.ndarray) -> np.ndarray:
        b, t, _ = x.shape
        return x.reshape(b, t, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        b, h, t, d = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, t, h * d)

    def forward(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """mask: bool [B, T], True at real tokens. Masked keys get weight 0."""
        q = self._split(self.wq.forward(x))
        k = self._split(self.wk.forward(x))
        v = self._split(self.wv.forward(x))
        scale = 1.0 / math.sqrt(self.d_head)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        w = masked_softmax(scores, mask[:, None, None, :])
        ctx = w @ v
        self._cache = (q, k, v, w, scale)
        return self.wo.forward(self._merge(ctx))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        q, k, v, w, scale = self._cache
        d_ctx = self._split(self.wo.backward(dy))
        dw = d_ctx @ v.transpose(0, 1, 3, 2)
        dv = w.transpose(0, 1, 3, 2) @ d_ctx
        # softmax jacobian; zero rows (fully masked) stay zero
        ds = w * (dw - np.sum(dw * w, axis=-1, keepdims=True))
        ds *= scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dx = self.wq.backward(self._merge(dq))
        dx += self.wk.backward(self._merge(dk))
        dx += self.wv.backward(self._merge(dv))
        return dx

    def attention_weights(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """[B,H,T,T] weights for inspection; forward() must not be assumed run."""
        q = self._split(self.wq.forward(x))
        k = self._split(self.wk.forward(x))
        scores = (q @ k.transpose(0, 1, 3, 2)) / math.sqrt(self.d_head)
        return masked_softmax(scores, mask[:, None, None, :])


class FeedForward:
    """linear → ReLU → linear, position-wise."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator,
                 name: str = "ff", dtype=np.float32):
        self.lin1 = Linear(dim, hidden, rng, f"{name}.1", dtype)
        self.lin2 = Linear(hidden, dim, rng, f"{name}.2", dtype)
        self._pre: np.ndarray | None = None

    def params(self) -> list[Param]:
        return self.lin1.params() + self.lin2.params()

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = self.lin1.forward(x)
        self._pre = h
        return self.lin2.forward(np.maximum(h, 0))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dh = self.lin2.backward(dy) * (self._pre > 0)
        return self.lin1.backward(dh)


class TransformerBlock:
    """Post-norm block: LN(x + drop(attn(x))) then LN(h + drop(ff(h)))."""

    def __init__(self, dim: int, heads: int, ff_hidden: int, dropout: float,
                 rng: np.random.Generator, name: str = "block", dtype=np.float32):
        self.attn = MultiHeadAttention(dim, heads, rng, f"{name}.attn", dtype)
        self.ln1 = LayerNorm(dim, f"{name}.ln1", dtype=dtype)
        self.ff = FeedForward(dim, ff_hidden, rng, f"{name}.ff", dtype)
        self.ln2 = LayerNorm(dim, f"{name}.ln2", dtype=dtype)
        self.drop1 = Dropout(dropout)
        self.drop2 = Dropout(dropout)

    def params(self) -> list[Param]:
        return (
            self.attn.params() + self.ln1.params() + self.ff.params() + self.ln2.params()
        )

    def forward(self, x: np.ndarray, mask: np.ndarray,
                rng: np.random.Generator | None, training: bool) -> np.ndarray:
        h = self.ln1.forward(x + self.drop1.forward(self.attn.forward(x, mask), rng, training))
        return self.ln2.forward(h + self.drop2.forward(self.ff.forward(h), rng, training))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dh = self.ln2.backward(dy)
        dh = dh + self.ff.backward(self.drop2.backward(dh))
        dx = self.ln1.backward(dh)
        return dx + self.attn.backward(self.drop1.backward(dx))


class TransformerEncoder:
    def __init__(self, dim: int, heads: int, ff_hidden: int, n_layers: int,
                 dropout: float, rng: np.random.Generator, name: str = "enc",
                 dtype=np.float32):
        self.blocks = [
            TransformerBlock(dim, heads, ff_hidden, dropout, rng, f"{name}.{i}", dtype)
            for i in range(n_layers)
        ]

    def params(self) -> list[Param]:
        return [p for blk in self.blocks for p in blk.params()]

    def forward(self, x: np.ndarray, mask: np.ndarray,
                rng: np.random.Generator | None = None, training: bool = False) -> np.ndarray:
        for blk in self.blocks:
            x = blk.forward(x, mask, rng, training)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for blk in reversed(self.blocks):
            dy = blk.backward(dy)
        return dy


class Adam:
    """Adam with bias correction; step() applies updates and zeroes grads."""

    def __init__(self, params: list[Param], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad[...] = 0


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    n_checked: int
    per_param: dict[str, float]

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(loss_fn, params: list[Param], h: float = 1e-3,
               max_coords_per_param: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Central-difference verification of analytic gradients.

    loss_fn must zero grads, run forward+backward, and return the scalar
    loss; it is called O(coords) times. Relative error per coordinate is
    |a - n| / max(|a|, |n|, 1e-8).
    """
    loss0 = loss_fn()
    if not np.isfinite(loss0):
        raise FloatingPointError(f"non-finite loss {loss0!r}")
    analytic = [p.grad.copy() for p in params]
    worst = (0.0, "", -1)
    n_checked = 0
    per_param: dict[str, float] = {}
    for p, saved in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = saved.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            coords = (rng or np.random.default_rng(0)).choice(
                flat.size, size=max_coords_per_param, replace=False
            )
        worst_here = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            hp = float(flat[i]) - float(orig)
            lp = loss_fn()
            flat[i] = orig - h
            hm = float(orig) - float(flat[i])
            lm = loss_fn()
            flat[i] = orig
            numeric = (lp - lm) / (hp + hm)
            a = float(gflat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            n_checked += 1
            worst_here = max(worst_here, rel)
            if rel > worst[0]:
                worst = (rel, p.name, int(i))
        per_param[p.name] = worst_here
    # restore analytic grads so callers can inspect them afterwards
    loss_fn()
    return GradCheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=worst[2],
        n_checked=n_checked,
        per_param=per_param,
    )
