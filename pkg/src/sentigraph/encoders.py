"""Sequence encoders: embedding lookup, Bi-LSTM, and a transformer block.

The Bi-LSTM runs one pass left-to-right and one right-to-left from zero
initial states and concatenates the per-step hidden vectors, giving an
n x 2*d_h context matrix. The transformer encoder adds sinusoidal position
signals to the raw embeddings, applies multi-head scaled dot-product
attention and a position-wise feed-forward, each followed by a residual
connection and layer normalization, giving an n x d_model matrix of global
features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .corpus import AspectSample, Vocab


def embed_sequence(sample: AspectSample, vocab: Vocab, embedding: Tensor) -> Tensor:
    """Row t of the result is the embedding of token t (unknowns map to the unk row)."""
    return ad.gather_rows(embedding, vocab.encode(sample.tokens))


# ---------------------------------------------------------------------------
# Bi-LSTM

@dataclass
class LstmDirectionParams:
    wx: Tensor  # (d_in, 4*d_h), gate order i, f, g, o
    wh: Tensor  # (d_h, 4*d_h)
    b: Tensor   # (4*d_h,)

    @property
    def d_h(self) -> int:
        return self.wh.shape[0]


@dataclass
class BiLstmParams:
    fwd: LstmDirectionParams
    bwd: LstmDirectionParams


def init_bilstm_params(store: ParameterStore, prefix: str, d_in: int, d_h: int,
                       rng: np.random.Generator) -> BiLstmParams:
    bound = 1.0 / np.sqrt(d_h)

    def direction(name):
        return LstmDirectionParams(
            wx=store.add(f"{prefix}.{name}.wx", rng.uniform(-bound, bound, (d_in, 4 * d_h))),
            wh=store.add(f"{prefix}.{name}.wh", rng.uniform(-bound, bound, (d_h, 4 * d_h))),
            b=store.add(f"{prefix}.{name}.b", np.zeros(4 * d_h), no_decay=True),
        )

    return BiLstmParams(fwd=direction("fwd"), bwd=direction("bwd"))


def _lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor,
               p: LstmDirectionParams) -> tuple[Tensor, Tensor]:
    d_h = p.d_h
    z = ad.add(ad.add(ad.matmul(x, p.wx), ad.matmul(h_prev, p.wh)), p.b)
    i = ad.sigmoid(ad.slice_axis(z, 1, 0, d_h))
    f = ad.sigmoid(ad.slice_axis(z, 1, d_h, 2 * d_h))
    g = ad.tanh(ad.slice_axis(z, 1, 2 * d_h, 3 * d_h))
    o = ad.sigmoid(ad.slice_axis(z, 1, 3 * d_h, 4 * d_h))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(c))
    return h, c


def _lstm_direction(rows: list[Tensor], p: LstmDirectionParams) -> list[Tensor]:
    d_h = p.d_h
    h = Tensor(np.zeros((1, d_h)))
    c = Tensor(np.zeros((1, d_h)))
    out = []
    for x in rows:
        h, c = _lstm_step(x, h, c, p)
        out.append(h)
    return out


def bilstm_encode(embedded: Tensor, params: BiLstmParams) -> Tensor:
    """Concatenate forward-in-time and backward-in-time hidden states per token."""
    n = embedded.shape[0]
    rows = [ad.slice_axis(embedded, 0, t, t + 1) for t in range(n)]
    fwd_states = _lstm_direction(rows, params.fwd)
    bwd_states = list(reversed(_lstm_direction(list(reversed(rows)), params.bwd)))
    per_token = [ad.concat([f, b], axis=1) for f, b in zip(fwd_states, bwd_states)]
    return ad.concat(per_token, axis=0)


# ---------------------------------------------------------------------------
# transformer encoder

def positional_encoding(n: int, d_model: int) -> np.ndarray:
    """Sinusoidal position signals: sin at even dimensions, cos at odd ones."""
    if d_model % 2 != 0:
        raise ValueError(f"positional encoding needs an even width, got {d_model}")
    positions = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, 2.0 * i / d_model)
    out = np.empty((n, d_model), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d_k)) v with row-wise softmax."""
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ad.ShapeError(
            f"scaled_dot_attention: incompatible shapes {q.shape}, {k.shape}, {v.shape}")
    d_k = q.shape[1]
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(d_k))
    return ad.matmul(ad.softmax(scores, axis=1), v)


@dataclass
class AttentionHeadParams:
    wq: Tensor
    wk: Tensor
    wv: Tensor


@dataclass
class TransformerParams:
    heads: list[AttentionHeadParams]
    wo: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    @property
    def d_model(self) -> int:
        return self.wo.shape[0]


def init_transformer_params(store: ParameterStore, prefix: str, d_model: int,
                            n_heads: int, ffn_width: int,
                            rng: np.random.Generator) -> TransformerParams:
    if d_model % n_heads != 0:
        raise ValueError(f"model width {d_model} not divisible by {n_heads} heads")
    d_k = d_model // n_heads
    bound = 1.0 / np.sqrt(d_model)
    heads = []
    for h in range(n_heads):
        heads.append(AttentionHeadParams(
            wq=store.add(f"{prefix}.head{h}.wq", rng.uniform(-bound, bound, (d_model, d_k))),
            wk=store.add(f"{prefix}.head{h}.wk", rng.uniform(-bound, bound, (d_model, d_k))),
            wv=store.add(f"{prefix}.head{h}.wv", rng.uniform(-bound, bound, (d_model, d_k))),
        ))
    ffn_bound = 1.0 / np.sqrt(ffn_width)
    return TransformerParams(
        heads=heads,
        wo=store.add(f"{prefix}.wo", rng.uniform(-bound, bound, (d_model, d_model))),
        ffn_w1=store.add(f"{prefix}.ffn.w1", rng.uniform(-bound, bound, (d_model, ffn_width))),
        ffn_b1=store.add(f"{prefix}.ffn.b1", np.zeros(ffn_width), no_decay=True),
        ffn_w2=store.add(f"{prefix}.ffn.w2", rng.uniform(-ffn_bound, ffn_bound, (ffn_width, d_model))),
        ffn_b2=store.add(f"{prefix}.ffn.b2", np.zeros(d_model), no_decay=True),
        ln1_gain=store.add(f"{prefix}.ln1.gain", np.ones(d_model)),
        ln1_bias=store.add(f"{prefix}.ln1.bias", np.zeros(d_model), no_decay=True),
        ln2_gain=store.add(f"{prefix}.ln2.gain", np.ones(d_model)),
        ln2_bias=store.add(f"{prefix}.ln2.bias", np.zeros(d_model), no_decay=True),
    )


def multi_head_attention(x: Tensor, params: TransformerParams) -> Tensor:
    head_outputs = [
        scaled_dot_attention(ad.matmul(x, h.wq), ad.matmul(x, h.wk), ad.matmul(x, h.wv))
        for h in params.heads
    ]
    return ad.matmul(ad.concat(head_outputs, axis=1), params.wo)


def transformer_encode(embedded: Tensor, params: TransformerParams,
                       use_positions: bool = True) -> Tensor:
    """One encoder block over embeddings + position signals."""
    n, d_model = embedded.shape
    if d_model != params.d_model:
        raise ad.ShapeError(
            f"transformer_encode: input width {d_model} != model width {params.d_model}")
    x = embedded
    if use_positions:
        x = ad.add(x, Tensor(positional_encoding(n, d_model)))
    attended = ad.add(x, multi_head_attention(x, params))
    normed = ad.layer_norm(attended, params.ln1_gain, params.ln1_bias)
    hidden = ad.relu(ad.add(ad.matmul(normed, params.ffn_w1), params.ffn_b1))
    ff = ad.add(ad.matmul(hidden, params.ffn_w2), params.ffn_b2)
    return ad.layer_norm(ad.add(normed, ff), params.ln2_gain, params.ln2_bias)
