"""Stacked bidirectional graph convolution over a weighted dependency adjacency.

Each layer aggregates messages along edges (head -> dependent) and, when
bidirectional, along the transposed direction as well. The two aggregates
are concatenated, divided per token by out-degree + 1, and mapped through a
combine weight, bias, and ReLU. A module-level counter records every
evaluation of the transposed path so ablations can prove they skip it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor

_TRANSPOSE_PATH_EVALS = 0


def transpose_path_count() -> int:
    return _TRANSPOSE_PATH_EVALS


def reset_transpose_path_count() -> None:
    global _TRANSPOSE_PATH_EVALS
    _TRANSPOSE_PATH_EVALS = 0


@dataclass
class GcnLayerParams:
    w_fwd: Tensor
    w_bwd: Tensor | None  # None when the reverse direction is ablated
    w_out: Tensor
    b_out: Tensor

    @property
    def d_in(self) -> int:
        return self.w_fwd.shape[0]

    @property
    def d_out(self) -> int:
        return self.w_out.shape[1]

    @property
    def bidirectional(self) -> bool:
        return self.w_bwd is not None


def init_gcn_layer(store: ParameterStore, prefix: str, d_in: int, d_out: int,
                   rng: np.random.Generator, bidirectional: bool = True) -> GcnLayerParams:
    bound = 1.0 / np.sqrt(d_in)
    w_fwd = store.add(f"{prefix}.w_fwd", rng.uniform(-bound, bound, (d_in, d_out)))
    w_bwd = None
    if bidirectional:
        w_bwd = store.add(f"{prefix}.w_bwd", rng.uniform(-bound, bound, (d_in, d_out)))
    combine_in = 2 * d_out if bidirectional else d_out
    combine_bound = 1.0 / np.sqrt(combine_in)
    return GcnLayerParams(
        w_fwd=w_fwd,
        w_bwd=w_bwd,
        w_out=store.add(f"{prefix}.w_out", rng.uniform(-combine_bound, combine_bound,
                                                       (combine_in, d_out))),
        b_out=store.add(f"{prefix}.b_out", np.zeros(d_out), no_decay=True),
    )


def init_gcn_stack(store: ParameterStore, prefix: str, d_in: int, d_out: int,
                   n_layers: int, rng: np.random.Generator,
                   bidirectional: bool = True) -> list[GcnLayerParams]:
    if n_layers < 1:
        raise ValueError("need at least one graph convolution layer")
    layers = []
    width = d_in
    for l in range(n_layers):
        layers.append(init_gcn_layer(store, f"{prefix}.layer{l}", width, d_out, rng,
                                     bidirectional=bidirectional))
        width = d_out
    return layers


def bigcn_layer(h_prev: Tensor, adj: Tensor, degrees: np.ndarray,
                params: GcnLayerParams) -> Tensor:
    """One message-passing step: aggregate, concatenate, degree-normalize, combine."""
    global _TRANSPOSE_PATH_EVALS
    n, d_in = h_prev.shape
    if adj.shape != (n, n):
        raise ad.ShapeError(f"bigcn_layer: adjacency {adj.shape} for {n} tokens")
    if d_in != params.d_in:
        raise ad.ShapeError(f"bigcn_layer: input width {d_in} != weight width {params.d_in}")
    forward = ad.matmul(adj, ad.matmul(h_prev, params.w_fwd))
    if params.bidirectional:
        _TRANSPOSE_PATH_EVALS += 1
        backward = ad.matmul(ad.transpose(adj), ad.matmul(h_prev, params.w_bwd))
        combined = ad.concat([forward, backward], axis=1)
    else:
        combined = forward
    inv = 1.0 / (np.asarray(degrees, dtype=np.float64) + 1.0)
    normalizer = Tensor(np.repeat(inv[:, None], combined.shape[1], axis=1))
    normed = ad.mul(combined, normalizer)
    return ad.relu(ad.add(ad.matmul(normed, params.w_out), params.b_out))


def bigcn_stack(h0: Tensor, adj: Tensor, degrees: np.ndarray,
                layers: list[GcnLayerParams]) -> Tensor:
    if not layers:
        raise ValueError("need at least one graph convolution layer")
    h = h0
    for params in layers:
        h = bigcn_layer(h, adj, degrees, params)
    return h
