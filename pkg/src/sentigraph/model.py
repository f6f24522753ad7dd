"""Full classifier assembly: encoders -> graph convolution -> masked attention -> softmax.

The forward pass for one sample is

    embeddings -> Bi-LSTM context states      (n x 2*d_h)
               -> transformer global features (n x d_w)
    context states + weighted dependency adjacency -> stacked Bi-GCN
    -> aspect mask -> retrieval attention over context states -> pooled vector
    -> fused with projected transformer mean -> 3-way softmax

Ablation switches replace the adjacency with the binary or identity matrix
and can drop the reversed message-passing direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import bigcn, encoders, head
from .autodiff import FiniteDiffReport, ParameterStore, Tensor
from .config import TrainConfig
from .corpus import (
    LABELS,
    AspectSample,
    EmbeddingTable,
    Vocab,
    build_vocab,
    random_embeddings,
)
from .head import Prediction
from .syntax import (
    SdiTable,
    build_binary_adjacency,
    build_sdi_adjacency,
    collect_sdi_stats,
    out_degrees,
)
from .synthetic import random_tree_sample
from .util import make_rng


@dataclass
class ForwardPass:
    """Intermediates of one sample's forward computation."""

    embedded: Tensor
    h_lstm: Tensor
    z_out: Tensor
    adjacency: np.ndarray
    degrees: np.ndarray
    h_gcn: Tensor
    h_mask: Tensor
    alpha: Tensor
    pooled: Tensor
    res_out: Tensor
    prediction: Prediction


class AspectSentimentModel:
    """Bundles parameters, vocabulary, and relation statistics for one configuration."""

    def __init__(self, config: TrainConfig, vocab: Vocab,
                 sdi: SdiTable | None = None,
                 embeddings: EmbeddingTable | None = None):
        config.validate()
        if config.use_dependency and config.use_sdi_weights and sdi is None:
            raise ValueError("edge-weighted adjacency requires relation statistics")
        self.config = config
        self.vocab = vocab
        self.sdi = sdi

        if embeddings is None:
            embeddings = random_embeddings(vocab, config.d_w, make_rng(config.seed, "oov"))
        if embeddings.vectors.shape != (len(vocab), config.d_w):
            raise ValueError(
                f"embedding table {embeddings.vectors.shape} does not match "
                f"vocab size {len(vocab)} and width {config.d_w}")

        rng = make_rng(config.seed, "init")
        store = ParameterStore()
        self.embedding = store.add("embedding", embeddings.vectors)
        self.lstm = encoders.init_bilstm_params(store, "lstm", config.d_w, config.d_h, rng)
        self.transformer = encoders.init_transformer_params(
            store, "transformer", config.d_model, config.heads, config.ffn_width, rng)
        self.gcn_layers = bigcn.init_gcn_stack(
            store, "gcn", config.d_context, config.d_context, config.gcn_layers, rng,
            bidirectional=config.use_bidirectional_gcn)
        self.fusion = head.init_fusion_params(
            store, "fusion", config.d_model, config.d_context, rng)
        self.classifier = head.init_classifier_params(
            store, "classifier", config.d_context, len(LABELS), rng)
        self.parameters = store

    def adjacency(self, sample: AspectSample) -> tuple[np.ndarray, np.ndarray]:
        """The adjacency/degree pair this configuration consumes for a sample."""
        n = sample.n
        if not self.config.use_dependency:
            return np.eye(n), np.zeros(n)
        binary = build_binary_adjacency(sample)
        degrees = out_degrees(binary)
        if self.config.use_sdi_weights:
            return build_sdi_adjacency(sample, self.sdi), degrees
        return binary, degrees

    def forward(self, sample: AspectSample) -> ForwardPass:
        embedded = encoders.embed_sequence(sample, self.vocab, self.embedding)
        h_lstm = encoders.bilstm_encode(embedded, self.lstm)
        z_out = encoders.transformer_encode(embedded, self.transformer)
        adjacency, degrees = self.adjacency(sample)
        h_gcn = bigcn.bigcn_stack(h_lstm, Tensor(adjacency), degrees, self.gcn_layers)
        h_mask = head.aspect_mask(h_gcn, sample.aspect_start, sample.aspect_len)
        states = h_lstm if self.config.attention_states == "lstm" else h_gcn
        alpha, pooled = head.aspect_attention(states, h_mask)
        res_out = head.fuse(pooled, z_out, self.fusion)
        prediction = head.classify(res_out, self.classifier)
        return ForwardPass(embedded=embedded, h_lstm=h_lstm, z_out=z_out,
                           adjacency=adjacency, degrees=degrees, h_gcn=h_gcn,
                           h_mask=h_mask, alpha=alpha, pooled=pooled,
                           res_out=res_out, prediction=prediction)

    def predict(self, sample: AspectSample) -> Prediction:
        return self.forward(sample).prediction

    def cross_entropy(self, sample: AspectSample) -> Tensor:
        """Per-sample negative log likelihood (no parameter penalty)."""
        return head.nll(self.forward(sample).prediction.prob_tensor, sample.label)


# ---------------------------------------------------------------------------
# gradient-check suite

def _op_checks(rng: np.random.Generator) -> list[tuple[str, callable, list[np.ndarray]]]:
    def arr(*shape):
        return rng.normal(size=shape)

    w = ad.Tensor(arr(3, 2))
    return [
        ("matmul", lambda a, b: ad.reduce_sum(ad.mul(ad.matmul(a, b), w)),
         [arr(3, 4), arr(4, 2)]),
        ("add", lambda a, b: ad.reduce_sum(ad.exp(ad.add(a, b))), [arr(3, 4), arr(4)]),
        ("mul", lambda a, b: ad.reduce_sum(ad.mul(a, b)), [arr(4, 4), arr(4, 4)]),
        ("concat", lambda a, b: ad.reduce_sum(ad.tanh(ad.concat([a, b], axis=1))),
         [arr(3, 2), arr(3, 3)]),
        ("slice", lambda a: ad.reduce_sum(ad.sigmoid(ad.slice_axis(a, 1, 1, 3))),
         [arr(4, 5)]),
        ("transpose", lambda a: ad.reduce_sum(ad.tanh(ad.transpose(a))), [arr(3, 5)]),
        ("tanh", lambda a: ad.reduce_sum(ad.tanh(a)), [arr(4, 4)]),
        ("sigmoid", lambda a: ad.reduce_sum(ad.sigmoid(a)), [arr(4, 4)]),
        ("relu", lambda a: ad.reduce_sum(ad.relu(a)), [arr(5, 5)]),
        ("exp", lambda a: ad.reduce_sum(ad.exp(a)), [arr(3, 3)]),
        ("log", lambda a: ad.reduce_sum(ad.log(a)), [np.abs(arr(3, 3)) + 0.5]),
        ("scale", lambda a: ad.reduce_sum(ad.scale(a, -1.7)), [arr(6)]),
        ("clamp_min", lambda a: ad.reduce_sum(ad.clamp_min(a, 0.1)), [np.abs(arr(4)) + 0.5]),
        ("softmax", lambda a: ad.reduce_sum(ad.mul(ad.softmax(a, axis=1), w)), [arr(3, 2)]),
        ("reduce_sum", lambda a: ad.reduce_sum(ad.tanh(ad.reduce_sum(a, axis=0))), [arr(4, 3)]),
        ("reduce_mean", lambda a: ad.reduce_sum(ad.exp(ad.reduce_mean(a, axis=1))), [arr(4, 3)]),
        ("layer_norm", lambda a, g, b: ad.reduce_sum(ad.tanh(ad.layer_norm(a, g, b))),
         [arr(4, 6), arr(6), arr(6)]),
        ("gather_rows",
         lambda t: ad.reduce_sum(ad.tanh(ad.gather_rows(t, np.array([0, 2, 2, 1])))),
         [arr(4, 3)]),
    ]


def gradient_check_suite(seed: int = 7, eps: float = 1e-5,
                         d: int = 8, n_tokens: int = 5,
                         heads: int = 2) -> list[tuple[str, FiniteDiffReport]]:
    """Finite-difference validation of every primitive and the composed model.

    The composed check runs the full forward-to-loss pass on a random sample
    at reduced width (one graph layer) and differentiates with respect to
    every trainable parameter.
    """
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, arrays in _op_checks(rng):
        inputs = [ad.Tensor(a, requires_grad=True) for a in arrays]
        results.append((name, ad.finite_diff_check(fn, inputs, eps=eps)))

    samples = [random_tree_sample(rng, n=n_tokens) for _ in range(4)]
    sample = samples[0]
    vocab = build_vocab(samples)
    sdi = collect_sdi_stats(samples)
    config = TrainConfig(d_w=d, d_h=d, gcn_layers=1, heads=heads, ffn_width=2 * d,
                         seed=seed, lambda_l2=1e-4)
    model = AspectSentimentModel(config, vocab, sdi=sdi)

    def loss(*_params):
        prediction = model.forward(sample).prediction
        return head.compute_loss(prediction.prob_tensor, sample.label,
                                 model.parameters, config.lambda_l2)

    results.append(("composed_model",
                    ad.finite_diff_check(loss, model.parameters.tensors(), eps=eps)))
    return results
