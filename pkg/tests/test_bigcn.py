import numpy as np
import pytest

from sentigraph import autodiff as ad
from sentigraph import bigcn
from sentigraph.autodiff import ParameterStore, Tensor
from sentigraph.bigcn import (
    bigcn_layer,
    bigcn_stack,
    init_gcn_layer,
    init_gcn_stack,
    reset_transpose_path_count,
    transpose_path_count,
)
from sentigraph.corpus import AspectSample
from sentigraph.syntax import build_binary_adjacency, out_degrees


def chain_sample(n):
    deps = [(-1, 0, "root")] + [(i - 1, i, "dep") for i in range(1, n)]
    return AspectSample(tokens=tuple(f"w{i}" for i in range(n)), aspect_start=0,
                        aspect_len=1, label="neutral", deps=tuple(deps))


def dense_oracle(h0, adj, deg, p):
    """Straight numpy transcription of one layer, independent of the autodiff path."""
    fwd = adj @ (h0 @ p.w_fwd.data)
    if p.w_bwd is not None:
        bwd = adj.T @ (h0 @ p.w_bwd.data)
        cat = np.concatenate([fwd, bwd], axis=1)
    else:
        cat = fwd
    normed = cat / (deg + 1.0)[:, None]
    return np.maximum(normed @ p.w_out.data + p.b_out.data, 0.0)


def layer(d_in=4, d_out=4, seed=0, bidirectional=True):
    store = ParameterStore()
    p = init_gcn_layer(store, "gcn", d_in, d_out, np.random.default_rng(seed),
                       bidirectional=bidirectional)
    return p, store


class TestBigcnLayer:
    def test_single_node_closed_form(self, rng):
        p, _ = layer()
        h = rng.normal(size=(1, 4))
        out = bigcn_layer(Tensor(h), Tensor(np.eye(1)), np.zeros(1), p).data
        cat = np.concatenate([h @ p.w_fwd.data, h @ p.w_bwd.data], axis=1)
        expected = np.maximum(cat @ p.w_out.data + p.b_out.data, 0.0)
        assert np.allclose(out, expected, atol=1e-12)

    def test_all_zero_parameters_give_zero_output(self, rng):
        p, store = layer()
        for t in store.tensors():
            t.data[:] = 0.0
        adj = build_binary_adjacency(chain_sample(3))
        out = bigcn_layer(Tensor(rng.normal(size=(3, 4))), Tensor(adj),
                          out_degrees(adj), p)
        assert np.array_equal(out.data, np.zeros((3, 4)))

    def test_three_node_chain_matches_dense_oracle(self, rng):
        p, _ = layer(seed=2)
        adj = build_binary_adjacency(chain_sample(3))
        deg = out_degrees(adj)
        h0 = rng.normal(size=(3, 4))
        out = bigcn_layer(Tensor(h0), Tensor(adj), deg, p).data
        assert np.allclose(out, dense_oracle(h0, adj, deg, p), atol=1e-12)

    def test_unidirectional_variant_matches_oracle(self, rng):
        p, _ = layer(seed=3, bidirectional=False)
        adj = build_binary_adjacency(chain_sample(4))
        deg = out_degrees(adj)
        h0 = rng.normal(size=(4, 4))
        out = bigcn_layer(Tensor(h0), Tensor(adj), deg, p).data
        assert np.allclose(out, dense_oracle(h0, adj, deg, p), atol=1e-12)

    def test_zero_inputs_yield_relu_bias_everywhere(self, rng):
        p, _ = layer(seed=4)
        p.b_out.data[:] = rng.normal(size=4)
        adj = build_binary_adjacency(chain_sample(5))
        out = bigcn_layer(Tensor(np.zeros((5, 4))), Tensor(adj), out_degrees(adj), p)
        expected_row = np.maximum(p.b_out.data, 0.0)
        assert np.array_equal(out.data, np.tile(expected_row, (5, 1)))

    def test_shape_mismatch_rejected(self, rng):
        p, _ = layer()
        with pytest.raises(ad.ShapeError, match="bigcn_layer"):
            bigcn_layer(Tensor(rng.normal(size=(3, 4))), Tensor(np.eye(2)),
                        np.zeros(2), p)
        with pytest.raises(ad.ShapeError, match="width"):
            bigcn_layer(Tensor(rng.normal(size=(2, 5))), Tensor(np.eye(2)),
                        np.zeros(2), p)


class TestTransposePathCounter:
    def test_counts_bidirectional_evaluations_only(self, rng):
        adj = build_binary_adjacency(chain_sample(3))
        deg = out_degrees(adj)
        h = Tensor(rng.normal(size=(3, 4)))

        reset_transpose_path_count()
        p_uni, _ = layer(bidirectional=False)
        bigcn_layer(h, Tensor(adj), deg, p_uni)
        assert transpose_path_count() == 0

        p_bi, _ = layer()
        bigcn_layer(h, Tensor(adj), deg, p_bi)
        assert transpose_path_count() == 1


class TestBigcnStack:
    def stack(self, n_layers, d=4, seed=5, bidirectional=True):
        store = ParameterStore()
        layers = init_gcn_stack(store, "gcn", d, d, n_layers,
                                np.random.default_rng(seed), bidirectional=bidirectional)
        return layers, store

    def test_single_layer_stack_equals_layer(self, rng):
        layers, _ = self.stack(1)
        adj = build_binary_adjacency(chain_sample(3))
        deg = out_degrees(adj)
        h0 = rng.normal(size=(3, 4))
        assert np.array_equal(
            bigcn_stack(Tensor(h0), Tensor(adj), deg, layers).data,
            bigcn_layer(Tensor(h0), Tensor(adj), deg, layers[0]).data)

    def test_three_layer_output_shape_and_finiteness(self, rng):
        layers, _ = self.stack(3)
        adj = build_binary_adjacency(chain_sample(5))
        out = bigcn_stack(Tensor(rng.normal(size=(5, 4))), Tensor(adj),
                          out_degrees(adj), layers)
        assert out.shape == (5, 4)
        assert np.all(np.isfinite(out.data))

    def test_empty_stack_rejected(self, rng):
        with pytest.raises(ValueError, match="at least one"):
            bigcn_stack(Tensor(rng.normal(size=(2, 4))), Tensor(np.eye(2)),
                        np.zeros(2), [])

    def test_gradient_check_through_two_layers(self):
        layers, store = self.stack(2, d=3, seed=6)
        adj = build_binary_adjacency(chain_sample(4))
        deg = out_degrees(adj)
        h0 = Tensor(np.random.default_rng(9).normal(size=(4, 3)), requires_grad=True)

        def loss(*_inputs):
            return ad.reduce_sum(bigcn_stack(h0, Tensor(adj), deg, layers))

        report = ad.finite_diff_check(loss, [h0] + store.tensors(), eps=1e-5)
        assert report.max_rel_error < 1e-4

    def test_locality_radius_bounded_by_depth(self, rng):
        # on a path graph, nodes farther than the layer count stay bitwise unchanged
        n = 6
        adj = build_binary_adjacency(chain_sample(n))
        deg = out_degrees(adj)
        for n_layers in (1, 2):
            layers, _ = self.stack(n_layers, seed=7)
            h0 = rng.normal(size=(n, 4))
            base = bigcn_stack(Tensor(h0), Tensor(adj), deg, layers).data
            bumped = h0.copy()
            bumped[n - 1] += 0.5
            after = bigcn_stack(Tensor(bumped), Tensor(adj), deg, layers).data
            for i in range(n):
                if (n - 1) - i > n_layers:
                    assert np.array_equal(base[i], after[i]), (n_layers, i)

    def test_identity_adjacency_isolates_nodes(self, rng):
        layers, _ = self.stack(2, seed=8)
        n = 4
        adj = np.eye(n)
        h0 = rng.normal(size=(n, 4))
        base = bigcn_stack(Tensor(h0), Tensor(adj), np.zeros(n), layers).data
        bumped = h0.copy()
        bumped[1] += 1.0
        after = bigcn_stack(Tensor(bumped), Tensor(adj), np.zeros(n), layers).data
        for i in range(n):
            if i != 1:
                assert np.array_equal(base[i], after[i])
        assert not np.array_equal(base[1], after[1])
