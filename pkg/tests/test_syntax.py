import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentigraph.corpus import AspectSample
from sentigraph.syntax import (
    SdiTable,
    adjacency_pair,
    build_binary_adjacency,
    build_sdi_adjacency,
    collect_sdi_stats,
    out_degrees,
)

from conftest import random_tree_sample


def sample_with(deps, n=None):
    n = n if n is not None else max(max(h, d) for h, d, _ in deps) + 1
    return AspectSample(tokens=tuple(f"w{i}" for i in range(n)), aspect_start=0,
                        aspect_len=1, label="neutral", deps=tuple(deps))


TOY = [
    sample_with([(-1, 0, "root"), (0, 1, "nsubj"), (0, 2, "dobj")]),
    sample_with([(-1, 0, "root"), (0, 1, "nsubj"), (1, 2, "amod")]),
]


class TestCollectSdiStats:
    def test_hand_counted_ratios(self):
        # 4 non-root edges: nsubj, dobj, nsubj, amod
        table = collect_sdi_stats(TOY)
        assert table.total_edges == 4
        assert table.ratios == {"nsubj": 0.5, "dobj": 0.25, "amod": 0.25}

    def test_single_label_corpus(self):
        table = collect_sdi_stats([sample_with([(-1, 0, "root"), (0, 1, "conj"), (0, 2, "conj")])])
        assert table.ratios == {"conj": 1.0}

    def test_zero_edges_rejected(self):
        single = sample_with([(-1, 0, "root")], n=1)
        with pytest.raises(ValueError, match="denominator"):
            collect_sdi_stats([single])

    def test_root_edges_excluded_by_default_counted_on_request(self):
        table = collect_sdi_stats(TOY, count_root=True)
        assert table.total_edges == 6
        assert table.ratios["root"] == pytest.approx(2 / 6)

    def test_punctuation_toggle(self):
        samples = [sample_with([(-1, 0, "root"), (0, 1, "punct"), (0, 2, "nsubj")])]
        with_punct = collect_sdi_stats(samples)
        assert with_punct.ratios["punct"] == 0.5
        without = collect_sdi_stats(samples, count_punct=False)
        assert "punct" not in without.ratios
        assert without.ratios["nsubj"] == 1.0

    def test_order_independence(self, rng):
        samples = [random_tree_sample(rng, n=6) for _ in range(30)]
        forward = collect_sdi_stats(samples)
        backward = collect_sdi_stats(list(reversed(samples)))
        assert forward == backward

    @settings(max_examples=40)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_ratios_sum_to_one(self, seed):
        gen = np.random.default_rng(seed)
        samples = [random_tree_sample(gen, n=int(gen.integers(2, 9))) for _ in range(5)]
        table = collect_sdi_stats(samples)
        assert sum(table.ratios.values()) == pytest.approx(1.0, abs=1e-12)
        assert all(r > 0 for r in table.ratios.values())

    def test_save_load_roundtrip_exact(self, tmp_path):
        table = collect_sdi_stats(TOY)
        table.save(tmp_path / "sdi.txt")
        loaded = SdiTable.load(tmp_path / "sdi.txt")
        assert loaded.total_edges == table.total_edges
        assert dict(loaded.ratios) == dict(table.ratios)


class TestBinaryAdjacency:
    def test_single_token(self):
        assert build_binary_adjacency(sample_with([(-1, 0, "root")], n=1)).tolist() == [[1.0]]

    def test_three_token_chain(self):
        # edges 0->1 and 1->2: ones at the diagonal plus (0,1) and (1,2)
        chain = sample_with([(-1, 0, "root"), (0, 1, "nsubj"), (1, 2, "dobj")])
        expected = np.array([[1, 1, 0], [0, 1, 1], [0, 0, 1]], dtype=float)
        assert np.array_equal(build_binary_adjacency(chain), expected)

    @settings(max_examples=40)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_entries_are_binary(self, seed):
        sample = random_tree_sample(np.random.default_rng(seed))
        adj = build_binary_adjacency(sample)
        assert set(np.unique(adj)) <= {0.0, 1.0}
        assert np.all(np.diag(adj) == 1.0)

    def test_out_degrees_exclude_self_loop(self):
        chain = sample_with([(-1, 0, "root"), (0, 1, "nsubj"), (1, 2, "dobj")])
        assert out_degrees(build_binary_adjacency(chain)).tolist() == [1.0, 1.0, 0.0]


class TestSdiAdjacency:
    def test_single_token(self):
        table = collect_sdi_stats(TOY)
        adj = build_sdi_adjacency(sample_with([(-1, 0, "root")], n=1), table)
        assert adj.tolist() == [[1.0]]

    def test_edge_weight_is_relation_ratio(self):
        table = collect_sdi_stats(TOY)
        sample = sample_with([(-1, 0, "root"), (0, 1, "nsubj")])
        adj = build_sdi_adjacency(sample, table)
        assert adj[0, 1] == 0.5
        assert adj[1, 0] == 0.0

    def test_unseen_relation_falls_back_with_warning(self):
        table = collect_sdi_stats(TOY)
        sample = sample_with([(-1, 0, "root"), (0, 1, "xcomp")])
        with pytest.warns(UserWarning, match="xcomp"):
            adj = build_sdi_adjacency(sample, table)
        assert adj[0, 1] == table.min_ratio

    @settings(max_examples=60)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_zero_pattern_matches_binary(self, seed):
        gen = np.random.default_rng(seed)
        samples = [random_tree_sample(gen, n=int(gen.integers(2, 9))) for _ in range(4)]
        table = collect_sdi_stats(samples)
        for sample in samples:
            pair = adjacency_pair(sample, table)
            assert np.array_equal(pair.weighted != 0, pair.binary != 0)
            assert np.all(pair.weighted >= 0) and np.all(pair.weighted <= 1)
            assert np.all(np.diag(pair.weighted) == 1.0)
