import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrgff import gff
from rrgff import graphgen as gg
from rrgff import green as gr
from rrgff.errors import DegenerateOperator, InvalidParameters
from rrgff.seeding import stream


@settings(max_examples=40)
@given(r=st.integers(3, 6), n=st.integers(1, 400))
def test_subtree_is_bfs_prefix(r, n):
    t = gff.build_subtree(r, n)
    kids = np.bincount(t.parent[1:], minlength=n)
    assert kids[0] == min(r, n - 1)
    # every non-root vertex has at most r - 1 children, filled in BFS order
    assert np.all(kids[1:] <= r - 1)
    assert np.all(np.diff(t.depth) >= 0)
    assert np.all(t.parent[1:] < np.arange(1, n))
    assert sum(s.stop - s.start for s in t.level_slices()) == n


def test_tree_covariance_small():
    t = gff.build_subtree(3, 15)
    X = gff.sample_tree_gff_batch(t, 7, range(40_000))
    C = np.cov(X, rowvar=False)
    assert np.abs(C - gff.tree_covariance(t)).max() < 0.06


def test_batch_matches_single():
    t = gff.build_subtree(4, 50)
    X = gff.sample_tree_gff_batch(t, 11, [3, 8])
    one = gff.sample_tree_gff(t, stream(11, 8), 8)
    assert np.array_equal(X[1], one.values)
    assert one.field_kind == "tree-gff" and one.rng_stream_id == 8


def test_graph_factor_and_sample():
    g = gg.generate_simple(30, 3, 2)
    G = gr.zero_average_green(g)
    f = gff.factor_green(G)
    B = f.matrix()
    assert np.abs(B @ B.T - G.matrix).max() < 1e-10
    X = gff.sample_graph_gff_batch(f, 5, range(10))
    assert np.abs(X.sum(axis=1)).max() < 1e-10
    one = gff.sample_graph_gff(f, stream(5, 4))
    assert np.allclose(one.values, X[4], atol=1e-12)


def test_degenerate_factor(k4):
    G = gr.zero_average_green(k4)
    bad = gr.GreenOperator(4, np.zeros((4, 4)), "test")
    with pytest.raises(DegenerateOperator):
        gff.factor_green(bad)
    neg = gr.GreenOperator(4, G.matrix - 0.1 * np.eye(4), "test")
    with pytest.raises(DegenerateOperator):
        gff.factor_green(neg)


def test_iid():
    X = gff.sample_iid_batch(20, 1, range(3))
    assert np.array_equal(X[2], gff.sample_iid_field(20, stream(1, 2)).values)


def test_build_subtree_rejects():
    with pytest.raises(InvalidParameters):
        gff.build_subtree(2, 10)
    with pytest.raises(InvalidParameters):
        gff.build_subtree(3, 0)
