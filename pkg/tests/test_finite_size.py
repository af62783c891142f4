"""Finite-N oracles: the pipelines reproduce the exact finite-size predictions.

These separate implementation error from the slow convergence of maxima.
"""

import math

import numpy as np

from rrgff import extremes as ex
from rrgff import graphgen as gg
from rrgff import green as gr
from rrgff.config import ExperimentConfig
from rrgff.pipeline import run
from rrgff.seeding import STAGE_GRAPH, stage_seed, sub_seed


def test_graph_good_vertex_count_matches_marginal_prediction():
    # E #{x good : Z_x/sigma_r > a_N} = sum_x P(N(0, G(x,x)) > a_N sigma_r)
    cfg = ExperimentConfig(mode="graph", n=1024, replicas=1000, master_seed=77)
    rep = run(cfg)
    g = gg.generate_simple(cfg.n, cfg.r, stage_seed(cfg.master_seed, STAGE_GRAPH))
    G = gr.zero_average_green(g)
    good = gg.vertex_census(g, cfg.census_radius()).good_flags
    c = ex.rescaling_constants(cfg.n, cfg.r)
    pred = float(np.sum(ex.gaussian_tail(c.a_n * c.sigma_r / np.sqrt(np.diag(G.matrix)[good]))))
    t = next(t for t in rep.sections["extremes_good"]["intervals"] if t["interval"] == [0.0, math.inf])
    se = math.sqrt(t["variance"] / cfg.replicas)
    assert abs(t["mean_count"] - pred) < 4 * se


def test_tree_count_matches_marginal_prediction():
    cfg = ExperimentConfig(mode="tree", n=4096, replicas=2000, master_seed=5)
    rep = run(cfg)
    c = ex.rescaling_constants(cfg.n, cfg.r)
    pred = cfg.n * float(ex.gaussian_tail(c.a_n))
    t = next(t for t in rep.sections["extremes"]["intervals"] if t["interval"] == [0.0, math.inf])
    assert abs(t["mean_count"] - pred) < 4 * math.sqrt(t["variance"] / cfg.replicas)


def test_census_exploration_consistency_many_graphs():
    # 10^3 graphs, N=100, r=3, ell=2, every root
    T2, T3 = gg.tree_edges_to_depth(3, 2), gg.tree_edges_to_depth(3, 3)
    for i in range(1000):
        g = gg.generate_simple(100, 3, sub_seed(2024, i))
        good = gg.vertex_census(g, 2).good_flags
        d = gg.draw_from_graph(g)
        for x in range(100):
            tau = gg.collision_time(d, x, ell_max=2).tau
            assert not good[x] or tau > T2
            assert not tau > T3 or good[x]
