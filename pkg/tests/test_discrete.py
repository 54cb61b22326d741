from itertools import product

import numpy as np
import pytest

from slelab import discrete as d
from slelab.streams import replica_rng


@pytest.mark.parametrize("q,kappa", [(1, 6.0), (2, 16 / 3), (3, 24 / 5)])
def test_fk_kappa(q, kappa):
    assert d.fk_kappa(q) == pytest.approx(kappa, rel=1e-14)


@pytest.mark.parametrize("q", [0, 4, -1, 5])
def test_fk_kappa_domain(q):
    with pytest.raises(ValueError):
        d.fk_kappa(q)


@pytest.mark.parametrize("n", [2, 3])
def test_exploration_agrees_with_cluster_search(n):
    dom = d.TriangularLatticeDomain(n)
    sites = dom.interior
    for bits in product((d.CLOSED, d.OPEN), repeat=len(sites)):
        colors = dict(zip(sites, bits))
        i, _ = d.exploration_path(dom, colors=colors)
        assert i == d._hit_by_clusters(dom, colors)


def _adjacent(a, b):
    return any(a[0] + di == b[0] and a[1] + dj == b[1] for di, dj in zip(d._DI, d._DJ))


def test_exploration_path_structure():
    dom = d.TriangularLatticeDomain(24)
    for seed in range(10):
        _, path = d.exploration_path(dom, seed)
        edges = [tuple(row) for row in path]
        # each hexagon edge is crossed once, so the path never retraces itself
        assert len(set(edges)) == len(edges)
        for li, lj, ri, rj in edges:
            assert _adjacent((li, lj), (ri, rj))
        for (a, b) in zip(edges, edges[1:]):
            assert a[:2] == b[:2] or a[2:] == b[2:]


def test_exploration_respects_colors():
    dom = d.TriangularLatticeDomain(5)
    rng = np.random.default_rng(4)
    colors = {s: int(rng.integers(2)) for s in dom.interior}
    _, path = d.exploration_path(dom, colors=colors)
    full = dom.fresh_colors()
    for (i, j), c in colors.items():
        full[i + 1, j + 1] = c
    for li, lj, ri, rj in path:
        assert full[li + 1, lj + 1] == d.OPEN and full[ri + 1, rj + 1] == d.CLOSED


def test_micro_domain_law_is_a_distribution():
    p = d.exhaustive_hit_distribution(d.TriangularLatticeDomain(4))
    assert p.sum() == pytest.approx(1)
    # reflecting the domain and swapping colors maps the hit law onto itself
    assert p == pytest.approx(p[::-1], abs=1e-15)


def test_hit_fraction_symmetric_about_midpoint():
    dom = d.TriangularLatticeDomain(16)
    hits = np.array([d.percolation_exploration(dom, replica_rng(2, r)) for r in range(4000)])
    below = (hits < 0.5).mean()
    assert abs(below - 0.5) <= 2.576 * 0.5 / np.sqrt(len(hits))


def test_exploration_is_deterministic():
    dom = d.TriangularLatticeDomain(32)
    assert d.percolation_exploration(dom, 9) == d.percolation_exploration(dom, 9)


def test_wilson_trees_span_and_are_acyclic():
    g, _ = d.GridGraph(5, 2).primal()
    for seed in range(20):
        assert d.is_spanning_tree(g, d.wilson_ust(g, seed))


def test_wilson_is_deterministic():
    g = d.grid_graph(4, 3)
    assert d.wilson_ust(g, 5).edges() == d.wilson_ust(g, 5).edges()


def test_matrix_tree_count_on_small_grid():
    g = d.grid_graph(2, 2)
    assert d.matrix_tree_count(g) == len(d.enumerate_spanning_trees(g)) == 192


def test_wilson_uniform_on_small_grid():
    chi, n_trees, det = d.wilson_uniformity(seed=3, N=20_000, nx=1, ny=2)
    assert n_trees == det == 15
    assert chi.p_value > 0.01


@pytest.mark.parametrize("n", [7, 9])
def test_oracle_half_at_symmetric_point(n):
    # with a reflecting top only the two sides absorb, and they are mirror images
    assert d.harmonic_oracle(n, 4, 0.5 + 1j, top_absorbing=False) == pytest.approx(0.5, abs=1e-12)
    pair = d.harmonic_oracle(n, 4, 0.3 + 1j, top_absorbing=False) + \
        d.harmonic_oracle(n, 4, 0.7 + 1j, top_absorbing=False)
    assert pair == pytest.approx(1.0, abs=1e-12)


def test_oracle_trends_to_real_part():
    for w in (0.25 + 0.5j, 0.75 + 0.25j):
        err = [abs(d.harmonic_oracle(n, 4, w) - w.real) for n in (8, 16, 32, 64)]
        assert all(a > b for a, b in zip(err, err[1:]))


def test_lerw_matches_oracle_on_small_grid():
    w = 0.25 + 0.5j
    est = d.lerw_right_prob(6, 4, w, seed=1, N=4000)
    assert est.covers(d.harmonic_oracle(6, 4, w))


def test_lemma_primal_matches_dual():
    r = d.ust_lemma_experiment(32, 4, 0.25 + 0.5j, seed=1, N=1000)
    joint = np.hypot(r.primal.half_width, r.dual.half_width)
    assert abs(r.primal.estimate - r.dual.estimate) <= joint


def test_lemma_near_half_at_symmetric_point():
    r = d.ust_lemma_experiment(33, 4, 0.5 + 0.5j, seed=2, N=1000)
    assert abs(r.primal.estimate - 0.5) <= r.primal.half_width


def test_lemma_rejects_boundary_point():
    with pytest.raises(ValueError):
        d.ust_lemma_experiment(8, 4, 0.0 + 0.5j, seed=1, N=1)


def test_tiling_is_perfect_matching():
    for corner in ("LEFT", "RIGHT"):
        t = d.temperley_domino_sample(3, 2, corner, 11)
        m = t.match
        covered = np.flatnonzero(m >= 0)
        assert np.array_equal(m[m[covered]], covered)
        assert set(np.flatnonzero(m < 0)) == {t.removed}
        for a in covered:
            b = m[a]
            assert abs(a % t.width - b % t.width) + abs(a // t.width - b // t.width) == 1


def test_tiling_sampler_rejects_bad_input():
    with pytest.raises(ValueError):
        d.temperley_domino_sample(0, 1, "LEFT", 1)
    with pytest.raises(ValueError):
        d.temperley_domino_sample(2, 1, "TOP", 1)


def test_three_by_three_minus_corner():
    assert len(d.enumerate_tilings(3, 3, 0)) == 4
    chi, n = d.tiling_uniformity(seed=5, N=4000)
    assert n == 4 and chi.p_value > 0.01


def test_tiling_is_deterministic():
    a = d.temperley_domino_sample(4, 1, "LEFT", 8)
    assert a.dominoes() == d.temperley_domino_sample(4, 1, "LEFT", 8).dominoes()


def test_height_independent_of_integration_order():
    t = d.temperley_domino_sample(3, 2, "RIGHT", 6)
    h0 = d.height_function(t)
    for order in range(1, 4):
        assert np.array_equal(d.height_function(t, order), h0)


def test_height_difference_boundary_values():
    for seed in range(5):
        t1, _, h = d.double_domino_sample(3, 2, seed)
        W, H = t1.width, t1.height
        # the two bottom corners touch a removed square and carry no value
        assert np.all(h[1:W, 0] == 0)
        assert np.all(h[0, 1:] == 4) and np.all(h[W, 1:] == 4) and np.all(h[:, H] == 4)


def test_superposition_is_a_corner_path():
    t1, t2, _ = d.double_domino_sample(3, 2, 4)
    path = d.superposition_path(t1, t2)
    assert path[0] == t1.removed and path[-1] == t2.removed
    assert len(set(path)) == len(path)
    # off the path every square is covered by both tilings, so has degree two
    on_path = set(path)
    for s in range(t1.width * t1.height):
        if s not in on_path:
            assert t1.match[s] >= 0 and t2.match[s] >= 0


def test_height_identity_in_law():
    r = d.domino_height_experiment(3, 1, (3, 3), seed=7, N=800)
    assert r.gap.covers(0.0)
    assert r.target == pytest.approx(3 / 7)


def test_height_experiment_rejects_boundary_point():
    with pytest.raises(ValueError):
        d.domino_height_experiment(3, 1, (0, 3), seed=1, N=1)


def test_lattice_config_rejects_other_q():
    with pytest.raises(ValueError, match="q = 1"):
        d.LatticeConfig(kind="perc", mesh=8, n_replicas=10, q=2)
