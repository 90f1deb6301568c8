import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iiclab import _kernels as K
from iiclab.backbone import deep_backbone_union
from iiclab.covering import CoveringSystem
from iiclab.lattice import BoxRegion, iic_approximant, open_cluster, sample_bond_config
from iiclab.metrics import chemical_distances, constant_weight, indicator_weight
from iiclab.seeding import derive_seed
from iiclab.walk import (
    ReversibilityError,
    WalkConfig,
    _first_passage,
    cluster_walk_stats,
    displacement_ensemble,
    fit_escape_exponents,
    hitting_times,
    markov_type_ratio,
    negative_correlation_exact,
    random_conductance_chain,
    random_tree_chain,
    simulate_walk,
    transition_matrix,
)

from conftest import sample_from_edges


def test_two_vertex_alternation():
    cl = open_cluster(sample_from_edges(2, [((0, 0), (1, 0))]), (0, 0))
    tr = simulate_walk(cl, (0, 0), 9, seed=4)
    assert tr.vertices() == [(0, 0), (1, 0)] * 5


def test_zero_steps():
    cl = iic_approximant(8, "conditioned", 0)
    tr = simulate_walk(cl, cl.root, 0, seed=1)
    assert tr.T == 0 and list(tr.path) == [cl.root]
    assert tr.chem[0] == 0 and tr.euc2[0] == 0
    assert np.all(hitting_times(tr, [0])[0] == 0)


def test_two_step_return_probability():
    # centre of degree 3, every neighbour of degree 2
    edges = [((0, 0), (1, 0)), ((1, 0), (2, 0)), ((0, 0), (-1, 0)), ((-1, 0), (-2, 0)), ((0, 0), (0, 1)), ((0, 1), (0, 2))]
    cl = open_cluster(sample_from_edges(3, edges), (0, 0))
    chem = chemical_distances(cl, cl.root)
    N = 10**5
    back = sum(simulate_walk(cl, cl.root, 2, derive_seed(1, ["ret", i]), chem=chem).path[2] == cl.root for i in range(N))
    assert abs(back / N - 0.5) < 3 * np.sqrt(0.25 / N)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 400), st.booleans())
def test_trace_invariants(seed, T, lazy):
    cl = iic_approximant(16, "conditioned", seed % 500)
    tr = simulate_walk(cl, cl.root, T, seed, lazy=lazy)
    again = simulate_walk(cl, cl.root, T, seed, lazy=lazy)
    assert np.array_equal(tr.path, again.path)
    adj = cl.adjacency()
    vs = tr.vertices()
    for a, b in zip(vs, vs[1:]):
        assert b in adj[a] or (lazy and a == b)
    assert np.all(tr.chem <= np.arange(T + 1))
    radii = np.arange(0, 12)
    tau = tr.hitting_times(radii)
    M = tr.running_max()
    assert np.all(tau[1:] >= tau[:-1])
    for R, t in zip(radii, tau):
        for n in (0, T // 3, T):
            assert (M[n] >= R) == (t <= n)


def test_walk_until_matches_trace():
    cl = iic_approximant(32, "conditioned", 3)
    chem = chemical_distances(cl, cl.root)
    u = np.random.default_rng(0).random(5000)
    ch, eu = K.walk_until(cl.indptr, cl.indices, cl.root, chem, cl.xs, cl.ys, 16, 256, u, 5000)
    path = K.walk_path(cl.indptr, cl.indices, cl.root, u, False)
    d = cl.coords[path] - cl.coords[cl.root]
    Rs = np.array([2, 4, 8, 16.0])
    assert np.array_equal(_first_passage(ch, Rs, False), _first_passage(chem[path], Rs, False))
    assert np.array_equal(_first_passage(eu, Rs, True), _first_passage((d**2).sum(axis=1), Rs, True))


def test_ensemble_small_T_and_monotone():
    cfg = WalkConfig(n=32, T_grid=(1, 2, 4, 8, 16, 32, 64), R_grid=(1, 2, 3, 4, 6, 8), R_grid_euc=(1, 2, 3, 4, 6, 8), clusters=6, walks=3, hit_walks=2, hit_budget=4096, seed=2)
    ens = displacement_ensemble(cfg)
    m = ens.mean("max_chem")
    assert m[0] <= 1
    assert np.all(np.diff(ens.rows["max_chem"], axis=1)[ens.rows["count"][:, 1:] > 0] >= 0)
    rows = list(ens.summary_rows())
    assert [r["T"] for r in rows] == list(cfg.T_grid)
    fits = fit_escape_exponents(ens, bootstrap=50)
    assert {"beta_star", "beta", "dw", "dw_euc", "ordering"} <= set(fits)


def test_cluster_stats_deterministic():
    cfg = WalkConfig(n=16, T_grid=(4, 8, 16, 32), R_grid=(2, 4), R_grid_euc=(2, 4), clusters=2, walks=2, hit_walks=1, hit_budget=512)
    a, b = cluster_walk_stats(cfg, 1), cluster_walk_stats(cfg, 1)
    for k in a:
        assert np.array_equal(np.asarray(a[k]), np.asarray(b[k]))


def test_grids_must_increase():
    with pytest.raises(ValueError):
        WalkConfig(T_grid=(8, 4))


@pytest.mark.parametrize("seed", range(3))
def test_exact_stationarity_and_reversibility(seed):
    cl = iic_approximant(8, "conditioned", seed)
    assert len(cl) <= 500
    for lazy in (False, True):
        P, pi = transition_matrix(cl, lazy)
        assert np.allclose(pi @ P, pi, rtol=1e-12, atol=0)
        flux = pi[:, None] * P
        assert np.allclose(flux, flux.T, rtol=1e-12, atol=0)


def test_two_state_hand_value():
    a = 0.3
    P = np.array([[1 - a, a], [a, 1 - a]])
    r = negative_correlation_exact(P, [0.5, 0.5], [0.0, 1.0], 2)
    assert r.value == pytest.approx(a**2, abs=1e-15)  # 0.09
    assert r.psd and r.covariance == pytest.approx(-r.value, abs=1e-15)


def test_t_equal_one_gives_zero():
    rng = np.random.default_rng(0)
    P, pi = random_tree_chain(12, rng)
    r = negative_correlation_exact(P, pi, rng.normal(size=12), 1)
    assert r.value == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 60), st.integers(2, 10), st.booleans())
def test_quadratic_form_nonnegative(seed, n, t, tree):
    rng = np.random.default_rng(seed)
    P, pi = random_tree_chain(n, rng) if tree else random_conductance_chain(n, rng)
    x = rng.normal(size=n)
    r = negative_correlation_exact(P, pi, x, t)
    assert r.value >= -1e-9 and r.psd
    assert r.covariance == pytest.approx(-r.value, abs=1e-9 * max(1.0, abs(r.value)))


def test_irreversible_chain_rejected():
    P = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0.0]])
    with pytest.raises(ReversibilityError):
        negative_correlation_exact(P, np.ones(3) / 3, np.arange(3.0), 2)


def test_markov_type_full_box():
    cl = open_cluster(sample_bond_config(BoxRegion(24), 1.0, 0), (0, 0))
    r = markov_type_ratio(cl, constant_weight(cl), [1, 2, 4, 8, 16, 32], 400, seed=3)
    assert abs(r["ratio"][0] - 1) < 3 * r["se"][0] + 1e-12
    assert np.all(r["ratio"] <= 4)


def test_markov_type_t1_on_iic_scale_weight():
    cl = iic_approximant(64, "conditioned", 7)
    system = CoveringSystem.random(4, 7)
    u, _ = deep_backbone_union(cl, system, 4)
    if not u.any():
        pytest.skip("no deep patch on this sample")
    om = indicator_weight(cl, u, 0.5)
    r = markov_type_ratio(cl, om, [1, 2, 4, 8, 16], 2000, seed=1)
    assert abs(r["ratio"][0] - 1) < 3 * r["se"][0]
    assert np.all(r["ratio"] <= 4)


def test_degenerate_weight_reported():
    cl = iic_approximant(8, "conditioned", 0)
    r = markov_type_ratio(cl, np.zeros(len(cl)), [1, 2], 10, 0)
    assert r["degenerate"] and np.all(np.isnan(r["ratio"]))
