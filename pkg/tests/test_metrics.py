import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iiclab import oracles
from iiclab.backbone import backbone_density, deep_backbone_union
from iiclab.covering import CoveringSystem
from iiclab.fitting import InsufficientDataError
from iiclab.seeding import derive_seed
from iiclab.lattice import BoxRegion, iic_approximant, largest_cluster, open_cluster, sample_bond_config
from iiclab.metrics import (
    MIXTURE_NORM,
    DegenerateNormalizationError,
    WeightField,
    WeightInvariantError,
    chemical_distances,
    constant_weight,
    fit_distance_lowerbound,
    hybrid_weight,
    indicator_weight,
    large_patch_union,
    mixture_weight,
    pair_distances,
    sample_pairs,
    scale_weight,
    verify_distance_lowerbound,
    weighted_distances,
)

from conftest import sample_from_edges


def small_cluster(seed, n=4, p=0.55, limit=None):
    cl = largest_cluster(sample_bond_config(BoxRegion(n), p, seed))
    if limit and len(cl) > limit:
        return None
    return cl


def path_cluster(L):
    return open_cluster(sample_from_edges(L, [((x, 0), (x + 1, 0)) for x in range(L)]), (0, 0))


def test_distance_to_self_and_path_graph():
    cl = path_cluster(6)
    d = chemical_distances(cl, (0, 0))
    assert d[cl.root] == 0
    assert sorted(d.tolist()) == list(range(7))


@pytest.mark.parametrize("seed", range(5))
def test_chemical_matches_floyd_warshall(seed):
    cl = small_cluster(seed, n=6)
    verts, D = oracles.floyd_warshall(cl.adjacency())
    idx = {v: i for i, v in enumerate(verts)}
    rng = np.random.default_rng(seed)
    for _ in range(20):
        a, b = rng.integers(len(cl), size=2)
        va, vb = (tuple(int(c) for c in cl.coords[i]) for i in (a, b))
        assert chemical_distances(cl, int(a))[b] == D[idx[va]][idx[vb]]


def test_constant_and_zero_weights():
    cl = iic_approximant(16, "conditioned", 0)
    d = chemical_distances(cl, 0)
    assert np.array_equal(weighted_distances(cl, constant_weight(cl), 0), d)
    assert np.all(weighted_distances(cl, np.zeros(len(cl)), 0) == 0)


@pytest.mark.parametrize("seed", range(15))
def test_weighted_matches_exhaustive_paths(seed):
    cl = None
    s = seed
    while cl is None:
        cl = small_cluster(s, n=3, p=0.5, limit=20)
        s += 1000
    rng = np.random.default_rng(seed)
    mask = rng.random(len(cl)) < 0.4
    om = indicator_weight(cl, mask, 0.3)
    adj = cl.adjacency()
    w = {tuple(int(c) for c in cl.coords[i]): om.weight[i] for i in range(len(cl))}
    for a in range(min(len(cl), 4)):
        d = weighted_distances(cl, om, a)
        for b in range(len(cl)):
            va, vb = (tuple(int(c) for c in cl.coords[i]) for i in (a, b))
            assert d[b] == pytest.approx(oracles.weighted_path_minimum(adj, w, va, vb), rel=1e-12, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_pseudometric_and_monotonicity(seed):
    cl = iic_approximant(8, "conditioned", seed % 1000)
    rng = np.random.default_rng(seed)
    w = rng.random(len(cl)) * (rng.random(len(cl)) < 0.5)
    w2 = w + rng.random(len(cl))
    D = np.array([weighted_distances(cl, w, i) for i in range(len(cl))]) if len(cl) <= 200 else None
    trip = rng.integers(len(cl), size=(1000, 3))
    rows = {}
    for a in set(trip.ravel().tolist()):
        rows[a] = weighted_distances(cl, w, a) if D is None else D[a]
    for x, y, z in trip:
        dxy, dyx = rows[x][y], rows[y][x]
        assert dxy >= 0
        assert dxy == pytest.approx(dyx, rel=1e-9, abs=1e-12)
        assert rows[x][z] <= dxy + rows[y][z] + 1e-9 * max(1.0, rows[x][z])
    for a in trip[:20, 0]:
        assert np.all(weighted_distances(cl, w, a) <= weighted_distances(cl, w2, a) + 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_path_counting_identity(seed):
    cl = None
    s = seed
    while cl is None:
        cl = small_cluster(s, n=3, p=0.5, limit=16)
        s += 1000
    rng = np.random.default_rng(seed)
    mask = rng.random(len(cl)) < 0.5
    p = 0.2
    om = indicator_weight(cl, mask, p)
    adj = cl.adjacency()
    marked = {tuple(int(c) for c in cl.coords[i]) for i in np.flatnonzero(mask)}
    for a in range(min(3, len(cl))):
        d = weighted_distances(cl, om, a) * np.sqrt(p)
        for b in range(len(cl)):
            va, vb = (tuple(int(c) for c in cl.coords[i]) for i in (a, b))
            N = oracles.min_marked_count(adj, marked, va, vb)
            assert N - 1 - 1e-12 <= d[b] <= N + 1e-12


def test_weight_validation():
    cl = path_cluster(3)
    with pytest.raises(WeightInvariantError):
        WeightField(cl, -np.ones(len(cl)))
    with pytest.raises(WeightInvariantError):
        weighted_distances(cl, np.full(len(cl), np.nan), 0)
    with pytest.raises(DegenerateNormalizationError):
        indicator_weight(cl, np.ones(len(cl), bool), 0.0)


def test_scale_weight_values():
    cl = iic_approximant(64, "conditioned", 2)
    system = CoveringSystem.random(4, 1)
    w = scale_weight(cl, system, 4, 1 / 3, 0.25)
    u, _ = deep_backbone_union(cl, system, 4, 1 / 3)
    assert np.array_equal(w.support, u)
    assert np.allclose(w.weight[u], 2.0)
    empty = scale_weight(cl, system, 2, 1 / 3, 0.5)  # side 4 patches are never deep at eps 1/3
    assert not empty.support.any()


def test_plugin_identity_for_second_moment():
    ens = [iic_approximant(64, "conditioned", s) for s in range(40)]
    k, eps = 4, 1 / 3
    p, se = backbone_density(ens, k, eps, seed=5)
    num = den = 0.0
    for a, cl in enumerate(ens):
        system = CoveringSystem.random(k, derive_seed(5, ["cover", a]))
        w = scale_weight(cl, system, k, eps, p)
        num += (cl.degrees * w.weight**2).sum()
        den += cl.degrees.sum()
    # pooled over the estimating ensemble the identity holds exactly
    assert num / den == pytest.approx(1.0, rel=1e-12)


def test_mixture_single_scale_and_hand_values():
    cl = path_cluster(4)  # 5 vertices
    f1 = WeightField(cl, np.array([0.0, 1.0, 2.0, 0.0, 1.0]))
    m = mixture_weight({1: f1})
    assert np.allclose(m.weight, np.sqrt(MIXTURE_NORM) * f1.weight)
    f2 = WeightField(cl, np.array([2.0, 0.0, 2.0, 4.0, 0.0]))
    m2 = mixture_weight({1: f1, 2: f2})
    # by hand: sqrt(6/pi^2 * (w1^2 + w2^2 / 4))
    hand = np.sqrt(6 / np.pi**2 * np.array([1.0, 1.0, 5.0, 4.0, 1.0]))
    assert np.allclose(m2.weight, hand)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_mixture_second_moment_bound(moments):
    cl = iic_approximant(8, "conditioned", 0)
    rng = np.random.default_rng(len(moments))
    fields = {}
    for j, m in enumerate(moments, start=1):
        w = rng.random(len(cl))
        f = WeightField(cl, w)
        fields[j] = f.scaled(np.sqrt(m / f.second_moment()) if f.second_moment() > 0 else 0.0)
    assert mixture_weight(fields).second_moment() <= 1 + 1e-12


def test_hybrid_properties():
    cl = iic_approximant(64, "conditioned", 3)
    system = CoveringSystem.random(5, 4)
    k, eps, p, q = 4, 1 / 3, 0.2, 0.1
    h = hybrid_weight(cl, system, k, eps, p, q, c4=1.0, dprime=1.9)
    u, _ = deep_backbone_union(cl, system, k, eps)
    large = large_patch_union(cl, system, k, 1.0, 1.9)
    assert np.array_equal(h.support, u | large)
    w, w1 = u / np.sqrt(p), large / np.sqrt(q)
    assert np.allclose(h.weight, np.sqrt((w**2 + w1**2) / 2))
    covered = u | large
    assert np.all((w + w1)[covered] >= min(p**-0.5, q**-0.5) - 1e-12)
    none = hybrid_weight(cl, system, 2, 0.5, p, q, c4=1e9, dprime=1.5)
    assert not none.support.any()
    with pytest.raises(ValueError):
        hybrid_weight(cl, system, k, eps, p, q, c4=1.0, dprime=2.0)


def test_distance_fit_trivial_weights():
    cl = iic_approximant(64, "conditioned", 5)
    rng = np.random.default_rng(0)
    pairs = sample_pairs(cl, rng.choice(len(cl), 6, replace=False), 10, rng)
    one = verify_distance_lowerbound(cl, constant_weight(cl), pairs, bootstrap=100)
    assert one.slope == pytest.approx(1.0, abs=1e-12)
    assert one.violation_fraction == 0
    two = verify_distance_lowerbound(cl, constant_weight(cl, 2.0), pairs, bootstrap=100)
    assert two.slope == pytest.approx(one.slope, abs=1e-12)
    assert two.intercept - one.intercept == pytest.approx(np.log(2), abs=1e-12)


def test_pair_order_preserved():
    cl = iic_approximant(32, "conditioned", 1)
    pairs = [(5, 1), (0, 7), (5, 2), (0, 3)]
    dG, dw = pair_distances(cl, constant_weight(cl), pairs)
    for (s, t), g in zip(pairs, dG):
        assert g == chemical_distances(cl, s)[t]


def test_distance_fit_needs_data():
    with pytest.raises(InsufficientDataError):
        fit_distance_lowerbound([10, 20], [10, 20])
    dG = np.array([8, 9, 10, 12, 16, 20, 24, 30, 40, 50, 60, 70.0])
    dw = dG.copy()
    dw[0] = 0
    fit = fit_distance_lowerbound(dG, dw, bootstrap=50)
    assert fit.zero_pairs == 1 and fit.pairs == 11
