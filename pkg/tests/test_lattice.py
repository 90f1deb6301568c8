import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iiclab import oracles
from iiclab.arms import one_arm
from iiclab.lattice import (
    CONDITIONED,
    LARGEST,
    BoxRegion,
    EmptySampleError,
    RejectionBudgetExceeded,
    dump_sample,
    iic_approximant,
    largest_cluster,
    load_sample,
    open_cluster,
    sample_bond_config,
)
from iiclab.seeding import derive_seed

from conftest import sample_from_edges


def replay_open_edges(n, p, seed):
    """Replay the generator stream: one uniform per edge, vertices row by
    row (y then x), east edge before north edge."""
    u = iter(np.random.default_rng(seed).random(2 * (2 * n + 1) * (2 * n)))
    out = set()
    for y in range(-n, n + 1):
        for x in range(-n, n + 1):
            if x < n and next(u) < p:
                out.add(((x, y), (x + 1, y)))
            if y < n and next(u) < p:
                out.add(((x, y), (x, y + 1)))
    return out


def test_full_and_empty_boxes():
    s1 = sample_bond_config(BoxRegion(2), 1.0, 3)
    s0 = sample_bond_config(BoxRegion(2), 0.0, 3)
    assert s1.num_open() == 40
    assert s0.num_open() == 0


def test_replay_oracle_n64_seed7():
    s = sample_bond_config(BoxRegion(64), 0.5, 7)
    assert set(s.open_edges()) == replay_open_edges(64, 0.5, 7)
    E = s.region.num_edges
    assert s.num_open() == 16373  # frozen from the replay oracle
    assert abs(s.num_open() - E / 2) < 4 * np.sqrt(E / 4)


def test_is_open_matches_edge_list():
    s = sample_bond_config(BoxRegion(3), 0.5, 11)
    edges = set(s.open_edges())
    for (a, b) in edges:
        assert s.is_open(a, b) and s.is_open(b, a)
    closed = [(u, v) for u in s.region.boundary() for v in [(u[0] + 1, u[1])] if s.region.contains(v) and (u, v) not in edges]
    assert all(not s.is_open(u, v) for u, v in closed)
    assert not s.is_open((0, 0), (1, 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 1), st.floats(0, 1))
def test_monotone_coupling(seed, p, q):
    lo, hi = sorted((p, q))
    a = sample_bond_config(BoxRegion(5), lo, seed)
    b = sample_bond_config(BoxRegion(5), hi, seed)
    assert np.all(b.east[a.east]) and np.all(b.north[a.north])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_determinism(seed):
    a = sample_bond_config(BoxRegion(6), 0.5, seed)
    b = sample_bond_config(BoxRegion(6), 0.5, seed)
    assert a == b
    ca, cb = largest_cluster(a), largest_cluster(b)
    assert np.array_equal(ca.coords, cb.coords) and ca.root == cb.root


def test_open_cluster_trivial_cases():
    full = sample_bond_config(BoxRegion(3), 1.0, 0)
    cl = open_cluster(full, (0, 0))
    assert len(cl) == 49 and cl.root_vertex == (0, 0)
    assert open_cluster(sample_bond_config(BoxRegion(3), 0.0, 0), (1, 1)) is None


def test_open_cluster_hand_config():
    edges = [((-1, -1), (0, -1)), ((0, -1), (0, 0)), ((0, 0), (1, 0)), ((-1, 1), (0, 1)), ((1, 1), (1, 0))]
    s = sample_from_edges(1, edges)
    verts = [(x, y) for x in range(-1, 2) for y in range(-1, 2)]
    comp = next(c for c in oracles.components(verts, edges) if (0, 0) in c)
    assert open_cluster(s, (0, 0)).vertices == comp
    assert comp == {(-1, -1), (0, -1), (0, 0), (1, 0), (1, 1)}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_cluster_soundness(seed):
    s = sample_bond_config(BoxRegion(4), 0.5, seed)
    if s.num_open() == 0:
        return
    cl = largest_cluster(s)
    adj = cl.adjacency()
    for v, nb in adj.items():
        for w in nb:
            assert s.is_open(v, w)
    members = cl.vertices
    for a, b in s.open_edges():
        if a in members:
            assert b in adj[a]
    verts = [(x, y) for x in range(-4, 5) for y in range(-4, 5)]
    comps = oracles.components(verts, s.open_edges())
    assert len(members) == max(len(c) for c in comps)


def test_largest_cluster_sizes_and_ties():
    # a 7-vertex path and a 3-vertex path
    seven = [((-3, -3), (-2, -3)), ((-2, -3), (-1, -3)), ((-1, -3), (0, -3)), ((0, -3), (1, -3)), ((1, -3), (2, -3)), ((2, -3), (3, -3))]
    three = [((0, 2), (1, 2)), ((1, 2), (2, 2))]
    cl = largest_cluster(sample_from_edges(3, seven + three))
    assert len(cl) == 7 and cl.provenance == LARGEST
    # two 4-vertex paths; the one holding (-3, 1) is lexicographically first
    a = [((-3, 1), (-2, 1)), ((-2, 1), (-1, 1)), ((-1, 1), (0, 1))]
    b = [((0, -2), (1, -2)), ((1, -2), (2, -2)), ((2, -2), (3, -2))]
    for order in (a + b, b + a):
        cl = largest_cluster(sample_from_edges(3, order))
        assert min(cl.vertices) == (-3, 1)
    with pytest.raises(EmptySampleError):
        largest_cluster(sample_bond_config(BoxRegion(2), 0.0, 0))


@pytest.mark.parametrize("seed", range(5))
def test_largest_flavor_root_translated(seed):
    cl = iic_approximant(4, "largest", seed)
    assert cl.root_vertex == (0, 0)


@pytest.mark.parametrize("seed", range(10))
def test_conditioned_flavor_reaches_boundary(seed):
    cl = iic_approximant(8, "conditioned", seed)
    assert cl.provenance == CONDITIONED and cl.root_vertex == (0, 0)
    seen = oracles.reachable(cl.adjacency(), [(0, 0)], cl.vertices)
    assert any(max(abs(x), abs(y)) == 8 for x, y in seen)


def test_conditioned_acceptance_rate_matches_one_arm():
    # acceptance fraction = successes / attempts, pooled over clusters
    trials = 10**4
    hits = sum(one_arm(sample_bond_config(BoxRegion(8), 0.5, derive_seed(99, ["pi1", t])), 8) for t in range(trials))
    pi1 = hits / trials
    acc, att = 0, 0
    a = 0
    while att < trials:
        cl = iic_approximant(8, "conditioned", derive_seed(5, ["acc", a]))
        acc += 1
        att += cl.attempts + 1
        a += 1
    rate = acc / att
    se = np.sqrt(pi1 * (1 - pi1) / trials + rate * (1 - rate) / att)
    assert abs(rate - pi1) < 3 * se


def test_rejection_budget():
    with pytest.raises(RejectionBudgetExceeded):
        iic_approximant(8, "conditioned", 0, max_attempts=3, p=0.0)
    with pytest.raises(ValueError):
        iic_approximant(3, "largest", 0)


def test_sample_roundtrip(tmp_path):
    s = sample_bond_config(BoxRegion(9, (2, -1)), 0.37, 123)
    header = dump_sample(s, tmp_path / "s.bin")
    t = load_sample(tmp_path / "s.bin")
    assert s == t
    assert header["num_open"] == s.num_open()
    assert (tmp_path / "s.bin.json").exists()
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + (tmp_path / "s.bin").read_bytes()[4:])
    with pytest.raises(ValueError):
        load_sample(tmp_path / "bad.bin")
