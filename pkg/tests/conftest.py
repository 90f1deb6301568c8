import numpy as np
import pytest

from iiclab.lattice import BoxRegion, PercolationSample


def sample_from_edges(n, edges, seed=0):
    """Build a sample on S(n) whose open edges are exactly ``edges``."""
    region = BoxRegion(n)
    W = region.width
    east = np.zeros(W * W, dtype=bool)
    north = np.zeros(W * W, dtype=bool)
    for u, v in edges:
        u, v = sorted([tuple(u), tuple(v)])
        gid = region.grid_id(u)
        if u[1] == v[1]:
            east[gid] = True
        else:
            north[gid] = True
    return PercolationSample(region, 0.5, seed, east, north)


@pytest.fixture
def edges_sample():
    return sample_from_edges


def adjacency_of(edges):
    adj = {}
    for a, b in edges:
        adj.setdefault(tuple(a), set()).add(tuple(b))
        adj.setdefault(tuple(b), set()).add(tuple(a))
    return adj
