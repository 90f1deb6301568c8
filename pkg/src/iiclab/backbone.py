"""Patch backbones, patch depth, deep-patch unions and Kesten's backbone.

Reading used throughout: a vertex v of a patch S is in the backbone of
S when two paths start at v, share only v, run inside S, and each leaves
S through an open edge to a cluster vertex outside S, the two outside
endpoints being distinct.  Exits are patch vertices carrying such a
leaving edge.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .covering import CoveringSystem, Patch, SIGMAS
from .lattice import PercolationSample, RootedCluster, open_cluster
from .seeding import derive_seed

BLOCK = "block"
FLOW = "flow"
METHODS = (BLOCK, FLOW)


def patch_members(cluster, patch):
    """Local indices of the cluster vertices inside ``patch``."""
    return np.flatnonzero(patch.contains_many(cluster.xs, cluster.ys))


def _local_graph(cluster, members):
    scratch = np.zeros(len(cluster), dtype=bool)
    scratch[members] = True
    return K.patch_graph(cluster.indptr, cluster.indices, members, scratch)


@dataclass
class PatchAnalysis:
    patch: Patch
    members: np.ndarray
    exits: np.ndarray
    depth: int
    backbone: np.ndarray = None


def analyze_patch(cluster, patch, method=BLOCK, with_backbone=True):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    members = patch_members(cluster, patch)
    empty = np.empty(0, dtype=np.int64)
    if len(members) == 0:
        return PatchAnalysis(patch, members, empty, 0, empty)
    _, n_in, lptr, lind, sink = _local_graph(cluster, members)
    margins = patch.margins(cluster.xs[members], cluster.ys[members])
    d = int(K.patch_depth(lptr, lind, n_in, margins))
    rows = np.repeat(np.arange(len(lptr) - 1), np.diff(lptr))
    has_out = np.bincount(rows[lind >= n_in], minlength=len(lptr) - 1)[:n_in] > 0
    res = PatchAnalysis(patch, members, members[has_out], max(d, 0))
    if with_backbone:
        if method == BLOCK:
            inb = K.block_with_root(lptr, lind, sink)[:n_in]
        else:
            inb = _flow_backbone(lptr, lind, n_in, sink, has_out)
        res.backbone = np.sort(members[inb])
    return res


def _flow_backbone(lptr, lind, n_in, sink, has_out):
    """Per-vertex disjoint-path flow to the outside neighbours."""
    nloc = sink + 1
    rev = K.reverse_edges(lptr, lind)
    is_target = np.zeros(nloc, dtype=bool)
    is_target[n_in:sink] = True
    allowed = np.zeros(nloc, dtype=bool)
    allowed[:n_in] = True
    # prefilter: fewer than two neighbours, or no route to an exit
    reach = K.bfs(lptr, lind, np.flatnonzero(has_out), allowed) >= 0
    deg = np.diff(lptr)
    inb = np.zeros(n_in, dtype=bool)
    for i in range(n_in):
        if deg[i] < 2 or not reach[i]:
            continue
        inb[i] = K.disjoint_path_flow(lptr, lind, rev, i, is_target, allowed, 2) >= 2
    return inb


def backbone(cluster, patch, method=BLOCK):
    """Backbone of ``patch`` as sorted local indices of ``cluster``."""
    return analyze_patch(cluster, patch, method).backbone


def depth(cluster, patch):
    """Largest L1 margin of a patch vertex joined inside the patch to an exit."""
    return analyze_patch(cluster, patch, with_backbone=False).depth


def exit_vertices(cluster, patch):
    return analyze_patch(cluster, patch, with_backbone=False).exits


def deep_threshold(k, eps, side=None):
    return eps * (2**k if side is None else side)


@dataclass
class BackboneReport:
    k: int
    eps: float
    threshold: float
    patches: int
    deep: int
    deep_backbone_sizes: list = field(default_factory=list)
    deep_volumes: list = field(default_factory=list)
    root_in_union: bool = False
    union_size: int = 0

    def to_dict(self):
        return dict(self.__dict__)


def _family_groups(cluster, system, k, sigma):
    """Group cluster vertices by their family-sigma patch at scale k."""
    i, j = system.tile_index(k, sigma, cluster.xs, cluster.ys)
    i0, j0 = i.min(), j.min()
    key = (i - i0) * (j.max() - j0 + 1) + (j - j0)
    order = np.argsort(key, kind="stable")
    sk = key[order]
    starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1], True])
    first = order[starts[:-1]]
    L = system.side(k)
    ox, oy = system.family_origin(k, sigma)
    cx = ox + i[first] * L
    cy = oy + j[first] * L
    # margin of each vertex inside its own patch of this family
    px = ox + i * L
    py = oy + j * L
    margins = np.minimum.reduce(
        [cluster.xs - px, px + L - 1 - cluster.xs, cluster.ys - py, py + L - 1 - cluster.ys]
    )
    return order.astype(np.int64), starts.astype(np.int64), cx, cy, margins.astype(np.int64)


def deep_backbone_union(cluster, system, k, eps=1 / 3, method=BLOCK):
    """Union of backbones over the scale-k patches of depth >= eps * 2^k.

    Returns (mask over cluster vertices, BackboneReport).
    """
    thr = deep_threshold(k, eps, system.side(k))
    union = np.zeros(len(cluster), dtype=bool)
    rep = BackboneReport(k=k, eps=eps, threshold=thr, patches=0, deep=0)
    L = system.side(k)
    families = system._families(k)
    if method == BLOCK:
        scratch = np.zeros(len(cluster), dtype=np.bool_)
        thr_i = int(np.ceil(thr - 1e-12))
        for sigma in families:
            order, starts, cx, cy, margins = _family_groups(cluster, system, k, sigma)
            u, depths, sizes, counts = K.scale_union(
                cluster.indptr, cluster.indices, order, starts, margins, thr_i, scratch
            )
            union |= u
            deep = depths >= thr_i
            rep.patches += len(depths)
            rep.deep += int(deep.sum())
            rep.deep_backbone_sizes += [int(s) for s in sizes[deep]]
            rep.deep_volumes += [int(c) for c in counts[deep]]
    else:
        for sigma in families:
            order, starts, cx, cy, _ = _family_groups(cluster, system, k, sigma)
            for g in range(len(starts) - 1):
                patch = Patch(k, (int(cx[g]), int(cy[g])), L, sigma)
                a = analyze_patch(cluster, patch, method, with_backbone=False)
                rep.patches += 1
                if a.depth >= thr:
                    bb = analyze_patch(cluster, patch, method).backbone
                    union[bb] = True
                    rep.deep += 1
                    rep.deep_backbone_sizes.append(len(bb))
                    rep.deep_volumes.append(len(a.members))
    rep.root_in_union = bool(union[cluster.root])
    rep.union_size = int(union.sum())
    return union, rep


def root_in_deep_backbone(cluster, system, k, eps=1 / 3, method=BLOCK):
    """Whether the root lies in the union; only patches holding the root matter."""
    thr = deep_threshold(k, eps, system.side(k))
    for patch in system.patches_at(k, cluster.root_vertex):
        a = analyze_patch(cluster, patch, method, with_backbone=False)
        if a.depth < thr:
            continue
        bb = analyze_patch(cluster, patch, method).backbone
        if np.any(bb == cluster.root):
            return True
    return False


def root_backbone_frequency(clusters, ks, eps=1 / 3, seed=0, convention="dyadic"):
    """Fraction of clusters whose root is in the deep-backbone union, per scale.

    Cluster ``a`` gets its own covering, shifted with seed
    ``derive_seed(seed, ["cover", a])``.  Returns (indicator matrix of
    shape (clusters, scales), means, standard errors).
    """
    ks = list(ks)
    hits = np.zeros((len(clusters), len(ks)), dtype=bool)
    for a, cl in enumerate(clusters):
        system = CoveringSystem.random(max(ks), derive_seed(seed, ["cover", a]), convention)
        for b, k in enumerate(ks):
            hits[a, b] = root_in_deep_backbone(cl, system, k, eps)
    m = hits.mean(axis=0)
    return hits, m, np.sqrt(m * (1 - m) / len(clusters))


def backbone_density(clusters, k, eps, seed=0, convention="dyadic"):
    """Degree-biased probability that a vertex lies in the deep-backbone union.

    Pooled over the ensemble: sum of degrees on the union divided by the
    total degree.  The standard error is from resampling clusters.
    """
    num = np.zeros(len(clusters))
    den = np.zeros(len(clusters))
    for a, cl in enumerate(clusters):
        system = CoveringSystem.random(k, derive_seed(seed, ["cover", a]), convention)
        u, _ = deep_backbone_union(cl, system, k, eps)
        deg = cl.degrees
        num[a] = deg[u].sum()
        den[a] = deg.sum()
    p = num.sum() / den.sum()
    return float(p), _ratio_se(num, den)


def _ratio_se(num, den):
    """Delta-method standard error of sum(num)/sum(den) over i.i.d. units."""
    n = len(num)
    if n < 2:
        return float("nan")
    r = num.sum() / den.sum()
    resid = num - r * den
    return float(np.sqrt(n / (n - 1) * (resid**2).sum()) / den.sum())


# -- Kesten's backbone --------------------------------------------------------


def _origin_cluster(obj):
    if isinstance(obj, PercolationSample):
        return open_cluster(obj, (0, 0))
    if isinstance(obj, RootedCluster):
        return obj
    raise TypeError("expected a PercolationSample or a RootedCluster")


def kesten_backbone(obj, m, method=BLOCK):
    """Vertices v of S(m) with two paths, sharing only v, one to the
    boundary of S(m) and one to the origin.

    Paths may use any cluster vertex.  Returns sorted coordinates (K, 2).
    """
    cl = _origin_cluster(obj)
    if cl is None:
        return np.empty((0, 2), dtype=np.int64)
    o = cl.index_of((0, 0))
    if o < 0:
        raise ValueError("cluster does not contain the origin")
    norm = np.maximum(np.abs(cl.xs), np.abs(cl.ys))
    if norm.max() < m:
        return np.empty((0, 2), dtype=np.int64)
    N = len(cl)
    bnd = np.flatnonzero(norm == m)
    b, t = N, N + 1
    rows = np.repeat(np.arange(N), np.diff(cl.indptr))
    extra_r = np.r_[bnd, np.full(len(bnd), b), [b, t, o, t]]
    extra_c = np.r_[np.full(len(bnd), b), bnd, [t, b, t, o]]
    use_t = method == BLOCK
    size = N + 2 if use_t else N + 1
    if not use_t:
        keep = (extra_r != t) & (extra_c != t)
        extra_r, extra_c = extra_r[keep], extra_c[keep]
    A = sp.csr_matrix(
        (np.ones(len(rows) + len(extra_r)), (np.r_[rows, extra_r], np.r_[cl.indices, extra_c])),
        shape=(size, size),
    )
    A.sum_duplicates()
    A.sort_indices()
    indptr = A.indptr.astype(np.int64)
    indices = A.indices.astype(np.int64)
    inside = norm <= m
    member = np.zeros(N, dtype=bool)
    if use_t:
        member = K.block_with_root(indptr, indices, t)[:N]
    else:
        rev = K.reverse_edges(indptr, indices)
        is_target = np.zeros(size, dtype=bool)
        is_target[[b, o]] = True
        allowed = np.ones(size, dtype=bool)
        for v in np.flatnonzero(inside):
            if v != o:
                member[v] = K.disjoint_path_flow(indptr, indices, rev, v, is_target, allowed, 2) >= 2
    # the origin: the trivial path plus any path to the boundary
    member[o] = True
    member &= inside
    out = cl.coords[member]
    return out[np.lexsort((out[:, 1], out[:, 0]))]


# -- ensemble statistics for volume and density estimates ----------------------


def _origin_patch(q, rng):
    """A side-q patch holding the origin with a uniform offset."""
    a, b = int(rng.integers(q)), int(rng.integers(q))
    return Patch(0, (-a, -b), q)


def patch_volume_tail(ensemble, q, lambdas, pi1, seed=0):
    """Empirical Pr[|D ∩ V(G)| > lam q^2 pi1] for a uniformly placed
    side-q patch D holding the origin.

    Returns a dict with the volumes and per-lambda tails with binomial
    standard errors.
    """
    vols = np.empty(len(ensemble), dtype=np.int64)
    for a, cl in enumerate(ensemble):
        rng = np.random.default_rng(derive_seed(seed, ["tail", a]))
        vols[a] = len(patch_members(cl, _origin_patch(q, rng)))
    lambdas = np.asarray(lambdas, dtype=float)
    tails = np.array([(vols > lam * q * q * pi1).mean() for lam in lambdas])
    se = np.sqrt(tails * (1 - tails) / len(vols))
    return {"q": q, "pi1": pi1, "lambdas": lambdas, "volumes": vols, "tail": tails, "se": se}


def deep_sparse_probability(ensemble, q, lambdas, pi1, eps=1 / 3, seed=0):
    """Pr[D deep and |3D ∩ V(G)| < q^2 pi1 / lam] with D a side-q patch
    holding the origin and 3D the concentric side-3q patch."""
    deep = np.zeros(len(ensemble), dtype=bool)
    vol3 = np.zeros(len(ensemble), dtype=np.int64)
    for a, cl in enumerate(ensemble):
        rng = np.random.default_rng(derive_seed(seed, ["sparse", a]))
        D = _origin_patch(q, rng)
        deep[a] = depth(cl, D) >= eps * q
        big = Patch(0, (D.corner[0] - q, D.corner[1] - q), 3 * q)
        vol3[a] = len(patch_members(cl, big))
    probs = np.array([(deep & (vol3 < q * q * pi1 / lam)).mean() for lam in lambdas])
    return {"q": q, "lambdas": np.asarray(lambdas, dtype=float), "prob": probs, "deep_fraction": deep.mean()}


def kesten_patch_counts(ensemble, m, q, seed=0):
    """Mean and standard error of |Kesten backbone of S(m) ∩ D| over the
    ensemble, D a uniformly placed side-q patch holding the origin."""
    counts = np.empty(len(ensemble), dtype=np.int64)
    for a, cl in enumerate(ensemble):
        rng = np.random.default_rng(derive_seed(seed, ["kesten", a]))
        D = _origin_patch(q, rng)
        bb = kesten_backbone(cl, m)
        counts[a] = int(D.contains_many(bb[:, 0], bb[:, 1]).sum()) if len(bb) else 0
    return float(counts.mean()), float(counts.std(ddof=1) / np.sqrt(len(counts))), counts
