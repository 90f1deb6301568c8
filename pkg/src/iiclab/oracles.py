"""Brute-force reference implementations for small graphs.

Everything here is plain Python over adjacency dicts keyed by lattice
points, written independently of the compiled kernels so the two can be
compared.  Costs grow exponentially; keep inputs to a few dozen vertices.
"""
from collections import deque
import itertools


def cluster_adjacency(cluster):
    return cluster.adjacency()


def components(vertices, edges):
    """Connected components (as sets) of an explicit graph."""
    adj = {v: set() for v in vertices}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, out = set(), []
    for v in sorted(vertices):
        if v in seen:
            continue
        comp, stack = set(), [v]
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            stack.extend(adj[u] - comp)
        seen |= comp
        out.append(comp)
    return out


def reachable(adj, sources, allowed):
    seen = set(s for s in sources)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen and w in allowed:
                seen.add(w)
                queue.append(w)
    return seen


def simple_paths(adj, v, stop, allowed):
    """All simple paths from v whose last vertex is in ``stop``; interior
    vertices must be in ``allowed`` and outside ``stop``."""
    out = []

    def rec(path, onpath):
        u = path[-1]
        for w in adj[u]:
            if w in onpath:
                continue
            if w in stop:
                out.append(path + [w])
            elif w in allowed:
                onpath.add(w)
                rec(path + [w], onpath)
                onpath.discard(w)

    rec([v], {v})
    return out


def two_paths(adj, v, targets, allowed):
    """Two paths from v to distinct targets, sharing only v."""
    targets = set(targets) - {v}
    for p in simple_paths(adj, v, targets, allowed):
        used = set(p[1:])
        # a second path avoiding p (except v) that ends at another target
        rest = {u for u in allowed if u not in used}
        others = targets - used
        frontier = reachable(adj, [v], rest - targets)
        for u in frontier:
            if any(w in others for w in adj[u]):
                return True
    return False


def patch_backbone(adj, inside):
    """Patch vertices with two paths inside the patch, sharing only the
    start, each followed by an open edge to a distinct outside vertex."""
    inside = set(inside)
    outside = {w for u in inside for w in adj[u] if w not in inside}
    return {v for v in inside if two_paths(adj, v, outside, inside)}


def patch_depth(adj, inside, margin):
    """Largest tau such that some inside vertex v has every vertex of the
    L1 ball B(v, tau) inside the patch and reaches an exit inside it."""
    inside = set(inside)
    exits = {u for u in inside if any(w not in inside for w in adj[u])}
    if not exits:
        return 0
    linked = reachable(adj, exits, inside)
    best = 0
    for v in linked:
        tau = 0
        while all(
            margin((v[0] + dx, v[1] + dy)) >= 0
            for dx in range(-(tau + 1), tau + 2)
            for dy in range(-(tau + 1 - abs(dx)), tau + 2 - abs(dx))
        ):
            tau += 1
        best = max(best, tau)
    return best


def kesten_backbone(adj, m):
    """Vertices of S(m) with a path to the origin and a path to the
    boundary of S(m) sharing only the vertex itself."""
    o = (0, 0)
    if o not in adj:
        return set()
    verts = set(adj)
    bnd = {v for v in verts if max(abs(v[0]), abs(v[1])) == m}
    if not bnd:
        return set()
    out = set()
    for v in verts:
        if max(abs(v[0]), abs(v[1])) > m:
            continue
        if v == o:
            out.add(v)
            continue
        ok = False
        for p in simple_paths(adj, v, {o}, verts):
            used = set(p[1:])
            if v in bnd:
                ok = True
                break
            rest = verts - used
            if reachable(adj, [v], rest) & bnd:
                ok = True
                break
        if ok:
            out.add(v)
    return out


def floyd_warshall(adj):
    verts = sorted(adj)
    idx = {v: i for i, v in enumerate(verts)}
    n = len(verts)
    inf = float("inf")
    D = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for v in verts:
        for w in adj[v]:
            D[idx[v]][idx[w]] = 1
    for k, i, j in itertools.product(range(n), repeat=3):
        if D[i][k] + D[k][j] < D[i][j]:
            D[i][j] = D[i][k] + D[k][j]
    return verts, D


def weighted_path_minimum(adj, weight, s, t):
    """Minimum over simple s-t paths of sum of (w(x)+w(y))/2 over edges."""
    if s == t:
        return 0.0
    best = float("inf")
    for p in simple_paths(adj, s, {t}, set(adj)):
        best = min(best, sum(0.5 * (weight[a] + weight[b]) for a, b in zip(p, p[1:])))
    return best


def min_marked_count(adj, marked, s, t):
    """Minimum over simple s-t paths of the number of marked vertices."""
    if s == t:
        return int(s in marked)
    best = float("inf")
    for p in simple_paths(adj, s, {t}, set(adj)):
        best = min(best, sum(1 for u in p if u in marked))
    return best
