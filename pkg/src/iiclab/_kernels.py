"""Compiled graph kernels.

Grid kernels work on a box of width ``W`` with vertex id ``row * W + col``
and two boolean arrays: ``east[id]`` (edge id -- id+1) and ``north[id]``
(edge id -- id+W).  Graph kernels work on CSR adjacency
(``indptr``, ``indices``) over local vertex indices.
"""
import heapq

import numpy as np
from numba import njit


@njit(cache=True)
def grid_component(east, north, W, start):
    """Grid ids of the open component of ``start`` in BFS order."""
    N = W * W
    seen = np.zeros(N, dtype=np.bool_)
    out = np.empty(N, dtype=np.int64)
    out[0] = start
    seen[start] = True
    head = 0
    tail = 1
    while head < tail:
        u = out[head]
        head += 1
        c = u % W
        if c + 1 < W and east[u] and not seen[u + 1]:
            seen[u + 1] = True
            out[tail] = u + 1
            tail += 1
        if c > 0 and east[u - 1] and not seen[u - 1]:
            seen[u - 1] = True
            out[tail] = u - 1
            tail += 1
        if u + W < N and north[u] and not seen[u + W]:
            seen[u + W] = True
            out[tail] = u + W
            tail += 1
        if u >= W and north[u - W] and not seen[u - W]:
            seen[u - W] = True
            out[tail] = u - W
            tail += 1
    return out[:tail].copy()


@njit(cache=True)
def grid_labels(east, north, W):
    """Component label of every grid vertex (labels in discovery order)."""
    N = W * W
    labels = np.full(N, -1, dtype=np.int64)
    queue = np.empty(N, dtype=np.int64)
    sizes = np.zeros(N, dtype=np.int64)
    nlab = 0
    for s in range(N):
        if labels[s] >= 0:
            continue
        labels[s] = nlab
        queue[0] = s
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            c = u % W
            if c + 1 < W and east[u] and labels[u + 1] < 0:
                labels[u + 1] = nlab
                queue[tail] = u + 1
                tail += 1
            if c > 0 and east[u - 1] and labels[u - 1] < 0:
                labels[u - 1] = nlab
                queue[tail] = u - 1
                tail += 1
            if u + W < N and north[u] and labels[u + W] < 0:
                labels[u + W] = nlab
                queue[tail] = u + W
                tail += 1
            if u >= W and north[u - W] and labels[u - W] < 0:
                labels[u - W] = nlab
                queue[tail] = u - W
                tail += 1
        sizes[nlab] = tail
        nlab += 1
    return labels, sizes[:nlab].copy()


@njit(cache=True)
def grid_csr(east, north, W, ids):
    """CSR adjacency of the open subgraph induced on grid ids ``ids``."""
    N = W * W
    n = ids.shape[0]
    pos = np.full(N, -1, dtype=np.int64)
    for i in range(n):
        pos[ids[i]] = i
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = np.empty(4 * n, dtype=np.int64)
    k = 0
    for i in range(n):
        u = ids[i]
        c = u % W
        if c + 1 < W and east[u] and pos[u + 1] >= 0:
            indices[k] = pos[u + 1]
            k += 1
        if c > 0 and east[u - 1] and pos[u - 1] >= 0:
            indices[k] = pos[u - 1]
            k += 1
        if u + W < N and north[u] and pos[u + W] >= 0:
            indices[k] = pos[u + W]
            k += 1
        if u >= W and north[u - W] and pos[u - W] >= 0:
            indices[k] = pos[u - W]
            k += 1
        indptr[i + 1] = k
    return indptr, indices[:k].copy()


@njit(cache=True)
def bfs(indptr, indices, sources, allowed):
    """Multi-source BFS distances; vertices with ``allowed`` False are never
    entered (sources are always entered). Unreached vertices get -1."""
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    tail = 0
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    head = 0
    while head < tail:
        u = queue[head]
        head += 1
        for e in range(indptr[u], indptr[u + 1]):
            w = indices[e]
            if dist[w] < 0 and allowed[w]:
                dist[w] = dist[u] + 1
                queue[tail] = w
                tail += 1
    return dist


@njit(cache=True)
def reverse_edges(indptr, indices):
    n = indptr.shape[0] - 1
    rev = np.empty(indices.shape[0], dtype=np.int64)
    for u in range(n):
        for e in range(indptr[u], indptr[u + 1]):
            w = indices[e]
            rev[e] = -1
            for f in range(indptr[w], indptr[w + 1]):
                if indices[f] == u:
                    rev[e] = f
                    break
    return rev


@njit(cache=True)
def disjoint_path_flow(indptr, indices, rev, s, is_target, allowed, kmax):
    """Number (capped at ``kmax``) of paths from ``s`` to the target set that
    are vertex-disjoint except at ``s``.

    Unit-capacity max flow on the vertex-split network.  Every vertex other
    than ``s`` has capacity one, targets included.  Paths end at their
    first target; non-target interior vertices must be ``allowed``.
    """
    n = indptr.shape[0] - 1
    m = indices.shape[0]
    vflow = np.zeros(n, dtype=np.int8)
    eflow = np.zeros(m, dtype=np.int8)
    # search state 2u = u_in, 2u+1 = u_out
    par = np.empty(2 * n, dtype=np.int64)
    how = np.empty(2 * n, dtype=np.int64)  # >=0 edge entry, -1 vertex arc, -2 start
    seen = np.zeros(2 * n, dtype=np.int64)
    queue = np.empty(2 * n, dtype=np.int64)
    flow = 0
    stamp = 0
    while flow < kmax:
        stamp += 1
        start = 2 * s + 1
        seen[start] = stamp
        how[start] = -2
        queue[0] = start
        head = 0
        tail = 1
        found = -1
        while head < tail and found < 0:
            st = queue[head]
            head += 1
            u = st >> 1
            if st & 1:
                # u_out: forward along edges, backward along u's vertex arc
                for e in range(indptr[u], indptr[u + 1]):
                    w = indices[e]
                    if w == s or eflow[e] != 0:
                        continue
                    if not (is_target[w] or allowed[w]):
                        continue
                    nx = 2 * w
                    if seen[nx] != stamp:
                        seen[nx] = stamp
                        par[nx] = st
                        how[nx] = e
                        if is_target[w] and vflow[w] == 0:
                            found = nx
                            break
                        queue[tail] = nx
                        tail += 1
                if found < 0 and u != s and vflow[u] == 1:
                    nx = 2 * u
                    if seen[nx] != stamp:
                        seen[nx] = stamp
                        par[nx] = st
                        how[nx] = -1
                        queue[tail] = nx
                        tail += 1
            else:
                # u_in: through the vertex, or backward along used edges
                if vflow[u] == 0 and not is_target[u]:
                    nx = 2 * u + 1
                    if seen[nx] != stamp:
                        seen[nx] = stamp
                        par[nx] = st
                        how[nx] = -1
                        queue[tail] = nx
                        tail += 1
                for e in range(indptr[u], indptr[u + 1]):
                    r = rev[e]
                    if eflow[r] == 1:
                        w = indices[e]
                        nx = 2 * w + 1
                        if seen[nx] != stamp:
                            seen[nx] = stamp
                            par[nx] = st
                            how[nx] = -3 - r
                            queue[tail] = nx
                            tail += 1
        if found < 0:
            break
        vflow[found >> 1] = 1
        st = found
        while how[st] != -2:
            h = how[st]
            p = par[st]
            if h >= 0:
                eflow[h] = 1
            elif h == -1:
                u = st >> 1
                if st & 1:
                    vflow[u] = 1
                else:
                    vflow[u] = 0
            else:
                eflow[-3 - h] = 0
            st = p
        flow += 1
    return flow


@njit(cache=True)
def block_with_root(indptr, indices, root):
    """Mask of vertices sharing a biconnected block with ``root``."""
    n = indptr.shape[0] - 1
    disc = np.full(n, -1, dtype=np.int64)
    low = np.zeros(n, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    it = indptr[:-1].copy()
    stack = np.empty(n, dtype=np.int64)
    disc[root] = 0
    order[0] = root
    cnt = 1
    sp = 0
    stack[0] = root
    while sp >= 0:
        u = stack[sp]
        if it[u] < indptr[u + 1]:
            w = indices[it[u]]
            it[u] += 1
            if disc[w] < 0:
                parent[w] = u
                disc[w] = cnt
                low[w] = cnt
                order[cnt] = w
                cnt += 1
                sp += 1
                stack[sp] = w
            elif w != parent[u] and disc[w] < low[u]:
                low[u] = disc[w]
        else:
            sp -= 1
            if sp >= 0:
                p = stack[sp]
                if low[u] < low[p]:
                    low[p] = low[u]
    inblock = np.zeros(n, dtype=np.bool_)
    for i in range(1, cnt):
        x = order[i]
        w = parent[x]
        if w == root:
            inblock[x] = True
        else:
            inblock[x] = inblock[w] and low[x] < disc[w]
    return inblock


@njit(cache=True)
def patch_graph(indptr, indices, members, in_patch):
    """Local graph of a patch: its cluster vertices, their outside cluster
    neighbours, and one extra sink joined to every outside neighbour.

    Returns (local_to_global, n_inside, indptr, indices, sink).  Edges
    between two outside vertices are dropped.  ``in_patch`` is a global
    scratch mask that is True exactly on ``members``.
    """
    n_in = members.shape[0]
    # outside neighbours, collected without a global-size scratch map
    outs = np.empty(4 * n_in + 1, dtype=np.int64)
    n_out = 0
    for i in range(n_in):
        u = members[i]
        for e in range(indptr[u], indptr[u + 1]):
            w = indices[e]
            if not in_patch[w]:
                outs[n_out] = w
                n_out += 1
    outs = np.unique(outs[:n_out])
    n_out = outs.shape[0]
    nloc = n_in + n_out + 1
    sink = nloc - 1
    g2l_keys = np.concatenate((members, outs))
    order = np.argsort(g2l_keys)
    sorted_keys = g2l_keys[order]

    deg = np.zeros(nloc, dtype=np.int64)
    for i in range(n_in):
        u = members[i]
        deg[i] = indptr[u + 1] - indptr[u]
    for j in range(n_out):
        w = outs[j]
        c = 0
        for e in range(indptr[w], indptr[w + 1]):
            if in_patch[indices[e]]:
                c += 1
        deg[n_in + j] = c + 1
    deg[sink] = n_out
    lptr = np.zeros(nloc + 1, dtype=np.int64)
    for i in range(nloc):
        lptr[i + 1] = lptr[i] + deg[i]
    lind = np.empty(lptr[nloc], dtype=np.int64)
    fill = lptr[:-1].copy()
    for i in range(n_in):
        u = members[i]
        for e in range(indptr[u], indptr[u + 1]):
            w = indices[e]
            loc = order[np.searchsorted(sorted_keys, w)]
            lind[fill[i]] = loc
            fill[i] += 1
    for j in range(n_out):
        w = outs[j]
        li = n_in + j
        for e in range(indptr[w], indptr[w + 1]):
            x = indices[e]
            if in_patch[x]:
                loc = order[np.searchsorted(sorted_keys, x)]
                lind[fill[li]] = loc
                fill[li] += 1
        lind[fill[li]] = sink
        fill[li] += 1
        lind[fill[sink]] = li
        fill[sink] += 1
    return g2l_keys, n_in, lptr, lind, sink


@njit(cache=True)
def patch_depth(lptr, lind, n_in, margins):
    """Depth of a patch from its local graph (see ``patch_graph``): the
    largest margin among inside vertices joined inside the patch to an
    inside vertex that has an outside neighbour."""
    queue = np.empty(n_in, dtype=np.int64)
    seen = np.zeros(n_in, dtype=np.bool_)
    tail = 0
    for i in range(n_in):
        for e in range(lptr[i], lptr[i + 1]):
            if lind[e] >= n_in:
                seen[i] = True
                queue[tail] = i
                tail += 1
                break
    best = -1
    head = 0
    while head < tail:
        u = queue[head]
        head += 1
        if margins[u] > best:
            best = margins[u]
        for e in range(lptr[u], lptr[u + 1]):
            w = lind[e]
            if w < n_in and not seen[w]:
                seen[w] = True
                queue[tail] = w
                tail += 1
    return best


@njit(cache=True)
def dijkstra_vertex_weights(indptr, indices, weight, src):
    """Shortest paths with edge length (weight[u] + weight[w]) / 2."""
    n = indptr.shape[0] - 1
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while len(heap) > 0:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for e in range(indptr[u], indptr[u + 1]):
            w = indices[e]
            nd = d + 0.5 * (weight[u] + weight[w])
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


@njit(cache=True)
def walk_path(indptr, indices, start, uniforms, lazy):
    """Simple random walk driven by one uniform per step (two when lazy)."""
    T = uniforms.shape[0] if not lazy else uniforms.shape[0] // 2
    path = np.empty(T + 1, dtype=np.int64)
    path[0] = start
    u = start
    for t in range(T):
        if lazy:
            if uniforms[2 * t + 1] < 0.5:
                path[t + 1] = u
                continue
            x = uniforms[2 * t]
        else:
            x = uniforms[t]
        d = indptr[u + 1] - indptr[u]
        u = indices[indptr[u] + int(x * d)]
        path[t + 1] = u
    return path


@njit(cache=True)
def walk_until(indptr, indices, start, chem_dist, xs, ys, r_chem, r_euc2, seed_uniforms, budget):
    """Run a walk until the chemical distance reaches ``r_chem`` and the
    squared Euclidean distance reaches ``r_euc2``, or ``budget`` steps.

    Returns per-step arrays (chemical distance, squared Euclidean
    distance) of the visited path.  ``seed_uniforms`` is consumed in
    order and must hold ``budget`` values.
    """
    chem = np.empty(budget + 1, dtype=np.int64)
    euc = np.empty(budget + 1, dtype=np.int64)
    u = start
    x0 = xs[start]
    y0 = ys[start]
    chem[0] = 0
    euc[0] = 0
    got_c = r_chem <= 0
    got_e = r_euc2 <= 0
    t = 0
    while t < budget and not (got_c and got_e):
        d = indptr[u + 1] - indptr[u]
        u = indices[indptr[u] + int(seed_uniforms[t] * d)]
        t += 1
        c = chem_dist[u]
        dx = xs[u] - x0
        dy = ys[u] - y0
        e2 = dx * dx + dy * dy
        chem[t] = c
        euc[t] = e2
        if c >= r_chem:
            got_c = True
        if e2 >= r_euc2:
            got_e = True
    return chem[: t + 1].copy(), euc[: t + 1].copy()


@njit(cache=True)
def scale_union(indptr, indices, order, starts, margins_all, thr, scratch):
    """Deep-patch census for one family of disjoint patches.

    ``order[starts[g]:starts[g+1]]`` are the cluster vertices of patch g
    and ``margins_all`` their L1 margins in their own patch.  Returns the
    union mask of the backbones of patches with depth >= ``thr``, and per
    patch: depth (-1 without exits), backbone size, member count.
    """
    n = indptr.shape[0] - 1
    G = starts.shape[0] - 1
    union = np.zeros(n, dtype=np.bool_)
    depths = np.empty(G, dtype=np.int64)
    sizes = np.zeros(G, dtype=np.int64)
    counts = np.empty(G, dtype=np.int64)
    for g in range(G):
        members = order[starts[g] : starts[g + 1]]
        counts[g] = members.shape[0]
        for i in range(members.shape[0]):
            scratch[members[i]] = True
        keys, n_in, lptr, lind, sink = patch_graph(indptr, indices, members, scratch)
        for i in range(members.shape[0]):
            scratch[members[i]] = False
        d = patch_depth(lptr, lind, n_in, margins_all[members])
        depths[g] = d
        if d >= thr:
            inb = block_with_root(lptr, lind, sink)
            c = 0
            for i in range(n_in):
                if inb[i]:
                    union[members[i]] = True
                    c += 1
            sizes[g] = c
    return union, depths, sizes, counts
