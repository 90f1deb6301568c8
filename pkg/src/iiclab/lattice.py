"""Critical bond percolation on boxes of the square lattice.

Edge randomness is one uniform per nearest-neighbour edge, drawn from
``numpy.random.default_rng(seed)`` in a fixed stream order: vertices in
row-major order (y ascending, then x ascending), and for each vertex its
east edge (x, y)--(x+1, y) before its north edge (x, y)--(x, y+1); edges
leaving the box are skipped.  An edge is open iff its uniform is ``< p``,
so samples with the same seed are monotonically coupled in ``p``.
"""
from dataclasses import dataclass, field
from functools import cached_property
import hashlib
import json
import struct

import numpy as np

from . import _kernels as K
from .seeding import derive_seed

LARGEST = "largest-cluster"
CONDITIONED = "origin-arm-conditioned"
PROVENANCES = (LARGEST, CONDITIONED)
_FLAVOR_ALIASES = {"largest": LARGEST, "conditioned": CONDITIONED}

DEFAULT_REJECTION_CAP = 10**6


class EmptySampleError(ValueError):
    """The sample has no open edge."""


class RejectionBudgetExceeded(RuntimeError):
    def __init__(self, attempts):
        super().__init__(f"rejection budget exhausted after {attempts} attempts")
        self.attempts = attempts


@dataclass(frozen=True)
class BoxRegion:
    """The box S(n) = [-n, n]^2, optionally translated by ``origin``."""

    n: int
    origin: tuple = (0, 0)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"half width must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @property
    def width(self):
        return 2 * self.n + 1

    @property
    def num_vertices(self):
        return self.width**2

    @property
    def num_edges(self):
        return 2 * self.width * (self.width - 1)

    def contains(self, v):
        return abs(v[0] - self.origin[0]) <= self.n and abs(v[1] - self.origin[1]) <= self.n

    def contains_many(self, xs, ys):
        return np.maximum(np.abs(xs - self.origin[0]), np.abs(ys - self.origin[1])) <= self.n

    def on_boundary(self, v):
        dx, dy = abs(v[0] - self.origin[0]), abs(v[1] - self.origin[1])
        return max(dx, dy) == self.n

    def grid_id(self, v):
        if not self.contains(v):
            raise ValueError(f"vertex {v} lies outside {self}")
        return (v[1] - self.origin[1] + self.n) * self.width + (v[0] - self.origin[0] + self.n)

    def coords(self, ids):
        """Lattice coordinates (N, 2) of grid ids."""
        ids = np.asarray(ids, dtype=np.int64)
        W = self.width
        xs = ids % W - self.n + self.origin[0]
        ys = ids // W - self.n + self.origin[1]
        return np.stack([xs, ys], axis=1)

    def boundary(self):
        """Vertices with at least one coordinate at distance n from the centre."""
        W = self.width
        ids = np.arange(W * W)
        c = self.coords(ids) - np.asarray(self.origin)
        on = np.max(np.abs(c), axis=1) == self.n
        return [tuple(v) for v in (c[on] + np.asarray(self.origin))]


def _edge_mask(W):
    exists = np.ones((W, W, 2), dtype=bool)
    exists[:, W - 1, 0] = False  # no east edge on the last column
    exists[W - 1, :, 1] = False  # no north edge on the last row
    return exists


@dataclass(frozen=True, eq=False)
class PercolationSample:
    """Open-edge indicators of a bond configuration on a box.

    ``east[r * W + c]`` is the edge from grid cell (c, r) to (c+1, r) and
    ``north[r * W + c]`` the edge to (c, r+1).
    """

    region: BoxRegion
    p: float
    seed: int
    east: np.ndarray = field(repr=False)
    north: np.ndarray = field(repr=False)

    @property
    def width(self):
        return self.region.width

    def num_open(self):
        return int(self.east.sum() + self.north.sum())

    def stream_bits(self):
        """Open indicators in the documented stream order."""
        W = self.width
        both = np.stack([self.east.reshape(W, W), self.north.reshape(W, W)], axis=2)
        return both[_edge_mask(W)]

    def open_edges(self):
        """List of open edges as pairs of lattice points."""
        W = self.width
        out = []
        for arr, step in ((self.east, (1, 0)), (self.north, (0, 1))):
            ids = np.flatnonzero(arr)
            for (x, y) in self.region.coords(ids):
                out.append(((int(x), int(y)), (int(x) + step[0], int(y) + step[1])))
        return out

    def is_open(self, u, v):
        (x1, y1), (x2, y2) = u, v
        if abs(x1 - x2) + abs(y1 - y2) != 1:
            return False
        if not (self.region.contains(u) and self.region.contains(v)):
            return False
        if x2 < x1 or y2 < y1:
            u, v = v, u
        gid = self.region.grid_id(u)
        return bool(self.east[gid] if u[1] == v[1] else self.north[gid])

    def __eq__(self, other):
        if not isinstance(other, PercolationSample):
            return NotImplemented
        return (
            self.region == other.region
            and self.p == other.p
            and self.seed == other.seed
            and np.array_equal(self.east, other.east)
            and np.array_equal(self.north, other.north)
        )

    __hash__ = None


def sample_bond_config(region, p, seed):
    """Sample bond percolation with parameter ``p`` on ``region``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    W = region.width
    exists = _edge_mask(W)
    u = np.ones((W, W, 2))
    u[exists] = np.random.default_rng(seed).random(region.num_edges)
    open_ = u < p
    return PercolationSample(
        region=region,
        p=float(p),
        seed=int(seed),
        east=np.ascontiguousarray(open_[:, :, 0].reshape(-1)),
        north=np.ascontiguousarray(open_[:, :, 1].reshape(-1)),
    )


@dataclass(frozen=True, eq=False)
class RootedCluster:
    """A connected open cluster with a distinguished root.

    Vertices are stored as integer coordinates ``coords[i]``; adjacency is
    CSR over the local indices.  ``region`` is the box the cluster was cut
    from, expressed in the cluster's own coordinates (after any
    translation of the root to the origin).
    """

    coords: np.ndarray = field(repr=False)
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    root: int
    provenance: str
    region: BoxRegion
    attempts: int = 0
    sample_seed: int = -1

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if len(self.coords) < 2:
            raise ValueError("a rooted cluster needs at least one edge")
        lo = self.coords.min(axis=0)
        hi = self.coords.max(axis=0)
        grid = np.full((hi[0] - lo[0] + 1, hi[1] - lo[1] + 1), -1, dtype=np.int64)
        grid[self.coords[:, 0] - lo[0], self.coords[:, 1] - lo[1]] = np.arange(len(self.coords))
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_grid", grid)

    def __len__(self):
        return len(self.coords)

    @property
    def xs(self):
        return self.coords[:, 0]

    @property
    def ys(self):
        return self.coords[:, 1]

    @property
    def root_vertex(self):
        return tuple(int(c) for c in self.coords[self.root])

    @property
    def vertices(self):
        return {tuple(int(c) for c in v) for v in self.coords}

    @property
    def degrees(self):
        return np.diff(self.indptr)

    def neighbors(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    @cached_property
    def reverse(self):
        """Position of the reverse half-edge of every CSR entry."""
        return K.reverse_edges(self.indptr, self.indices)

    def adjacency(self):
        """Neighbour lists keyed by coordinate."""
        out = {}
        for i, v in enumerate(self.coords):
            out[(int(v[0]), int(v[1]))] = [tuple(int(c) for c in self.coords[j]) for j in self.neighbors(i)]
        return out

    def index_of(self, v):
        """Local index of lattice point ``v`` or -1 if absent."""
        x, y = int(v[0]) - self._lo[0], int(v[1]) - self._lo[1]
        if 0 <= x < self._grid.shape[0] and 0 <= y < self._grid.shape[1]:
            return int(self._grid[x, y])
        return -1

    def indices_of(self, xs, ys):
        xs = np.asarray(xs) - self._lo[0]
        ys = np.asarray(ys) - self._lo[1]
        ok = (xs >= 0) & (xs < self._grid.shape[0]) & (ys >= 0) & (ys < self._grid.shape[1])
        out = np.full(xs.shape, -1, dtype=np.int64)
        out[ok] = self._grid[xs[ok], ys[ok]]
        return out

    def __contains__(self, v):
        return self.index_of(v) >= 0

    def resolve(self, v):
        """Accept a lattice point or a local index; return the local index."""
        if isinstance(v, (int, np.integer)):
            if not 0 <= v < len(self):
                raise ValueError(f"index {v} out of range")
            return int(v)
        i = self.index_of(v)
        if i < 0:
            raise ValueError(f"vertex {tuple(v)} is not in the cluster")
        return i

    def touches_box_boundary(self):
        """Mask of vertices on the boundary of the box the cluster was cut from."""
        c = self.coords - np.asarray(self.region.origin)
        return np.max(np.abs(c), axis=1) == self.region.n


def _cluster_from_ids(sample, ids, root_id, provenance, translate=False, attempts=0):
    indptr, indices = K.grid_csr(sample.east, sample.north, sample.width, ids)
    coords = sample.region.coords(ids)
    root = int(np.flatnonzero(ids == root_id)[0])
    region = sample.region
    if translate:
        shift = coords[root].copy()
        coords = coords - shift
        region = BoxRegion(region.n, (region.origin[0] - shift[0], region.origin[1] - shift[1]))
    return RootedCluster(
        coords=coords,
        indptr=indptr,
        indices=indices,
        root=root,
        provenance=provenance,
        region=region,
        attempts=attempts,
        sample_seed=sample.seed,
    )


def open_cluster(sample, v, provenance=CONDITIONED):
    """Open cluster of ``v`` rooted at ``v``; None when ``v`` is isolated."""
    gid = sample.region.grid_id(v)
    ids = K.grid_component(sample.east, sample.north, sample.width, gid)
    if len(ids) < 2:
        return None
    return _cluster_from_ids(sample, ids, gid, provenance)


def largest_cluster(sample, translate=False):
    """Largest open cluster with a uniformly random root.

    Ties go to the component holding the lexicographically smallest
    vertex.  The root is drawn from ``derive_seed(sample.seed, ["root"])``.
    """
    if sample.num_open() == 0:
        raise EmptySampleError("sample has no open edges")
    W = sample.width
    labels, sizes = K.grid_labels(sample.east, sample.north, W)
    best = sizes.max()
    cands = np.flatnonzero(sizes == best)
    if len(cands) > 1:
        gids = np.arange(W * W)
        # lexicographic key (x, y) on grid cells
        key = (gids % W) * W + gids // W
        mins = np.full(len(sizes), np.iinfo(np.int64).max)
        np.minimum.at(mins, labels, key)
        lab = cands[np.argmin(mins[cands])]
    else:
        lab = cands[0]
    ids = np.flatnonzero(labels == lab)
    rng = np.random.default_rng(derive_seed(sample.seed, ["root"]))
    root_id = ids[rng.integers(len(ids))]
    return _cluster_from_ids(sample, ids, root_id, LARGEST, translate=translate)


def reaches_boundary(sample, v=(0, 0)):
    gid = sample.region.grid_id(v)
    ids = K.grid_component(sample.east, sample.north, sample.width, gid)
    c = sample.region.coords(ids) - np.asarray(sample.region.origin)
    return bool(np.max(np.abs(c)) == sample.region.n), ids


def iic_approximant(n, flavor, seed, max_attempts=DEFAULT_REJECTION_CAP, p=0.5):
    """Finite-box approximant of the incipient infinite cluster.

    ``largest-cluster``: largest cluster of S(n) with a uniform root,
    translated so the root is the origin.  ``origin-arm-conditioned``:
    configurations are resampled until the origin's cluster reaches the
    boundary of S(n); the root is the origin.  Attempt ``a`` uses the
    sample seed ``derive_seed(seed, ["iic", a])``.
    """
    flavor = _FLAVOR_ALIASES.get(flavor, flavor)
    if flavor not in PROVENANCES:
        raise ValueError(f"unknown flavor {flavor!r}")
    if n < 4:
        raise ValueError("approximants need n >= 4")
    region = BoxRegion(n)
    origin = region.grid_id((0, 0))
    for a in range(max_attempts):
        sample = sample_bond_config(region, p, derive_seed(seed, ["iic", a]))
        if flavor == LARGEST:
            if sample.num_open() == 0:
                continue
            cl = largest_cluster(sample, translate=True)
            return _with_attempts(cl, a)
        hit, ids = reaches_boundary(sample)
        if hit:
            return _cluster_from_ids(sample, ids, origin, CONDITIONED, attempts=a)
    raise RejectionBudgetExceeded(max_attempts)


def _with_attempts(cl, a):
    return RootedCluster(
        coords=cl.coords,
        indptr=cl.indptr,
        indices=cl.indices,
        root=cl.root,
        provenance=cl.provenance,
        region=cl.region,
        attempts=a,
        sample_seed=cl.sample_seed,
    )


# -- serialization -----------------------------------------------------------

MAGIC = b"IICS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIdQqq")


def dump_sample(sample, path):
    """Write ``path`` (binary) and ``path + '.json'`` (header sidecar).

    Binary layout, little endian: magic ``IICS``, u16 version, u32 n,
    f64 p, u64 seed, i64 origin x, i64 origin y, then the open indicators
    in stream order packed 8 per byte, most significant bit first.
    """
    r = sample.region
    bits = np.packbits(sample.stream_bits())
    blob = _HEADER.pack(MAGIC, FORMAT_VERSION, r.n, sample.p, sample.seed, r.origin[0], r.origin[1])
    blob += bits.tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)
    header = {
        "format": "iiclab-sample",
        "version": FORMAT_VERSION,
        "n": r.n,
        "origin": list(r.origin),
        "p": sample.p,
        "seed": sample.seed,
        "num_edges": r.num_edges,
        "num_open": sample.num_open(),
        "stream_order": "row-major vertices (y then x), east edge before north edge",
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(header, fh, indent=2)
    return header


def load_sample(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, version, n, p, seed, ox, oy = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"{path}: not an iiclab sample")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    region = BoxRegion(n, (ox, oy))
    W = region.width
    bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size))
    bits = bits[: region.num_edges].astype(bool)
    grid = np.zeros((W, W, 2), dtype=bool)
    grid[_edge_mask(W)] = bits
    return PercolationSample(
        region=region,
        p=p,
        seed=seed,
        east=np.ascontiguousarray(grid[:, :, 0].reshape(-1)),
        north=np.ascontiguousarray(grid[:, :, 1].reshape(-1)),
    )
