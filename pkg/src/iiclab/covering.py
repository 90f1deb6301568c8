"""Multiscale square coverings of Z^2 with random shifts.

At scale k the covering is the union of four families, one per tag
sigma in {0,1}^2.  Family sigma tiles the plane with half-open squares

    [cx, cx + L) x [cy, cy + L),  cx = a_k + sigma_x * L/2 + i * L,
                                  cy = b_k + sigma_y * L/2 + j * L,

where L = 2^k is the side (``convention="dyadic"``) and (a_k, b_k) is a
uniform shift in [0, 2^(k-1))^2 drawn independently per scale.  With
``convention="half"`` the side is 2^(k-1) and the family offset 2^(k-2)
(rounded down); see ``side_for``.

Patches are never materialised: membership, intersection and margins
are arithmetic.
"""
from dataclasses import dataclass

import numpy as np

from .seeding import derive_seed

SIGMAS = ((0, 0), (1, 0), (0, 1), (1, 1))
CONVENTIONS = ("dyadic", "half")


def side_for(k, convention="dyadic"):
    return 2**k if convention == "dyadic" else 2 ** (k - 1)


def family_offset(k, convention="dyadic"):
    return side_for(k, convention) // 2


@dataclass(frozen=True)
class Patch:
    k: int
    corner: tuple
    side: int
    sigma: tuple = (0, 0)

    def contains(self, v):
        x, y = v
        cx, cy = self.corner
        return cx <= x < cx + self.side and cy <= y < cy + self.side

    def contains_many(self, xs, ys):
        cx, cy = self.corner
        return (xs >= cx) & (xs < cx + self.side) & (ys >= cy) & (ys < cy + self.side)

    def margin(self, v):
        """Largest r with the L1 ball B(v, r) inside the patch (-1 if v is outside)."""
        if not self.contains(v):
            return -1
        x, y = v
        cx, cy = self.corner
        s = self.side
        return min(x - cx, cx + s - 1 - x, y - cy, cy + s - 1 - y)

    def margins(self, xs, ys):
        cx, cy = self.corner
        s = self.side
        return np.minimum.reduce([xs - cx, cx + s - 1 - xs, ys - cy, cy + s - 1 - ys])

    def intersects(self, other):
        (ax, ay), (bx, by) = self.corner, other.corner
        return (
            ax < bx + other.side
            and bx < ax + self.side
            and ay < by + other.side
            and by < ay + self.side
        )

    @property
    def diameter(self):
        """Graph (L1) diameter of the vertex set."""
        return 2 * (self.side - 1)

    def vertices(self):
        cx, cy = self.corner
        return [(cx + i, cy + j) for i in range(self.side) for j in range(self.side)]

    def ball_inside(self, v, r):
        """Explicit check that every vertex of the L1 ball B(v, r) is in the patch."""
        d = np.arange(-r, r + 1)
        dx, dy = np.meshgrid(d, d, indexing="ij")
        ball = np.abs(dx) + np.abs(dy) <= r
        return bool(np.all(self.contains_many(v[0] + dx[ball], v[1] + dy[ball])))


class PaddingError(RuntimeError):
    """No padding witness exists (an implementation fault, not an input fault)."""


@dataclass(frozen=True)
class CoveringSystem:
    max_scale: int
    shifts: tuple
    seed: int = 0
    convention: str = "dyadic"

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        if len(self.shifts) != self.max_scale:
            raise ValueError("need one shift per scale")
        for k, (a, b) in enumerate(self.shifts, start=1):
            h = 2 ** (k - 1)
            if not (0 <= a < h and 0 <= b < h):
                raise ValueError(f"shift {(a, b)} out of range at scale {k}")

    @classmethod
    def random(cls, max_scale, seed, convention="dyadic"):
        shifts = []
        for k in range(1, max_scale + 1):
            rng = np.random.default_rng(derive_seed(seed, ["shift", k]))
            h = 2 ** (k - 1)
            shifts.append((int(rng.integers(h)), int(rng.integers(h))))
        return cls(max_scale, tuple(shifts), seed, convention)

    @classmethod
    def unshifted(cls, max_scale, convention="dyadic"):
        return cls(max_scale, tuple((0, 0) for _ in range(max_scale)), 0, convention)

    def _check(self, k):
        if not 1 <= k <= self.max_scale:
            raise ValueError(f"scale {k} outside 1..{self.max_scale}")

    def side(self, k):
        return side_for(k, self.convention)

    def family_origin(self, k, sigma):
        a, b = self.shifts[k - 1]
        h = family_offset(k, self.convention)
        return a + sigma[0] * h, b + sigma[1] * h

    def patch(self, k, sigma, i, j):
        ox, oy = self.family_origin(k, sigma)
        L = self.side(k)
        return Patch(k, (ox + i * L, oy + j * L), L, tuple(sigma))

    def tile_index(self, k, sigma, xs, ys):
        """Tile indices (i, j) of the family-sigma patch holding each point."""
        ox, oy = self.family_origin(k, sigma)
        L = self.side(k)
        return np.floor_divide(np.asarray(xs) - ox, L), np.floor_divide(np.asarray(ys) - oy, L)

    def patches_at(self, k, v):
        """The scale-k patches containing v, one per family."""
        self._check(k)
        out = []
        for sigma in SIGMAS:
            i, j = self.tile_index(k, sigma, v[0], v[1])
            out.append(self.patch(k, sigma, int(i), int(j)))
        # coinciding families (possible for the "half" convention at k=1)
        uniq = []
        for p in out:
            if all(p.corner != q.corner for q in uniq):
                uniq.append(p)
        return uniq

    def patches_meeting(self, k, region):
        """All scale-k patches intersecting a box region."""
        self._check(k)
        n, (zx, zy) = region.n, region.origin
        L = self.side(k)
        out = []
        for sigma in self._families(k):
            ox, oy = self.family_origin(k, sigma)
            i0, i1 = (zx - n - ox) // L, (zx + n - ox) // L
            j0, j1 = (zy - n - oy) // L, (zy + n - oy) // L
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    out.append(self.patch(k, sigma, i, j))
        return out

    def _families(self, k):
        if family_offset(k, self.convention) == 0:
            return SIGMAS[:1]
        return SIGMAS

    def neighbour_count(self, patch):
        """Number of other scale-k patches intersecting ``patch``."""
        k = patch.k
        L = self.side(k)
        total = 0
        for sigma in self._families(k):
            ox, oy = self.family_origin(k, sigma)
            cx, cy = patch.corner
            # tiles [o + iL, o + (i+1)L) overlapping [c, c + side)
            nx = (cx + patch.side - 1 - ox) // L - (cx - ox) // L + 1
            ny = (cy + patch.side - 1 - oy) // L - (cy - oy) // L + 1
            total += nx * ny
        return total - 1

    def padding_witness(self, k, v):
        """A scale-k patch containing the L1 ball B(v, 2^(k-2))."""
        self._check(k)
        r = 2 ** (k - 2) if k >= 2 else 0
        best = max(self.patches_at(k, v), key=lambda p: p.margin(v))
        if best.margin(v) < r:
            raise PaddingError(f"no patch at scale {k} contains B({v}, {r})")
        return best


def best_margins(system, k, xs, ys):
    """Largest margin of each point over the scale-k patches holding it."""
    L = system.side(k)
    best = np.full(np.shape(xs), -1, dtype=np.int64)
    for sigma in system._families(k):
        ox, oy = system.family_origin(k, sigma)
        px = ox + np.floor_divide(xs - ox, L) * L
        py = oy + np.floor_divide(ys - oy, L) * L
        m = np.minimum.reduce([xs - px, px + L - 1 - xs, ys - py, py + L - 1 - ys])
        best = np.maximum(best, m)
    return best


def _corners_meeting(system, k, window):
    """Corner arrays of every scale-k patch meeting ``window``."""
    n, (zx, zy) = window.n, window.origin
    L = system.side(k)
    cxs, cys = [], []
    for sigma in system._families(k):
        ox, oy = system.family_origin(k, sigma)
        i = np.arange((zx - n - ox) // L, (zx + n - ox) // L + 1)
        j = np.arange((zy - n - oy) // L, (zy + n - oy) // L + 1)
        I, J = np.meshgrid(i, j, indexing="ij")
        cxs.append((ox + I * L).ravel())
        cys.append((oy + J * L).ravel())
    return np.concatenate(cxs), np.concatenate(cys)


def _neighbour_counts(system, k, cx, cy):
    """Vectorised ``neighbour_count`` for equal-side patches at scale k."""
    L = system.side(k)
    total = np.zeros(len(cx), dtype=np.int64)
    for sigma in system._families(k):
        ox, oy = system.family_origin(k, sigma)
        nx = (cx + L - 1 - ox) // L - (cx - ox) // L + 1
        ny = (cy + L - 1 - oy) // L - (cy - oy) // L + 1
        total += nx * ny
    return total - 1


def verify_multiplicity(system, k, window):
    """Largest number of other patches met by a patch that meets ``window``."""
    system._check(k)
    cx, cy = _corners_meeting(system, k, window)
    return int(_neighbour_counts(system, k, cx, cy).max())


def check_covering(system, k, window, rng, n_padding=10**4, n_explicit=20):
    """Boundedness, coverage, multiplicity and padding checks at one scale.

    Returns a dict of booleans and the observed values.  Boundedness is
    measured in the graph (L1) metric against 2^k.
    """
    L = system.side(k)
    n, (zx, zy) = window.n, window.origin
    xs, ys = np.meshgrid(np.arange(zx - n, zx + n + 1), np.arange(zy - n, zy + n + 1))
    xs, ys = xs.ravel(), ys.ravel()
    covered = np.zeros(xs.shape, dtype=np.int64)
    for sigma in system._families(k):
        ox, oy = system.family_origin(k, sigma)
        i = np.floor_divide(xs - ox, L)
        j = np.floor_divide(ys - oy, L)
        # membership re-derived from the corner, not from the index formula
        cx, cy = ox + i * L, oy + j * L
        covered += ((xs >= cx) & (xs < cx + L) & (ys >= cy) & (ys < cy + L)).astype(np.int64)
    max_diam = 2 * (L - 1)  # every scale-k patch is an L x L square
    mult = verify_multiplicity(system, k, window)
    pick = rng.integers(len(xs), size=n_padding)
    r = 2 ** (k - 2) if k >= 2 else 0
    best = best_margins(system, k, xs[pick], ys[pick])
    pad_fail = int(np.sum(best < r))
    # explicit ball enumeration on a few witnesses
    for t in pick[:n_explicit]:
        v = (int(xs[t]), int(ys[t]))
        try:
            if not system.padding_witness(k, v).ball_inside(v, r):
                pad_fail += 1
        except PaddingError:
            pass
    return {
        "k": k,
        "covered": bool(covered.min() >= 1),
        "max_diameter": int(max_diam),
        "bounded": bool(max_diam <= 2**k),
        "multiplicity": int(mult),
        "multiplicity_ok": bool(mult <= 10),
        "padding_radius": r,
        "padding_failures": int(pad_fail),
        "padded": pad_fail == 0,
    }


def witness_margin_histogram(k, v, n_shifts, seed, convention="dyadic"):
    """Histogram over random shifts of the margin of v in its padding witness."""
    L = side_for(k, convention)
    counts = np.zeros(L // 2 + 1, dtype=np.int64)
    for s in range(n_shifts):
        sys_ = CoveringSystem.random(k, derive_seed(seed, ["stationarity", s]), convention)
        best = max(p.margin(v) for p in sys_.patches_at(k, v))
        counts[best] += 1
    return counts
