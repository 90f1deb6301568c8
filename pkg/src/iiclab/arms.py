"""Disjoint-path tests and one-/two-arm events of the origin."""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .fitting import InsufficientDataError, fit_loglog
from .lattice import BoxRegion, sample_bond_config
from .seeding import derive_seed


def vertex_mask(cluster, which, default):
    """Boolean mask over cluster vertices from a mask, a vertex iterable,
    or a region object exposing ``contains_many(xs, ys)``."""
    n = len(cluster)
    if which is None:
        return np.full(n, default, dtype=bool)
    if hasattr(which, "contains_many"):
        return np.asarray(which.contains_many(cluster.xs, cluster.ys), dtype=bool)
    if isinstance(which, np.ndarray) and which.dtype == bool:
        if which.shape != (n,):
            raise ValueError("mask length must match the cluster")
        return which.copy()
    mask = np.zeros(n, dtype=bool)
    for v in which:
        i = cluster.index_of(v)
        if i >= 0:
            mask[i] = True
    return mask


def two_disjoint_paths(cluster, v, targets, allowed=None):
    """True iff two paths join ``v`` to ``targets``, sharing only ``v``.

    Each path stops at its first target; the two endpoints are distinct.
    Intermediate vertices must lie in ``allowed`` (a mask, a vertex set,
    or a region); targets may lie anywhere.
    """
    s = cluster.resolve(v)
    tmask = vertex_mask(cluster, targets, False)
    tmask[s] = False
    if not tmask.any():
        return False
    amask = vertex_mask(cluster, allowed, True)
    flow = K.disjoint_path_flow(cluster.indptr, cluster.indices, cluster.reverse, s, tmask, amask, 2)
    return flow >= 2


def _check_radii(region, radii):
    for n in radii:
        if n < 1:
            raise ValueError("radii must be positive")
        for cx in (-n, n):
            for cy in (-n, n):
                if not region.contains((cx, cy)):
                    raise ValueError(f"S({n}) does not fit in {region}")


def arm_events(sample, radii):
    """One-arm and two-arm indicators of the origin for each radius.

    one-arm(n): the origin's open cluster meets the boundary of S(n).
    two-arm(n): two open paths from the origin to that boundary, sharing
    only the origin.  The two are computed independently.
    """
    radii = [int(n) for n in radii]
    _check_radii(sample.region, radii)
    one = np.zeros(len(radii), dtype=bool)
    two = np.zeros(len(radii), dtype=bool)
    gid = sample.region.grid_id((0, 0))
    ids = K.grid_component(sample.east, sample.north, sample.width, gid)
    if len(ids) < 2:
        return one, two
    indptr, indices = K.grid_csr(sample.east, sample.north, sample.width, ids)
    rev = K.reverse_edges(indptr, indices)
    c = sample.region.coords(ids)
    norm = np.maximum(np.abs(c[:, 0]), np.abs(c[:, 1]))
    reach = norm.max()
    for a, n in enumerate(radii):
        one[a] = reach >= n
        # ids[0] is the origin
        two[a] = K.disjoint_path_flow(indptr, indices, rev, 0, norm == n, norm < n, 2) >= 2
    return one, two


def one_arm(sample, n):
    return bool(arm_events(sample, [n])[0][0])


def two_arm(sample, n):
    return bool(arm_events(sample, [n])[1][0])


@dataclass
class ArmStats:
    radii: np.ndarray
    trials: int
    one: np.ndarray
    two: np.ndarray
    violations: int = 0
    p: float = 0.5
    seed: int = 0
    eta1: object = None
    eta21: object = None
    flagged: list = field(default_factory=list)

    @property
    def pi1(self):
        return self.one / self.trials

    @property
    def pi2(self):
        return self.two / self.trials

    @property
    def se1(self):
        return np.sqrt(self.pi1 * (1 - self.pi1) / self.trials)

    @property
    def se2(self):
        return np.sqrt(self.pi2 * (1 - self.pi2) / self.trials)

    def merge(self, other):
        if not np.array_equal(self.radii, other.radii):
            raise ValueError("radii differ")
        return ArmStats(
            self.radii,
            self.trials + other.trials,
            self.one + other.one,
            self.two + other.two,
            self.violations + other.violations,
            self.p,
            self.seed,
        )

    def bound_z(self):
        """Standardised excess of pi2 over 16 pi1^2 per radius (<= 3 passes)."""
        excess = self.pi2 - 16 * self.pi1**2
        sd = np.sqrt(self.se2**2 + (32 * self.pi1 * self.se1) ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(sd > 0, excess / sd, np.where(excess > 0, np.inf, 0.0))

    def scaled_trend(self):
        """Slope and standard error of log(pi1 sqrt n) against log n."""
        ok = self.one > 0
        lx = np.log(self.radii[ok].astype(float))
        ly = np.log(self.pi1[ok] * np.sqrt(self.radii[ok]))
        w = (self.pi1[ok] / self.se1[ok]) ** 2
        mx = (w * lx).sum() / w.sum()
        sxx = (w * (lx - mx) ** 2).sum()
        slope = (w * (lx - mx) * (ly - (w * ly).sum() / w.sum())).sum() / sxx
        # statistical (not residual) error: the inputs carry known variances
        return float(slope), float(np.sqrt(1.0 / sxx))

    def fit(self, bootstrap=1000, seed=0):
        """Fit the one-arm exponent and the two-to-one arm ratio exponent."""
        self.flagged = [int(n) for n, c in zip(self.radii, self.two) if c == 0]
        ok = self.two > 0
        r = self.radii[ok].astype(float)
        try:
            f1 = fit_loglog(r, self.pi1[ok], self.se1[ok], bootstrap=bootstrap, seed=seed)
            f1.exponent, f1.exponent_ci, f1.kind = -f1.slope, (-f1.ci[1], -f1.ci[0]), "eta1"
            ratio = self.pi2[ok] / self.pi1[ok]
            rel = np.sqrt((self.se2[ok] / self.pi2[ok]) ** 2 + (self.se1[ok] / self.pi1[ok]) ** 2)
            f21 = fit_loglog(r, ratio, ratio * rel, bootstrap=bootstrap, seed=seed + 1)
            f21.exponent, f21.exponent_ci, f21.kind = -f21.slope, (-f21.ci[1], -f21.ci[0]), "eta21"
        except InsufficientDataError:
            f1 = f21 = None
        self.eta1, self.eta21 = f1, f21
        return self

    def rows(self):
        for a, n in enumerate(self.radii):
            yield {
                "n": int(n),
                "trials": int(self.trials),
                "one_arm": int(self.one[a]),
                "two_arm": int(self.two[a]),
                "pi1": float(self.pi1[a]),
                "pi1_se": float(self.se1[a]),
                "pi2": float(self.pi2[a]),
                "pi2_se": float(self.se2[a]),
            }


def arm_counts(radii, trial_ids, seed, p=0.5, box=None):
    """Success counts over the given trial indices.

    Trial ``t`` uses one sample on S(box) with seed
    ``derive_seed(seed, ["arms", t])``, shared across all radii; the
    arm events at radius n only read edges inside S(n).
    """
    radii = np.asarray(sorted(int(n) for n in radii))
    region = BoxRegion(int(box or radii.max()))
    one = np.zeros(len(radii), dtype=np.int64)
    two = np.zeros(len(radii), dtype=np.int64)
    bad = 0
    count = 0
    for t in trial_ids:
        s = sample_bond_config(region, p, derive_seed(seed, ["arms", int(t)]))
        o, w = arm_events(s, radii)
        one += o
        two += w
        bad += int(np.sum(w & ~o))
        count += 1
    return ArmStats(radii, count, one, two, bad, p, seed)


def estimate_arms(radii, trials, seed, p=0.5, bootstrap=1000):
    stats = arm_counts(radii, range(trials), seed, p)
    return stats.fit(bootstrap=bootstrap, seed=seed)
