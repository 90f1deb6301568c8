"""Chemical and vertex-weighted path metrics on clusters, and the
conformal weights built from deep-patch backbones.

An edge {x, y} has length (w(x) + w(y)) / 2, so a path v_0..v_m has
length sum w(v_i) minus half of w(v_0) + w(v_m).
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .backbone import _family_groups, _ratio_se, deep_backbone_union
from .covering import CoveringSystem
from .fitting import InsufficientDataError, _interval, _wls
from .seeding import derive_seed

MIXTURE_NORM = 6 / np.pi**2


class WeightInvariantError(ValueError):
    """A weight is negative or not finite."""


class DegenerateNormalizationError(ValueError):
    """A normalising probability estimate is zero."""


@dataclass(eq=False)
class WeightField:
    """Nonnegative vertex weights on a cluster.

    ``record`` notes how the field was built, including the
    normalising estimates it used.
    """

    cluster: object = field(repr=False)
    weight: np.ndarray = field(repr=False)
    kind: str = "custom"
    record: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=float)
        if w.shape != (len(self.cluster),):
            raise ValueError("one weight per cluster vertex is required")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise WeightInvariantError("weights must be finite and nonnegative")
        self.weight = w

    def second_moment(self):
        """E[w(X0)^2] with X0 drawn proportionally to degree."""
        deg = self.cluster.degrees
        return float((deg * self.weight**2).sum() / deg.sum())

    @property
    def support(self):
        return self.weight > 0

    def scaled(self, c):
        return WeightField(self.cluster, c * self.weight, self.kind, dict(self.record, scaled=c))


def constant_weight(cluster, c=1.0):
    return WeightField(cluster, np.full(len(cluster), float(c)), "constant", {"value": c})


def indicator_weight(cluster, mask, p, kind="indicator"):
    """1_A / sqrt(p) for a vertex mask A."""
    if not p > 0:
        raise DegenerateNormalizationError(f"normalising probability must be positive, got {p}")
    if p > 1:
        raise ValueError(f"normalising probability must be at most 1, got {p}")
    mask = np.asarray(mask, dtype=bool)
    return WeightField(cluster, mask / np.sqrt(p), kind, {"p": p})


def _weights(cluster, omega):
    w = omega.weight if isinstance(omega, WeightField) else np.asarray(omega, dtype=float)
    if w.shape != (len(cluster),):
        raise ValueError("one weight per cluster vertex is required")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise WeightInvariantError("negative or non-finite weight")
    return w


def chemical_distances(cluster, source):
    """Graph distances from ``source`` (a vertex or local index)."""
    s = cluster.resolve(source)
    allowed = np.ones(len(cluster), dtype=bool)
    return K.bfs(cluster.indptr, cluster.indices, np.array([s]), allowed)


def weighted_distances(cluster, omega, source):
    """Shortest-path lengths under the weight's edge lengths."""
    s = cluster.resolve(source)
    w = _weights(cluster, omega)
    return K.dijkstra_vertex_weights(cluster.indptr, cluster.indices, w, s)


# -- weights built from the covering ------------------------------------------


def scale_weight(cluster, system, k, eps, p_hat, union=None):
    """Indicator of the scale-k deep-backbone union over sqrt(p_hat)."""
    if union is None:
        union, _ = deep_backbone_union(cluster, system, k, eps)
    f = indicator_weight(cluster, union, p_hat, kind="scale")
    f.record.update(k=k, eps=eps)
    return f


def mixture_weight(fields):
    """sqrt((6/pi^2) sum_j w_j^2 / j^2) from a mapping scale index j -> field."""
    items = sorted(fields.items())
    if not items:
        raise ValueError("need at least one scale")
    cl = items[0][1].cluster
    acc = np.zeros(len(cl))
    for j, f in items:
        if f.cluster is not cl:
            raise ValueError("fields live on different clusters")
        if j < 1:
            raise ValueError("scale indices start at 1")
        acc += f.weight**2 / j**2
    return WeightField(cl, np.sqrt(MIXTURE_NORM * acc), "mixture", {"scales": [j for j, _ in items]})


def large_patch_union(cluster, system, k, c4, dprime):
    """Union of the scale-k patches holding at least c4 * 2^(k d') cluster vertices."""
    thr = c4 * 2.0 ** (k * dprime)
    mask = np.zeros(len(cluster), dtype=bool)
    for sigma in system._families(k):
        order, starts, _, _, _ = _family_groups(cluster, system, k, sigma)
        sizes = np.diff(starts)
        for g in np.flatnonzero(sizes >= thr):
            mask[order[starts[g] : starts[g + 1]]] = True
    return mask


def hybrid_weight(cluster, system, k, eps, p_hat, q_hat, c4, dprime):
    """sqrt((w^2 + w1^2) / 2) with w the scale weight and w1 the
    large-patch indicator over sqrt(q_hat)."""
    if dprime >= 2:
        raise ValueError("d' must be below the lattice dimension 2")
    if c4 <= 0:
        raise ValueError("c4 must be positive")
    if not q_hat > 0 or not p_hat > 0:
        raise DegenerateNormalizationError("normalising probabilities must be positive")
    union, _ = deep_backbone_union(cluster, system, k, eps)
    large = large_patch_union(cluster, system, k, c4, dprime)
    w = union / np.sqrt(p_hat)
    w1 = large / np.sqrt(q_hat)
    rec = {"k": k, "eps": eps, "p": p_hat, "q": q_hat, "c4": c4, "dprime": dprime}
    return WeightField(cluster, np.sqrt((w**2 + w1**2) / 2), "hybrid", rec)


def large_patch_density(clusters, k, c4, dprime, seed=0, convention="dyadic"):
    """Degree-biased probability of lying in a large scale-k patch, pooled."""
    num = np.zeros(len(clusters))
    den = np.zeros(len(clusters))
    for a, cl in enumerate(clusters):
        system = CoveringSystem.random(k, derive_seed(seed, ["cover", a]), convention)
        m = large_patch_union(cl, system, k, c4, dprime)
        num[a] = cl.degrees[m].sum()
        den[a] = cl.degrees.sum()
    return float(num.sum() / den.sum()), _ratio_se(num, den)


# -- distance lower bound -------------------------------------------------------


def sample_pairs(cluster, sources, per_source, rng, floor=8):
    """Pairs (source, target) with targets spread log-uniformly in chemical
    distance from ``floor`` to the largest distance available."""
    out = []
    for s in sources:
        d = chemical_distances(cluster, int(s))
        top = d.max()
        if top < floor:
            continue
        for _ in range(per_source):
            level = int(round(floor * (top / floor) ** rng.random()))
            cand = np.flatnonzero(d == level)
            if len(cand):
                out.append((int(s), int(cand[rng.integers(len(cand))])))
    return out


@dataclass
class DistanceFit:
    slope: float
    intercept: float
    slope_se: float
    ci: tuple
    exponent: float
    c_best: float
    violation_fraction: float
    pairs: int
    zero_pairs: int
    floor: int
    floor_sensitivity: dict = field(default_factory=dict)

    def to_dict(self):
        d = dict(self.__dict__)
        d["ci"] = list(self.ci)
        d["floor_sensitivity"] = {str(k): v for k, v in self.floor_sensitivity.items()}
        return d


def fit_distance_lowerbound(dG, dw, delta=0.0, floor=8, units=None, bootstrap=1000, seed=0, level=0.95):
    """Regress log dist_w on log dist_G over pairs with dist_G >= floor.

    Pairs with dist_w = 0 are dropped and counted.  ``c_best`` is the
    least-squares constant at the fixed exponent 1 + delta, and the
    violation fraction counts pairs with dist_w < c_best dist_G^(1+delta).
    The interval resamples ``units`` (e.g. cluster ids) when given,
    otherwise pairs.
    """
    dG = np.asarray(dG, dtype=float)
    dw = np.asarray(dw, dtype=float)
    units = np.zeros(len(dG), dtype=np.int64) if units is None else np.asarray(units)
    far = dG >= floor
    zero = far & ~(dw > 0)
    use = far & (dw > 0)
    if use.sum() < 10:
        raise InsufficientDataError(f"only {int(use.sum())} usable pairs")
    lx, ly, un = np.log(dG[use]), np.log(dw[use]), units[use]
    ones = np.ones(len(lx))
    slope, intercept, se, _ = _wls(lx, ly, ones)
    expo = 1.0 + delta
    logc = float(np.mean(ly - expo * lx))
    c = float(np.exp(logc))
    viol = float(np.mean(dw[use] < c * dG[use] ** expo * (1 - 1e-9)))
    rng = np.random.default_rng(seed)
    labels = np.unique(un)
    boots = []
    for _ in range(bootstrap):
        if len(labels) > 1:
            pick = rng.choice(labels, size=len(labels))
            idx = np.concatenate([np.flatnonzero(un == u) for u in pick])
        else:
            idx = rng.integers(len(lx), size=len(lx))
        if np.ptp(lx[idx]) == 0:
            continue
        boots.append(_wls(lx[idx], ly[idx], np.ones(len(idx)))[0])
    lo, hi = _interval(np.array(boots), level) if boots else (slope, slope)
    sens = {}
    for f in sorted({max(1, floor // 2), floor, 2 * floor}):
        m = (dG >= f) & (dw > 0)
        if m.sum() >= 10 and np.ptp(np.log(dG[m])) > 0:
            sens[f] = float(_wls(np.log(dG[m]), np.log(dw[m]), np.ones(m.sum()))[0])
    return DistanceFit(
        slope=float(slope),
        intercept=float(intercept),
        slope_se=float(se),
        ci=(min(lo, slope), max(hi, slope)),
        exponent=expo,
        c_best=c,
        violation_fraction=viol,
        pairs=int(use.sum()),
        zero_pairs=int(zero.sum()),
        floor=floor,
        floor_sensitivity=sens,
    )


def pair_distances(cluster, omega, pairs):
    """Chemical and weighted distances for a list of (source, target) pairs."""
    by_src = {}
    for pos, (s, t) in enumerate(pairs):
        by_src.setdefault(cluster.resolve(s), []).append((pos, cluster.resolve(t)))
    dG = np.empty(len(pairs))
    dw = np.empty(len(pairs))
    for s, items in by_src.items():
        pos, ts = np.array(items).T
        dG[pos] = chemical_distances(cluster, s)[ts]
        dw[pos] = weighted_distances(cluster, omega, s)[ts]
    return dG, dw


def verify_distance_lowerbound(cluster, omega, pairs, delta=0.0, floor=8, **kw):
    dG, dw = pair_distances(cluster, omega, pairs)
    return fit_distance_lowerbound(dG, dw, delta, floor, **kw)
