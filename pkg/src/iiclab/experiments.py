"""End-to-end evaluators for the acceptance criteria.

Each ``criterion_*`` function runs one check at its stated budget
(overridable for quick runs) and returns a ``CriterionResult``.
"""
from dataclasses import dataclass, field
import time

import numpy as np

from .arms import arm_counts
from .backbone import (
    FLOW,
    BLOCK,
    analyze_patch,
    deep_backbone_union,
    patch_volume_tail,
    root_backbone_frequency,
)
from .covering import CoveringSystem, Patch, check_covering
from .fitting import InsufficientDataError, fit_loglog
from .lattice import (
    CONDITIONED,
    BoxRegion,
    PercolationSample,
    iic_approximant,
    largest_cluster,
    open_cluster,
    sample_bond_config,
)
from . import oracles
from .metrics import fit_distance_lowerbound, mixture_weight, pair_distances, sample_pairs, indicator_weight
from .seeding import derive_seed
from .walk import (
    WalkConfig,
    displacement_ensemble,
    fit_escape_exponents,
    negative_correlation_exact,
    random_conductance_chain,
    random_tree_chain,
)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    soft: bool = False
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else ("SOFT-FAIL" if self.soft else "FAIL")
        return f"[{tag}] criterion {self.number}: {self.title} ({self.seconds:.1f}s) {self.headline()}"

    def headline(self):
        return self.details.get("headline", "")

    def to_dict(self):
        return {
            "number": self.number,
            "title": self.title,
            "passed": bool(self.passed),
            "soft": self.soft,
            "seconds": round(self.seconds, 3),
            "details": _jsonable(self.details),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def _timed(fn):
    def run(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


# -- 1: covering ----------------------------------------------------------------


@_timed
def criterion_covering(k_max=10, shifts=100, window=256, n_padding=10**4, seed=0, convention="dyadic"):
    rng = np.random.default_rng(derive_seed(seed, ["c1"]))
    win = BoxRegion(window)
    fails = {"covered": 0, "bounded": 0, "multiplicity": 0, "padding": 0}
    per_k = {}
    for k in range(1, k_max + 1):
        worst = {"max_diameter": 0, "multiplicity": 0, "padding_failures": 0}
        for s in range(shifts):
            system = CoveringSystem.random(k, derive_seed(seed, ["c1", k, s]), convention)
            r = check_covering(system, k, win, rng, n_padding)
            fails["covered"] += not r["covered"]
            fails["bounded"] += not r["bounded"]
            fails["multiplicity"] += not r["multiplicity_ok"]
            fails["padding"] += r["padding_failures"]
            worst["max_diameter"] = max(worst["max_diameter"], r["max_diameter"])
            worst["multiplicity"] = max(worst["multiplicity"], r["multiplicity"])
            worst["padding_failures"] += r["padding_failures"]
        per_k[k] = dict(worst, bound=2**k)
    ok = sum(fails.values()) == 0
    head = ", ".join(f"{k}={v}" for k, v in fails.items())
    return CriterionResult(1, "covering exactness", ok, details={"failures": fails, "per_k": per_k, "headline": f"failures: {head}"})


# -- 2: backbone oracle -----------------------------------------------------------


def _sample_from_edges(region, open_pairs):
    """Build a sample from an explicit set of open edges (pairs of points)."""
    W = region.width
    east = np.zeros(W * W, dtype=bool)
    north = np.zeros(W * W, dtype=bool)
    for u, v in open_pairs:
        if (v[0], v[1]) < (u[0], u[1]):
            u, v = v, u
        gid = region.grid_id(u)
        if u[1] == v[1]:
            east[gid] = True
        else:
            north[gid] = True
    return PercolationSample(region, 1.0, 0, east, north)


def _box_edges(n):
    out = []
    for x in range(-n, n + 1):
        for y in range(-n, n + 1):
            if x < n:
                out.append(((x, y), (x + 1, y)))
            if y < n:
                out.append(((x, y), (x, y + 1)))
    return out


def ring_patch_configs():
    """All 2^12 settings of the edges inside [-1,1]^2, every other edge of
    S(2) open.  Yields (cluster, patch)."""
    region = BoxRegion(2)
    edges = _box_edges(2)
    inner = [e for e in edges if all(max(abs(c) for c in v) <= 1 for v in e)]
    fixed = [e for e in edges if e not in inner]
    patch = Patch(0, (-1, -1), 3)
    for mask in range(2 ** len(inner)):
        chosen = [e for b, e in enumerate(inner) if mask >> b & 1]
        s = _sample_from_edges(region, fixed + chosen)
        yield open_cluster(s, (-2, -2)), patch


def random_patch_configs(count, seed, side=5, n=4, p=0.5):
    """Seeded side x side patches in largest clusters of S(n) at p."""
    made = 0
    a = 0
    while made < count:
        s = sample_bond_config(BoxRegion(n), p, derive_seed(seed, ["bb5", a]))
        rng = np.random.default_rng(derive_seed(seed, ["bb5-corner", a]))
        a += 1
        if s.num_open() == 0:
            continue
        cl = largest_cluster(s)
        corner = (int(rng.integers(-n, n - side + 2)), int(rng.integers(-n, n - side + 2)))
        patch = Patch(0, corner, side)
        if not patch.contains_many(cl.xs, cl.ys).any():
            continue
        made += 1
        yield cl, patch


def backbone_mismatches(configs, method):
    bad = 0
    total = 0
    for cl, patch in configs:
        total += 1
        got = {tuple(int(c) for c in cl.coords[i]) for i in analyze_patch(cl, patch, method).backbone}
        adj = cl.adjacency()
        inside = {v for v in adj if patch.contains(v)}
        if got != oracles.patch_backbone(adj, inside):
            bad += 1
    return bad, total


@_timed
def criterion_backbone_oracle(n_random=200, seed=0):
    res = {}
    for method in (FLOW, BLOCK):
        res[f"ring3_{method}"] = backbone_mismatches(ring_patch_configs(), method)
        res[f"random5_{method}"] = backbone_mismatches(random_patch_configs(n_random, seed), method)
    bad = sum(v[0] for v in res.values())
    head = "; ".join(f"{k}: {v[0]}/{v[1]} mismatches" for k, v in res.items())
    return CriterionResult(2, "backbone oracle equivalence", bad == 0, details={"mismatches": res, "headline": head})


# -- 3 and 4: arms ----------------------------------------------------------------


def arm_statistics(radii=(8, 16, 32, 64, 128), trials=10**5, seed=0, bootstrap=1000):
    stats = arm_counts(radii, range(trials), derive_seed(seed, ["c3"]))
    return stats.fit(bootstrap=bootstrap, seed=seed)


@_timed
def criterion_arm_inequalities(stats, radii=(8, 16, 32, 64)):
    sel = np.isin(stats.radii, radii)
    z = stats.bound_z()[sel]
    sub = type(stats)(stats.radii[sel], stats.trials, stats.one[sel], stats.two[sel], stats.violations)
    slope, se = sub.scaled_trend()
    a = stats.violations == 0
    b = bool(np.all(z <= 3))
    c = slope >= -2 * se
    det = {
        "violations": stats.violations,
        "pi1": stats.pi1[sel],
        "pi2": stats.pi2[sel],
        "bound_z": z,
        "scaled_slope": slope,
        "scaled_slope_se": se,
        "parts": {"a": a, "b": b, "c": bool(c)},
        "headline": f"violations={stats.violations}, max z={z.max():.2f}, trend slope={slope:.4f}+-{se:.4f}",
    }
    return CriterionResult(3, "arm inequalities", bool(a and b and c), details=det)


@_timed
def criterion_arm_exponents(stats):
    e1, e21 = stats.eta1, stats.eta21
    in_band = 0.07 <= e1.exponent <= 0.14
    pos = e21.exponent_ci[0] > 0
    det = {
        "eta1": e1.exponent,
        "eta1_ci": e1.exponent_ci,
        "eta21": e21.exponent,
        "eta21_ci": e21.exponent_ci,
        "flagged_radii": stats.flagged,
        "headline": f"eta1={e1.exponent:.4f} {tuple(round(v, 4) for v in e1.exponent_ci)}, "
        f"eta21={e21.exponent:.4f} {tuple(round(v, 4) for v in e21.exponent_ci)}",
    }
    return CriterionResult(4, "arm exponents (soft)", bool(in_band and pos), soft=True, details=det)


# -- 5: thin backbones ------------------------------------------------------------


@_timed
def criterion_thin_backbone(samples=2000, n=256, ks=(3, 4, 5, 6, 7), eps=1 / 3, seed=0):
    clusters = (iic_approximant(n, CONDITIONED, derive_seed(seed, ["c5", a])) for a in range(samples))
    hits = np.array([row for row in _root_rows(clusters, ks, eps, seed)])
    N = len(hits)
    pk = hits.mean(axis=0)
    se = np.sqrt(pk * (1 - pk) / N)
    diffs = hits[:, :-1].astype(float) - hits[:, 1:]
    dmean = diffs.mean(axis=0)
    dse = diffs.std(axis=0, ddof=1) / np.sqrt(N)
    strictly = bool(np.all(dmean > 2 * dse))
    sides = 2.0 ** np.array(ks)
    try:
        fit = fit_loglog(sides, pk, se, bootstrap=1000, seed=seed, min_points=4)
        slope = fit.slope
    except (InsufficientDataError, ValueError):
        fit, slope = None, float("nan")
    ok = strictly and slope <= -0.05
    det = {
        "k": list(ks),
        "p_k": pk,
        "se": se,
        "paired_diff": dmean,
        "paired_diff_se": dse,
        "slope": slope,
        "slope_ci": fit.ci if fit else None,
        "samples": N,
        "headline": "p_k=" + ",".join(f"{v:.3f}" for v in pk) + f", slope={slope:.3f}",
    }
    return CriterionResult(5, "thin-backbone decay", ok, details=det)


def _root_rows(clusters, ks, eps, seed):
    for a, cl in enumerate(clusters):
        yield root_backbone_frequency([cl], ks, eps, derive_seed(seed, ["c5-cover", a]))[0][0]


# -- 6: Markov-type algebra ---------------------------------------------------------


@_timed
def criterion_markov_algebra(chains=50, max_states=100, seed=0):
    rng = np.random.default_rng(derive_seed(seed, ["c6"]))
    worst = np.inf
    worst_eig = np.inf
    cases = 0
    for c in range(chains):
        n = int(rng.integers(2, max_states + 1))
        P, pi = random_tree_chain(n, rng) if c % 2 == 0 else random_conductance_chain(n, rng)
        x = rng.normal(size=n)
        for t in range(2, 11):
            r = negative_correlation_exact(P, pi, x, t)
            worst = min(worst, r.value)
            worst_eig = min(worst_eig, r.min_eigenvalue)
            cases += 1
    ok = worst >= -1e-9
    return CriterionResult(
        6, "Markov-type algebra", ok,
        details={"cases": cases, "min_value": worst, "min_eigenvalue": worst_eig, "headline": f"{cases} cases, min form={worst:.3e}"},
    )


# -- 7 and 8: walks -------------------------------------------------------------------


def diffusive_config(walks=1000, n=128, seed=0):
    return WalkConfig(
        n=n, flavor=CONDITIONED, p=1.0, T_grid=tuple(2**e for e in range(6, 13)),
        clusters=1, walks=walks, hit_walks=0, seed=derive_seed(seed, ["c7"]),
    )


@_timed
def criterion_diffusive(walks=1000, n=128, seed=0, bootstrap=1000):
    cfg = diffusive_config(walks, n, seed)
    ens = displacement_ensemble(cfg)
    fits = fit_escape_exponents(ens, bootstrap=bootstrap, seed=seed)
    f = fits["beta_star"]
    half = (f.exponent_ci[1] - f.exponent_ci[0]) / 2
    ok = 1.85 <= f.exponent <= 2.15 and half <= 0.15
    det = {
        "beta_star": f.exponent,
        "ci": f.exponent_ci,
        "half_width": half,
        "censored_fraction": ens.censored_fraction(),
        "headline": f"beta*={f.exponent:.3f} {tuple(round(v, 3) for v in f.exponent_ci)}",
    }
    return CriterionResult(7, "diffusive baseline", ok, details=det)


def subdiffusive_config(clusters=500, walks=4, n=256, seed=0):
    return WalkConfig(
        n=n, flavor=CONDITIONED, p=0.5, T_grid=tuple(2**e for e in range(6, 15)),
        clusters=clusters, walks=walks, hit_walks=walks, seed=derive_seed(seed, ["c8"]),
    )


@_timed
def criterion_subdiffusive(clusters=500, walks=4, n=256, seed=0, bootstrap=1000):
    cfg = subdiffusive_config(clusters, walks, n, seed)
    ens = displacement_ensemble(cfg)
    fits = fit_escape_exponents(ens, bootstrap=bootstrap, seed=seed)
    bs, dwe = fits["beta_star"], fits["dw_euc"]
    # slope of the displacement fit is 2/beta*; its upper bound must be < 0.97
    upper = bs.ci[1]
    ordering = dwe.exponent_ci[1] >= bs.exponent_ci[0]
    ok = upper < 0.97 and ordering
    det = {
        "two_over_beta_star": bs.slope,
        "two_over_beta_star_ci": bs.ci,
        "beta_star": bs.exponent,
        "beta_star_ci": bs.exponent_ci,
        "conjectured": 2 + 12 / 91,
        "dw": fits["dw"].exponent,
        "dw_euc": dwe.exponent,
        "dw_euc_ci": dwe.exponent_ci,
        "beta": fits["beta"].exponent,
        "ordering": fits["ordering"],
        "censored_fraction": ens.censored_fraction(),
        "unhit_fraction_euc": dwe.extra.get("unhit_fraction"),
        "headline": f"2/beta*={bs.slope:.3f} (upper {upper:.3f}), beta*={bs.exponent:.3f} vs 2+12/91=2.132, dw_euc={dwe.exponent:.3f}",
    }
    return CriterionResult(8, "subdiffusivity", ok, details=det)


# -- 9: weighted distances ------------------------------------------------------------


def mixture_ensemble(clusters, scales, eps, seed):
    """Per-cluster unions, pooled degree-biased densities and mixture weights.

    Scales whose pooled density is zero carry the zero field and are
    dropped from the mixture.
    """
    unions = []
    num = {j: 0.0 for j in scales}
    den = 0.0
    for a, cl in enumerate(clusters):
        system = CoveringSystem.random(max(scales), derive_seed(seed, ["cover", a]))
        u = {j: deep_backbone_union(cl, system, j, eps)[0] for j in scales}
        unions.append(u)
        deg = cl.degrees
        den += deg.sum()
        for j in scales:
            num[j] += deg[u[j]].sum()
    p_hat = {j: num[j] / den for j in scales}
    kept = [j for j in scales if p_hat[j] > 0]
    weights = []
    for cl, u in zip(clusters, unions):
        weights.append(mixture_weight({j: indicator_weight(cl, u[j], p_hat[j]) for j in kept}))
    return weights, p_hat, kept


@_timed
def criterion_distance_lowerbound(clusters=100, n=256, scales=(1, 2, 3, 4, 5, 6), eps=0.25, sources=10, per_source=12, floor=8, seed=0, bootstrap=1000):
    cls = [iic_approximant(n, CONDITIONED, derive_seed(seed, ["c9", a])) for a in range(clusters)]
    weights, p_hat, kept = mixture_ensemble(cls, scales, eps, derive_seed(seed, ["c9-cover"]))
    dG, dw, units = [], [], []
    for a, (cl, om) in enumerate(zip(cls, weights)):
        rng = np.random.default_rng(derive_seed(seed, ["c9-pairs", a]))
        pairs = sample_pairs(cl, rng.choice(len(cl), size=sources, replace=False), per_source, rng, floor)
        g, w = pair_distances(cl, om, pairs)
        dG.append(g)
        dw.append(w)
        units.append(np.full(len(g), a))
    fit = fit_distance_lowerbound(np.concatenate(dG), np.concatenate(dw), 0.0, floor, np.concatenate(units), bootstrap, seed)
    moment = float(np.mean([w.second_moment() for w in weights]))
    ok = fit.ci[0] > 1 and fit.pairs >= 10**4
    det = dict(fit.to_dict(), p_hat=p_hat, scales_used=kept, second_moment=moment,
               headline=f"slope={fit.slope:.4f} ci=({fit.ci[0]:.4f}, {fit.ci[1]:.4f}) over {fit.pairs} pairs")
    return CriterionResult(9, "weighted-metric lower bound", ok, details=det)


# -- 10: volume tail --------------------------------------------------------------------


@_timed
def criterion_volume_tail(samples=10**4, q=32, n=64, lambdas=(2, 4, 8), pi1_trials=10**4, seed=0):
    stats = arm_counts([q], range(pi1_trials), derive_seed(seed, ["c10-arms"]))
    pi1 = float(stats.pi1[0])
    ens = [iic_approximant(n, CONDITIONED, derive_seed(seed, ["c10", a])) for a in range(samples)]
    res = patch_volume_tail(ens, q, lambdas, pi1, seed=derive_seed(seed, ["c10-shift"]))
    tail = res["tail"]
    pos = tail > 0
    if pos.sum() >= 2:
        lx, ly = np.log(np.asarray(lambdas, dtype=float)[pos]), np.log(tail[pos])
        slope = float(np.polyfit(lx, ly, 1)[0])
    else:
        slope = float("nan")
    ok = bool(slope <= -2)
    # below lambda = 1/pi1 the event can occur at all; report that range too
    diag_l = np.array([0.25, 0.5, 1.0, 1.25, 1.5])
    diag = patch_volume_tail(ens, q, diag_l, pi1, seed=derive_seed(seed, ["c10-shift"]))
    det = {
        "pi1": pi1,
        "lambdas": list(lambdas),
        "tail": tail,
        "se": res["se"],
        "slope": slope,
        "max_volume": int(res["volumes"].max()),
        "volume_cap": q * q,
        "thresholds": [lam * q * q * pi1 for lam in lambdas],
        "diagnostic": {"lambdas": diag_l, "tail": diag["tail"]},
        "headline": "tails=" + ",".join(f"{v:.4g}" for v in tail) + f", slope={slope}",
    }
    return CriterionResult(10, "volume tail", ok, details=det)


QUICK = {
    1: {"k_max": 6, "shifts": 5, "window": 64, "n_padding": 1000},
    2: {"n_random": 20},
    "arms": {"radii": (8, 16, 32, 64, 128), "trials": 2000},
    5: {"samples": 100, "n": 128},
    6: {"chains": 10},
    7: {"walks": 300},
    8: {"clusters": 40, "n": 128},
    9: {"clusters": 10, "n": 128, "sources": 5, "per_source": 10},
    10: {"samples": 500, "pi1_trials": 2000},
}


def run_criterion(number, seed=0, quick=False):
    """Evaluate one criterion (3 and 4 share a single arms run)."""
    q = QUICK if quick else {}
    if number in (3, 4):
        stats = arm_statistics(seed=seed, **q.get("arms", {}))
        if number == 3:
            return criterion_arm_inequalities(stats)
        return criterion_arm_exponents(stats)
    fns = {
        1: criterion_covering,
        2: criterion_backbone_oracle,
        5: criterion_thin_backbone,
        6: criterion_markov_algebra,
        7: criterion_diffusive,
        8: criterion_subdiffusive,
        9: criterion_distance_lowerbound,
        10: criterion_volume_tail,
    }
    return fns[number](seed=seed, **q.get(number, {}))
