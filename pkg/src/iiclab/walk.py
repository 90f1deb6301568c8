"""Random walks on clusters: traces, displacement and hitting-time
ensembles, escape-exponent fits, and exact Markov-type algebra."""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .fitting import InsufficientDataError, fit_loglog_grouped, with_exponent
from .lattice import CONDITIONED, DEFAULT_REJECTION_CAP, iic_approximant
from .metrics import _weights, chemical_distances
from .seeding import derive_seed

UNHIT = np.inf


@dataclass(eq=False)
class WalkTrace:
    """A simple random walk path on a cluster.

    ``chem[t]`` is the graph distance from the start to X_t and
    ``euc2[t]`` the squared Euclidean distance.
    """

    cluster: object = field(repr=False)
    start: int
    seed: int
    path: np.ndarray = field(repr=False)
    chem: np.ndarray = field(repr=False)
    euc2: np.ndarray = field(repr=False)
    lazy: bool = False

    @property
    def T(self):
        return len(self.path) - 1

    def running_max(self, euclidean=False):
        return np.maximum.accumulate(self.euc2 if euclidean else self.chem)

    def hitting_times(self, radii, euclidean=False):
        return _first_passage(self.euc2 if euclidean else self.chem, radii, euclidean)

    def vertices(self):
        return [tuple(int(c) for c in self.cluster.coords[i]) for i in self.path]


def _first_passage(series, radii, euclidean):
    """First t with series[t] >= R (R^2 for squared distances); inf if never."""
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) < 0):
        raise ValueError("radii must be increasing")
    level = radii**2 if euclidean else radii
    runmax = np.maximum.accumulate(series)
    idx = np.searchsorted(runmax, level, side="left")
    out = idx.astype(float)
    out[idx >= len(series)] = UNHIT
    return out


def hitting_times(trace, radii):
    """Chemical and Euclidean first-passage times for each radius."""
    return trace.hitting_times(radii), trace.hitting_times(radii, euclidean=True)


def simulate_walk(cluster, start, T, seed, lazy=False, chem=None):
    """Simple random walk of T steps from ``start``; deterministic per seed.

    With ``lazy`` the walk holds with probability 1/2 at each step.
    ``chem`` may pass precomputed graph distances from ``start``.
    """
    s = cluster.resolve(start)
    if T < 0:
        raise ValueError("T must be nonnegative")
    u = np.random.default_rng(seed).random(T * (2 if lazy else 1))
    path = K.walk_path(cluster.indptr, cluster.indices, s, u, lazy)
    if chem is None:
        chem = chemical_distances(cluster, s)
    d = cluster.coords[path] - cluster.coords[s]
    return WalkTrace(cluster, s, seed, path, chem[path], (d**2).sum(axis=1), lazy)


# -- ensembles ------------------------------------------------------------------


def _grid(lo, hi):
    return tuple(2**e for e in range(lo, hi + 1))


@dataclass
class WalkConfig:
    n: int = 256
    flavor: str = CONDITIONED
    p: float = 0.5
    T_grid: tuple = _grid(6, 14)
    R_grid: tuple = (2, 3, 4, 6, 8, 11, 16)
    R_grid_euc: tuple = (2, 3, 4, 6, 8, 11, 16)
    clusters: int = 500
    walks: int = 4
    hit_walks: int = 4
    hit_budget: int = 2**17
    censor: bool = True
    lazy: bool = False
    seed: int = 0
    max_attempts: int = DEFAULT_REJECTION_CAP

    def __post_init__(self):
        for name in ("T_grid", "R_grid", "R_grid_euc"):
            g = tuple(int(v) for v in getattr(self, name))
            if list(g) != sorted(g) or len(set(g)) != len(g):
                raise ValueError(f"{name} must be strictly increasing")
            setattr(self, name, g)
        if min(self.clusters, self.walks) < 1 or self.hit_walks < 0 or self.hit_budget < 1:
            raise ValueError("budgets must be positive")


def make_cluster(cfg, a):
    return iic_approximant(cfg.n, cfg.flavor, derive_seed(cfg.seed, ["cluster", a]), cfg.max_attempts, cfg.p)


def cluster_walk_stats(cfg, a):
    """Walk statistics on cluster ``a`` of the ensemble (one task).

    Displacement rows are per walk: running-max squared distances at each
    T (chemical, Euclidean) and fixed-time squared distances, with a 0/1
    count that is 0 where the walk had touched the box boundary by time T.
    Hitting rows hold first-passage times, capped at the budget, and
    hit flags.
    """
    cl = make_cluster(cfg, a)
    root = cl.root
    chem = chemical_distances(cl, root)
    bnd = cl.touches_box_boundary()
    Tg = np.array(cfg.T_grid)
    Tmax = int(Tg[-1])
    W = cfg.walks
    out = {
        key: np.zeros((W, len(Tg)))
        for key in ("max_chem", "max_euc", "fix_chem", "fix_euc", "count")
    }
    for w in range(W):
        tr = simulate_walk(cl, root, Tmax, derive_seed(cfg.seed, ["walk", a, w]), cfg.lazy, chem)
        hit_b = np.flatnonzero(bnd[tr.path])
        tb = hit_b[0] if len(hit_b) else Tmax + 1
        ok = (Tg < tb) if cfg.censor else np.ones(len(Tg), dtype=bool)
        c2 = tr.chem.astype(float) ** 2
        e2 = tr.euc2.astype(float)
        out["max_chem"][w] = np.where(ok, np.maximum.accumulate(c2)[Tg], 0)
        out["max_euc"][w] = np.where(ok, np.maximum.accumulate(e2)[Tg], 0)
        out["fix_chem"][w] = np.where(ok, c2[Tg], 0)
        out["fix_euc"][w] = np.where(ok, e2[Tg], 0)
        out["count"][w] = ok
    Rc = np.array(cfg.R_grid, dtype=float)
    Re = np.array(cfg.R_grid_euc, dtype=float)
    H = cfg.hit_walks
    out["hit_chem"] = np.zeros((H, len(Rc)))
    out["hit_euc"] = np.zeros((H, len(Re)))
    out["hit_chem_ok"] = np.zeros((H, len(Rc)))
    out["hit_euc_ok"] = np.zeros((H, len(Re)))
    for w in range(H):
        u = np.random.default_rng(derive_seed(cfg.seed, ["hit", a, w])).random(cfg.hit_budget)
        ch, eu = K.walk_until(
            cl.indptr, cl.indices, root, chem, cl.xs, cl.ys,
            int(Rc[-1]), int(np.ceil(Re[-1] ** 2)), u, cfg.hit_budget,
        )
        tc = _first_passage(ch, Rc, False)
        te = _first_passage(eu, Re, True)
        out["hit_chem_ok"][w] = np.isfinite(tc)
        out["hit_euc_ok"][w] = np.isfinite(te)
        out["hit_chem"][w] = np.where(np.isfinite(tc), tc, cfg.hit_budget)
        out["hit_euc"][w] = np.where(np.isfinite(te), te, cfg.hit_budget)
    out["size"] = len(cl)
    out["attempts"] = cl.attempts
    return out


@dataclass
class WalkEnsemble:
    config: WalkConfig
    rows: dict
    cluster_of_walk: np.ndarray
    cluster_of_hit: np.ndarray
    sizes: np.ndarray
    attempts: np.ndarray

    def mean(self, key):
        c = self.rows["count"].sum(axis=0)
        return self.rows[key].sum(axis=0) / np.maximum(c, 1)

    def censored_fraction(self):
        return 1.0 - self.rows["count"].mean(axis=0)

    def hit_mean(self, key):
        return self.rows[key].mean(axis=0)

    def unhit_fraction(self, key):
        return 1.0 - self.rows[key + "_ok"].mean(axis=0)

    def summary_rows(self):
        Tg = self.config.T_grid
        cf = self.censored_fraction()
        for g, T in enumerate(Tg):
            yield {
                "T": T,
                "max_chem2": float(self.mean("max_chem")[g]),
                "max_euc2": float(self.mean("max_euc")[g]),
                "chem2": float(self.mean("fix_chem")[g]),
                "euc2": float(self.mean("fix_euc")[g]),
                "walks_used": int(self.rows["count"][:, g].sum()),
                "censored_fraction": float(cf[g]),
            }


def merge_cluster_stats(cfg, parts):
    """Stack per-cluster outputs (a list ordered by cluster index)."""
    keys = ("max_chem", "max_euc", "fix_chem", "fix_euc", "count", "hit_chem", "hit_euc", "hit_chem_ok", "hit_euc_ok")
    rows = {k: np.concatenate([p[k] for p in parts]) for k in keys}
    cw = np.concatenate([np.full(len(p["count"]), a) for a, p in enumerate(parts)])
    ch = np.concatenate([np.full(len(p["hit_chem"]), a) for a, p in enumerate(parts)])
    return WalkEnsemble(
        cfg, rows, cw, ch,
        np.array([p["size"] for p in parts]), np.array([p["attempts"] for p in parts]),
    )


def displacement_ensemble(cfg):
    """Run every cluster of the configured ensemble serially."""
    return merge_cluster_stats(cfg, [cluster_walk_stats(cfg, a) for a in range(cfg.clusters)])


def _units(ids, mat):
    """Sum rows by unit; with a single cluster the units are the walks."""
    if len(np.unique(ids)) == 1:
        return mat
    out = np.zeros((ids.max() + 1, mat.shape[1]))
    np.add.at(out, ids, mat)
    return out


def _speed_exponent(slope):
    # a nonpositive displacement slope means no escape at all
    return 2.0 / slope if slope > 0 else np.inf


def fit_escape_exponents(ens, drop_first=True, bootstrap=1000, seed=0):
    """Fits of the speed exponents and walk dimensions.

    beta_star: 2/slope of log E[max_{t<=T} d(X0,X_t)^2] against log T
    (chemical metric); beta: same for the fixed-time displacement;
    dw: slope of log E[tau_R] against log R; suffix _euc for the
    Euclidean versions.  Bootstrap resamples clusters (walks when the
    ensemble has a single cluster).  ``ordering`` compares
    min(beta, dw) with beta_star minus the half-width of its interval.
    """
    cfg = ens.config
    s = 1 if drop_first else 0
    Tg = np.array(cfg.T_grid, dtype=float)[s:]
    cnt = _units(ens.cluster_of_walk, ens.rows["count"])[:, s:]
    fits = {}
    for name, key in (("beta_star", "max_chem"), ("beta_star_euc", "max_euc"), ("beta", "fix_chem"), ("beta_euc", "fix_euc")):
        sums = _units(ens.cluster_of_walk, ens.rows[key])[:, s:]
        f = fit_loglog_grouped(Tg, sums, cnt, bootstrap=bootstrap, seed=seed)
        fits[name] = with_exponent(f, _speed_exponent, name)
    if cfg.hit_walks:
        for name, key, grid in (("dw", "hit_chem", cfg.R_grid), ("dw_euc", "hit_euc", cfg.R_grid_euc)):
            R = np.array(grid, dtype=float)[s:]
            sums = _units(ens.cluster_of_hit, ens.rows[key])[:, s:]
            ones = _units(ens.cluster_of_hit, np.ones_like(ens.rows[key]))[:, s:]
            try:
                f = fit_loglog_grouped(R, sums, ones, bootstrap=bootstrap, seed=seed)
            except InsufficientDataError:
                continue
            f.extra["unhit_fraction"] = [float(v) for v in ens.unhit_fraction(key)[s:]]
            fits[name] = with_exponent(f, lambda b: b, name)
    bs = fits["beta_star"]
    slack = (bs.exponent_ci[1] - bs.exponent_ci[0]) / 2
    others = [fits[k].exponent for k in ("beta", "dw") if k in fits]
    fits["ordering"] = {
        "min_beta_dw": float(min(others)),
        "beta_star": bs.exponent,
        "slack": float(slack),
        "holds": bool(min(others) >= bs.exponent - slack),
    }
    return fits


# -- Markov type ---------------------------------------------------------------


def markov_type_ratio(cluster, omega, t_grid, walks, seed):
    """Ratio E[d(Y0,Y_t)^2] / (t E[d(Y0,Y1)^2]) in the weighted metric.

    Y0 is drawn proportionally to degree.  The denominator is exact:
    under that law (Y0, Y1) is a uniform directed edge and
    d(Y0,Y1) is the edge length.  Errors are standard errors of the
    numerator mean.
    """
    w = _weights(cluster, omega)
    t_grid = np.asarray(sorted(int(t) for t in t_grid))
    if t_grid[0] < 1:
        raise ValueError("times start at 1")
    rows = np.repeat(np.arange(len(cluster)), cluster.degrees)
    edge = 0.5 * (w[rows] + w[cluster.indices])
    denom = float(np.mean(edge**2))
    if denom == 0:
        return {"t": t_grid, "ratio": np.full(len(t_grid), np.nan), "se": np.full(len(t_grid), np.nan), "degenerate": True, "denominator": 0.0}
    rng = np.random.default_rng(seed)
    deg = cluster.degrees
    starts = rng.choice(len(cluster), size=walks, p=deg / deg.sum())
    T = int(t_grid[-1])
    vals = np.empty((walks, len(t_grid)))
    for i, y0 in enumerate(starts):
        u = np.random.default_rng(derive_seed(seed, ["mtype", i])).random(T)
        path = K.walk_path(cluster.indptr, cluster.indices, int(y0), u, False)
        d = K.dijkstra_vertex_weights(cluster.indptr, cluster.indices, w, int(y0))
        vals[i] = d[path[t_grid]] ** 2
    num = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(walks) if walks > 1 else np.full(len(t_grid), np.nan)
    scale = t_grid * denom
    return {"t": t_grid, "ratio": num / scale, "se": se / scale, "degenerate": False, "denominator": denom}


class ReversibilityError(ValueError):
    pass


@dataclass
class QuadraticFormResult:
    value: float
    min_eigenvalue: float
    psd: bool
    covariance: float


def negative_correlation_exact(P, pi, x, t, rtol=1e-12, floor=-1e-9):
    """<x, (I-P)(I-P^(t-1)) x>_pi with a PSD certificate.

    ``covariance`` is E[(x(Z_t)-x(Z_{t-1}))(x(Z_{t-1})-x(Z_0))] for the
    stationary chain, computed from the path law; it equals -value.
    """
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(pi)
    if P.shape != (n, n) or x.shape != (n,):
        raise ValueError("shape mismatch")
    if t < 1:
        raise ValueError("t must be at least 1")
    if np.any(pi <= 0) or not np.isclose(pi.sum(), 1.0, rtol=0, atol=1e-12):
        raise ValueError("pi must be a positive probability vector")
    flux = pi[:, None] * P
    if not np.allclose(flux, flux.T, rtol=rtol, atol=0):
        raise ReversibilityError("detailed balance fails")
    I = np.eye(n)
    Pt1 = np.linalg.matrix_power(P, t - 1)
    A = (I - P) @ (I - Pt1)
    value = float(x @ (pi * (A @ x)))
    r = np.sqrt(pi)
    S = (r[:, None] * P) / r[None, :]
    S = (S + S.T) / 2
    As = (I - S) @ (I - np.linalg.matrix_power(S, t - 1))
    eig = np.linalg.eigvalsh((As + As.T) / 2)
    # path-law route: Z_0 ~ pi, Z_{t-1} | Z_0 ~ P^(t-1), Z_t | Z_{t-1} ~ P
    joint = pi[:, None] * Pt1  # (a, b)
    step = P @ x - x  # E[x(Z_t) - x(Z_{t-1}) | Z_{t-1} = b]
    cov = float(np.sum(joint * (step[None, :] * (x[None, :] - x[:, None]))))
    return QuadraticFormResult(value, float(eig.min()), bool(eig.min() >= floor), cov)


def transition_matrix(cluster, lazy=False):
    """Dense transition matrix of the walk and its degree-biased law."""
    n = len(cluster)
    P = np.zeros((n, n))
    deg = cluster.degrees
    rows = np.repeat(np.arange(n), deg)
    np.add.at(P, (rows, cluster.indices), 1.0 / deg[rows])
    if lazy:
        P = (P + np.eye(n)) / 2
    return P, deg / deg.sum()


def random_tree_chain(n, rng):
    """Simple random walk on a uniform random recursive tree of n vertices."""
    if n < 2:
        raise ValueError("need at least two states")
    A = np.zeros((n, n))
    for v in range(1, n):
        u = int(rng.integers(v))
        A[u, v] = A[v, u] = 1
    deg = A.sum(axis=1)
    return A / deg[:, None], deg / deg.sum()


def random_conductance_chain(n, rng, density=0.3):
    """Walk driven by random symmetric conductances on a connected graph."""
    C = np.triu(rng.random((n, n)) * (rng.random((n, n)) < density), 1)
    for v in range(1, n):  # a spanning path keeps the chain irreducible
        C[v - 1, v] += rng.random() + 0.1
    C = C + C.T + np.diag(rng.random(n))
    w = C.sum(axis=1)
    return C / w[:, None], w / w.sum()
