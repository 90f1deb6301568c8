"""Experiment configuration, task orchestration, manifests and reports.

A run is a list of independent tasks.  Each task has a string key, is
seeded from the master seed through its key, and writes one JSON file
under ``<out_dir>/tasks``.  Result files are reduced from task outputs
in key order, so they do not depend on completion order or on the
number of workers.  A rerun skips tasks whose output already exists
and matches the checksum recorded in the manifest.
"""
from concurrent.futures import ProcessPoolExecutor, as_completed
import csv
from dataclasses import asdict, dataclass, field, fields
import hashlib
import io
import json
import os
from pathlib import Path
import time

import numpy as np
import yaml

from . import __version__
from .arms import ArmStats, arm_counts
from .backbone import _ratio_se, deep_backbone_union, root_backbone_frequency
from .covering import CoveringSystem
from .experiments import (
    QUICK,
    CriterionResult,
    _jsonable,
    arm_statistics,
    criterion_arm_exponents,
    criterion_arm_inequalities,
    run_criterion,
)
from .lattice import iic_approximant
from .metrics import fit_distance_lowerbound, indicator_weight, mixture_weight, pair_distances, sample_pairs
from .seeding import derive_seed
from .walk import WalkConfig, cluster_walk_stats, fit_escape_exponents, markov_type_ratio, merge_cluster_stats

KINDS = ("arms", "backbone", "walk", "weights", "markov-type", "full-pipeline")
OUT_ENV = "IICLAB_OUT"


class ConfigError(ValueError):
    pass


class RunFailed(RuntimeError):
    def __init__(self, failed):
        super().__init__(f"{len(failed)} task(s) failed: {', '.join(sorted(failed))}")
        self.failed = failed


def default_out_dir():
    return os.environ.get(OUT_ENV, "runs")


def _pow2(lo, hi):
    return tuple(2**e for e in range(lo, hi + 1))


@dataclass
class ExperimentConfig:
    """One experiment.  Grids are tuples; YAML holds them as lists."""

    kind: str = "arms"
    seed: int = 0
    out_dir: str = ""
    workers: int = 0
    # model
    n: int = 256
    p: float = 0.5
    flavor: str = "conditioned"
    # arms
    radii: tuple = (8, 16, 32, 64, 128)
    trials: int = 100000
    chunk: int = 1000
    # scales
    k_min: int = 3
    k_max: int = 7
    eps: float = 1 / 3
    c4: float = 1.0
    dprime: float = 1.9
    convention: str = "dyadic"
    # ensembles
    clusters: int = 500
    walks: int = 4
    hit_walks: int = 4
    hit_budget: int = 131072
    T_grid: tuple = _pow2(6, 14)
    R_grid: tuple = (2, 3, 4, 6, 8, 11, 16)
    R_grid_euc: tuple = (2, 3, 4, 6, 8, 11, 16)
    censor: bool = True
    lazy: bool = False
    drop_first: bool = True
    bootstrap: int = 1000
    # distances
    sources: int = 10
    pairs_per_source: int = 12
    distance_floor: int = 8
    delta: float = 0.0
    # Markov type
    t_grid: tuple = _pow2(0, 6)
    mtype_walks: int = 200
    # full pipeline
    criteria: tuple = tuple(range(1, 11))
    quick: bool = False

    GRIDS = ("radii", "T_grid", "R_grid", "R_grid_euc", "t_grid")

    def __post_init__(self):
        if not self.out_dir:
            self.out_dir = str(Path(default_out_dir()) / self.kind)
        for name in self.GRIDS + ("criteria",):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        for name in ("trials", "chunk", "clusters", "walks", "hit_budget", "bootstrap", "sources", "pairs_per_source", "mtype_walks", "n"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.hit_walks < 0 or self.workers < 0:
            raise ConfigError("hit_walks and workers must be nonnegative")
        for name in self.GRIDS:
            g = getattr(self, name)
            if not g or list(g) != sorted(g) or len(set(g)) != len(g):
                raise ConfigError(f"{name} must be a nonempty increasing grid")
        if not 0 < self.eps <= 0.5:
            raise ConfigError("eps must lie in (0, 1/2]")
        if self.dprime >= 2:
            raise ConfigError("dprime must be below 2")
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError("need 1 <= k_min <= k_max")
        if not 0 <= self.p <= 1:
            raise ConfigError("p must lie in [0, 1]")
        if not set(self.criteria) <= set(range(1, 11)):
            raise ConfigError("criteria are numbered 1..10")

    def to_dict(self):
        d = asdict(self)
        for name in self.GRIDS + ("criteria",):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text):
        d = yaml.safe_load(text) or {}
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        return cls.from_yaml(Path(path).read_text())

    def digest(self):
        """Hash of everything that affects results (not where they go)."""
        d = self.to_dict()
        for k in ("out_dir", "workers"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def walk_config(self):
        return WalkConfig(
            n=self.n, flavor=self.flavor, p=self.p, T_grid=self.T_grid, R_grid=self.R_grid,
            R_grid_euc=self.R_grid_euc, clusters=self.clusters, walks=self.walks,
            hit_walks=self.hit_walks, hit_budget=self.hit_budget, censor=self.censor,
            lazy=self.lazy, seed=derive_seed(self.seed, ["walk"]),
        )

    @property
    def ks(self):
        return tuple(range(self.k_min, self.k_max + 1))


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    kind: str
    seed: int
    tasks: dict = field(default_factory=dict)  # key -> {"seed_path", "sha256"}
    outputs: dict = field(default_factory=dict)  # file -> sha256
    failed: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    task_count: int = 0
    executed: int = 0

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text()))

    def verify(self, out_dir):
        """Names of listed outputs that are missing or changed."""
        bad = []
        for name, digest in self.outputs.items():
            p = Path(out_dir) / name
            if not p.exists() or sha256_file(p) != digest:
                bad.append(name)
        return bad


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def code_version():
    """Package version plus a digest of its sources."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


# -- tasks ---------------------------------------------------------------------------
# Task functions take the config as a dict (picklable, cheap) and return
# JSON-compatible data.


def _cfg(d):
    return ExperimentConfig.from_dict(d)


def task_arms(d, chunk):
    c = _cfg(d)
    lo = chunk * c.chunk
    ids = range(lo, min(lo + c.chunk, c.trials))
    s = arm_counts(c.radii, ids, derive_seed(c.seed, ["arms"]), c.p)
    return {"trials": s.trials, "one": s.one.tolist(), "two": s.two.tolist(), "violations": s.violations}


def _cluster(c, a):
    return iic_approximant(c.n, c.flavor, derive_seed(c.seed, ["cluster", a]), p=c.p)


def task_backbone(d, a):
    c = _cfg(d)
    cl = _cluster(c, a)
    seed = derive_seed(c.seed, ["cover"])
    hits = root_backbone_frequency([cl], c.ks, c.eps, derive_seed(seed, [a]), c.convention)[0][0]
    return {"size": len(cl), "attempts": cl.attempts, "root_hits": [int(h) for h in hits]}


def task_walk(d, a):
    c = _cfg(d)
    out = cluster_walk_stats(c.walk_config(), a)
    return {k: (v.tolist() if isinstance(v, np.ndarray) else int(v)) for k, v in out.items()}


def task_density(d, a):
    """Degree sums on the deep-backbone unions of one cluster, per scale."""
    c = _cfg(d)
    cl = _cluster(c, a)
    out = {"deg_total": int(cl.degrees.sum())}
    system = CoveringSystem.random(c.k_max, derive_seed(c.seed, ["cover", a]), c.convention)
    for k in range(1, c.k_max + 1):
        u, rep = deep_backbone_union(cl, system, k, c.eps)
        out[f"deg_{k}"] = int(cl.degrees[u].sum())
        out[f"deep_{k}"] = rep.deep
        out[f"patches_{k}"] = rep.patches
    return out


def _weights_for(c, a, p_hat):
    cl = _cluster(c, a)
    system = CoveringSystem.random(c.k_max, derive_seed(c.seed, ["cover", a]), c.convention)
    fields_ = {}
    for k in range(1, c.k_max + 1):
        if p_hat[str(k)] > 0:
            u, _ = deep_backbone_union(cl, system, k, c.eps)
            fields_[k] = indicator_weight(cl, u, p_hat[str(k)])
    return cl, fields_


def task_distances(d, a, p_hat):
    c = _cfg(d)
    cl, fields_ = _weights_for(c, a, p_hat)
    om = mixture_weight(fields_)
    rng = np.random.default_rng(derive_seed(c.seed, ["pairs", a]))
    src = rng.choice(len(cl), size=min(c.sources, len(cl)), replace=False)
    pairs = sample_pairs(cl, src, c.pairs_per_source, rng, c.distance_floor)
    g, w = pair_distances(cl, om, pairs)
    return {"pairs": pairs, "dG": g.tolist(), "dw": w.tolist(), "moment": om.second_moment()}


def task_mtype(d, a, p_hat):
    c = _cfg(d)
    cl, fields_ = _weights_for(c, a, p_hat)
    k = c.k_max
    if k not in fields_:
        return {"degenerate": True}
    r = markov_type_ratio(cl, fields_[k], c.t_grid, c.mtype_walks, derive_seed(c.seed, ["mtype", a]))
    return {k2: (v.tolist() if isinstance(v, np.ndarray) else v) for k2, v in r.items()}


def task_criterion(d, number):
    c = _cfg(d)
    if number in (3, 4):
        stats = arm_statistics(seed=c.seed, **(QUICK["arms"] if c.quick else {}))
        return [criterion_arm_inequalities(stats).to_dict(), criterion_arm_exponents(stats).to_dict()]
    return [run_criterion(number, seed=c.seed, quick=c.quick).to_dict()]


def plan(c):
    """Stages of (key, function, args, seed path); a callable stage is
    built from the results of the earlier stages."""
    d = c.to_dict()
    if c.kind == "arms":
        chunks = (c.trials + c.chunk - 1) // c.chunk
        return [[
            (f"arms-{i:05d}", task_arms, (d, i), ["arms", "trial", i * c.chunk, min((i + 1) * c.chunk, c.trials)])
            for i in range(chunks)
        ]]
    if c.kind == "backbone":
        return [[(f"backbone-{a:05d}", task_backbone, (d, a), ["cluster", a]) for a in range(c.clusters)]]
    if c.kind == "walk":
        return [[(f"walk-{a:05d}", task_walk, (d, a), ["walk", "cluster", a]) for a in range(c.clusters)]]
    if c.kind in ("weights", "markov-type"):
        fn = task_distances if c.kind == "weights" else task_mtype
        return [
            [(f"density-{a:05d}", task_density, (d, a), ["cluster", a]) for a in range(c.clusters)],
            lambda res: [
                (f"{c.kind}-{a:05d}", fn, (d, a, pooled_density(c, res)), ["cluster", a])
                for a in range(c.clusters)
            ],
        ]
    if c.kind == "full-pipeline":
        nums = sorted(set(3 if n == 4 else n for n in c.criteria))
        return [[(f"criterion-{n:02d}", task_criterion, (d, n), ["c", n]) for n in nums]]
    raise ConfigError(c.kind)


def pooled_density(c, results):
    tot = sum(results[f"density-{a:05d}"]["deg_total"] for a in range(c.clusters))
    return {
        str(k): sum(results[f"density-{a:05d}"][f"deg_{k}"] for a in range(c.clusters)) / tot
        for k in range(1, c.k_max + 1)
    }


# -- running ---------------------------------------------------------------------------


def _dump(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def run_experiment(config, workers=None, keys_only=None):
    """Run (or resume) an experiment; returns the manifest.

    ``keys_only`` restricts execution to a subset of task keys, which
    is how interrupted runs are simulated in the tests.
    """
    c = config
    out = Path(c.out_dir)
    tdir = out / "tasks"
    tdir.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.json"
    old = RunManifest.load(mpath) if mpath.exists() else None
    if old is not None and old.config_hash != c.digest():
        raise ConfigError(f"{out} holds a run of a different config")
    man = RunManifest(c.digest(), code_version(), c.kind, c.seed)
    if old is not None:
        man.tasks = dict(old.tasks)
    t0 = time.perf_counter()
    nworkers = workers if workers is not None else (c.workers or os.cpu_count() or 1)
    results = {}
    failed = {}
    for stage in plan(c):
        tasks = stage(results) if callable(stage) else stage
        todo = []
        paths = {}
        for key, fn, args, seed_path in tasks:
            paths[key] = seed_path
            p = tdir / f"{key}.json"
            rec = man.tasks.get(key)
            if p.exists() and rec and sha256_file(p) == rec["sha256"]:
                results[key] = json.loads(p.read_text())
            elif keys_only is None or key in keys_only:
                todo.append((key, fn, args))
        for key, res, err in _execute(todo, nworkers):
            if err is not None:
                failed[key] = err
                continue
            p = tdir / f"{key}.json"
            p.write_text(_dump(res))
            man.tasks[key] = {"seed_path": paths[key], "sha256": sha256_file(p)}
            results[key] = json.loads(p.read_text())
            man.executed += 1
            # checkpoint so an interrupted run can resume from here
            mpath.write_text(man.to_json())
        man.task_count += len(tasks)
        missing = [t[0] for t in tasks if t[0] not in results]
        if missing:
            for k in missing:
                failed.setdefault(k, "not run")
            break
    man.failed = failed
    if not failed:
        for name in reduce_outputs(c, results, out):
            man.outputs[name] = sha256_file(out / name)
    man.wall_seconds = round(time.perf_counter() - t0, 3)
    mpath.write_text(man.to_json())
    if failed:
        raise RunFailed(failed)
    return man


def _execute(todo, nworkers):
    if not todo:
        return
    if nworkers <= 1 or len(todo) == 1:
        for key, fn, args in todo:
            try:
                yield key, fn(*args), None
            except Exception as e:  # reported per task
                yield key, None, f"{type(e).__name__}: {e}"
        return
    with ProcessPoolExecutor(max_workers=nworkers) as ex:
        futs = {ex.submit(fn, *args): key for key, fn, args in todo}
        for f in as_completed(futs):
            key = futs[f]
            try:
                yield key, f.result(), None
            except Exception as e:
                yield key, None, f"{type(e).__name__}: {e}"


# -- reduction ---------------------------------------------------------------------------


def write_csv(path, rows, columns=None):
    rows = list(rows)
    buf = io.StringIO()
    cols = columns or (list(rows[0]) if rows else [])
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in cols})
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_jsonl(path, records):
    Path(path).write_text("".join(_dump(r) + "\n" for r in records))


def reduce_outputs(c, results, out):
    keys = sorted(results)
    if c.kind == "arms":
        parts = [results[k] for k in keys]
        st = ArmStats(
            np.array(sorted(c.radii)), sum(p["trials"] for p in parts),
            np.sum([p["one"] for p in parts], axis=0), np.sum([p["two"] for p in parts], axis=0),
            sum(p["violations"] for p in parts), c.p, c.seed,
        )
        write_csv(out / "arms.csv", st.rows())
        fit = {"violations": st.violations, "flagged": [], "eta1": None, "eta21": None}
        if len(c.radii) >= 4:
            st.fit(bootstrap=c.bootstrap, seed=c.seed)
            fit.update(
                flagged=st.flagged,
                eta1=st.eta1.to_dict() if st.eta1 else None,
                eta21=st.eta21.to_dict() if st.eta21 else None,
            )
        else:
            fit["note"] = "fewer than 4 radii: no exponent fit"
        fit["bound_z"] = st.bound_z()
        write_json(out / "arms_fit.json", fit)
        return ["arms.csv", "arms_fit.json"]
    if c.kind == "backbone":
        hits = np.array([results[k]["root_hits"] for k in keys])
        pk = hits.mean(axis=0)
        se = np.sqrt(pk * (1 - pk) / len(hits))
        write_csv(out / "backbone.csv", ({"k": k, "eps": c.eps, "samples": len(hits), "p_k": pk[i], "p_k_se": se[i]} for i, k in enumerate(c.ks)))
        write_jsonl(out / "backbone_samples.jsonl", ({"key": k, **results[k]} for k in keys))
        return ["backbone.csv", "backbone_samples.jsonl"]
    if c.kind == "walk":
        wc = c.walk_config()
        parts = [{k: (np.array(v) if isinstance(v, list) else v) for k, v in results[key].items()} for key in keys]
        ens = merge_cluster_stats(wc, parts)
        write_csv(out / "walk.csv", ens.summary_rows())
        Rrows = []
        for name, key, grid in (("chemical", "hit_chem", wc.R_grid), ("euclidean", "hit_euc", wc.R_grid_euc)):
            m, u = ens.hit_mean(key), ens.unhit_fraction(key)
            Rrows += [{"metric": name, "R": R, "mean_tau": m[i], "unhit_fraction": u[i]} for i, R in enumerate(grid)]
        write_csv(out / "hitting.csv", Rrows)
        fits = fit_escape_exponents(ens, c.drop_first, c.bootstrap, c.seed)
        alt = fit_escape_exponents(ens, not c.drop_first, c.bootstrap, c.seed)
        doc = {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in fits.items()}
        for v in doc.values():
            if isinstance(v, dict):
                v.get("extra", {}).pop("boot_slopes", None)
        doc["sensitivity_drop_first"] = {k: v.exponent for k, v in alt.items() if hasattr(v, "exponent")}
        write_json(out / "walk_fit.json", doc)
        return ["walk.csv", "hitting.csv", "walk_fit.json"]
    if c.kind in ("weights", "markov-type"):
        dens = [results[k] for k in keys if k.startswith("density-")]
        tot = sum(r["deg_total"] for r in dens)
        rows = []
        for k in range(1, c.k_max + 1):
            num = np.array([r[f"deg_{k}"] for r in dens], dtype=float)
            den = np.array([r["deg_total"] for r in dens], dtype=float)
            rows.append({"k": k, "eps": c.eps, "p_hat": num.sum() / tot, "p_hat_se": _ratio_se(num, den), "deep_patches": sum(r[f"deep_{k}"] for r in dens)})
        write_csv(out / "weights.csv", rows)
        work = [k for k in keys if not k.startswith("density-")]
        if c.kind == "weights":
            recs, dG, dw, units = [], [], [], []
            for i, k in enumerate(work):
                r = results[k]
                for (s, t), g, w in zip(r["pairs"], r["dG"], r["dw"]):
                    recs.append({"cluster": i, "source": s, "target": t, "dist_G": g, "dist_w": w})
                dG += r["dG"]
                dw += r["dw"]
                units += [i] * len(r["dG"])
            write_csv(out / "distances.csv", recs, ["cluster", "source", "target", "dist_G", "dist_w"])
            try:
                fit = fit_distance_lowerbound(dG, dw, c.delta, c.distance_floor, np.array(units), c.bootstrap, c.seed).to_dict()
            except Exception as e:
                fit = {"error": str(e)}
            fit["mean_second_moment"] = float(np.mean([results[k]["moment"] for k in work]))
            write_json(out / "distance_fit.json", fit)
            return ["weights.csv", "distances.csv", "distance_fit.json"]
        mrows = []
        for k in work:
            r = results[k]
            if r.get("degenerate"):
                continue
            mrows += [{"task": k, "t": t, "ratio": q, "se": s} for t, q, s in zip(r["t"], r["ratio"], r["se"])]
        write_csv(out / "mtype.csv", mrows, ["task", "t", "ratio", "se"])
        return ["weights.csv", "mtype.csv"]
    if c.kind == "full-pipeline":
        crit = []
        for k in keys:
            crit += results[k]
        crit = [{k: v for k, v in r.items() if k != "seconds"} for r in crit if r["number"] in c.criteria]
        crit.sort(key=lambda r: r["number"])
        write_json(out / "acceptance.json", crit)
        write_csv(out / "acceptance.csv", (_summary_row(r) for r in crit), ["criterion", "title", "status", "headline"])
        return ["acceptance.json", "acceptance.csv"]
    raise ConfigError(c.kind)


def _summary_row(r):
    status = "PASS" if r["passed"] else ("SOFT-FAIL" if r["soft"] else "FAIL")
    return {"criterion": r["number"], "title": r["title"], "status": status, "headline": r["details"].get("headline", "")}


def render_report(out_dir):
    """Acceptance summary table from a full-pipeline output directory."""
    path = Path(out_dir) / "acceptance.json"
    if not path.exists():
        raise FileNotFoundError(f"no acceptance.json under {out_dir}")
    crit = json.loads(path.read_text())
    lines = [f"{'#':>2}  {'status':<9}  {'criterion':<30}  details"]
    for r in crit:
        s = _summary_row(r)
        lines.append(f"{s['criterion']:>2}  {s['status']:<9}  {s['title']:<30}  {s['headline']}")
    return "\n".join(lines)


def criterion_from_dict(d):
    return CriterionResult(d["number"], d["title"], d["passed"], d["soft"], d["details"], d.get("seconds", 0.0))
