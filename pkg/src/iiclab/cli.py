"""Command line entry point: ``iiclab <subcommand>``.

Outputs default to the directory named by ``$IICLAB_OUT`` (else ``runs``).
Ranges written ``a..b`` are inclusive; for time and radius grids they
double (``64..16384`` is 64, 128, ..., 16384), for scales they step by 1.
"""
import argparse
import csv
import json
from pathlib import Path
import shutil
import sys

import numpy as np

from . import __version__
from .backbone import backbone_density, deep_backbone_union
from .covering import CoveringSystem, check_covering
from .fitting import fit_loglog
from .harness import (
    ConfigError,
    ExperimentConfig,
    RunFailed,
    default_out_dir,
    render_report,
    run_experiment,
    write_csv,
)
from .lattice import BoxRegion, dump_sample, iic_approximant, sample_bond_config
from .metrics import (
    WeightField,
    hybrid_weight,
    indicator_weight,
    large_patch_density,
    mixture_weight,
    pair_distances,
    sample_pairs,
)
from .seeding import derive_seed
from .walk import markov_type_ratio

ARMS_COLUMNS = """arms.csv columns:
  n          box radius
  trials     number of independent samples
  one_arm    count of samples with the origin joined to distance n
  two_arm    count with two disjoint open paths from the origin to distance n
  pi1, pi2   the corresponding frequencies
  pi1_se, pi2_se  binomial standard errors"""

BACKBONE_COLUMNS = """backbone.csv columns:
  k          scale index (patch side 2^k)
  eps        depth fraction defining deep patches
  samples    number of clusters
  p_k        fraction of clusters whose root lies in a deep-patch backbone
  p_k_se     binomial standard error"""

WALK_COLUMNS = """walk.csv columns:
  T                 walk length
  max_chem2         mean of max_{t<=T} chemical distance squared
  max_euc2          same in Euclidean distance
  chem2, euc2       mean squared displacement at time T
  walks_used        walks not censored at the box boundary before T
  censored_fraction fraction of walks censored before T"""

DIST_COLUMNS = """dists.csv columns:
  source, target  cluster vertex indices
  sx, sy, tx, ty  their lattice coordinates
  dist_G          chemical distance
  dist_w          weighted distance (equals dist_G for --metric chemical)"""

MTYPE_COLUMNS = """mtype.csv columns:
  t      time
  ratio  E[d_w(Y0,Y_t)^2] / (t E[d_w(Y0,Y1)^2]) with Y0 degree-biased
  se     standard error of the ratio"""

COVERING_COLUMNS = """covering CSV columns:
  seed, k            covering seed and scale
  covered            every window vertex lies in some patch
  max_diameter       largest patch diameter in the graph metric
  bounded            max_diameter <= 2^k
  multiplicity       largest number of patches meeting one patch
  multiplicity_ok    multiplicity <= 10
  padding_failures   sampled vertices without a patch containing their 2^(k-2) ball
  padded             no padding failures"""


def int_list(text):
    return [int(v) for v in text.split(",") if v]


def int_range(text):
    if ".." in text:
        a, b = (int(v) for v in text.split(".."))
        return list(range(a, b + 1))
    return int_list(text)


def doubling_range(text):
    if ".." in text:
        a, b = (int(v) for v in text.split(".."))
        out = [a]
        while out[-1] * 2 <= b:
            out.append(out[-1] * 2)
        return out
    return int_list(text)


def _out_path(path, default_name):
    p = Path(path) if path else Path(default_out_dir()) / default_name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _run_and_copy(cfg, src, dest, workers):
    run_experiment(cfg, workers=workers)
    shutil.copyfile(Path(cfg.out_dir) / src, dest)
    print(f"{dest} (run directory {cfg.out_dir})")


# -- subcommands --------------------------------------------------------------------


def cmd_sample(a):
    s = sample_bond_config(BoxRegion(a.n), a.p, a.seed)
    out = _out_path(a.out, f"sample-n{a.n}-s{a.seed}.bin")
    h = dump_sample(s, out)
    print(f"{out}: {h['num_open']} open of {h['num_edges']} edges")


def cmd_covering(a):
    rows = []
    window = BoxRegion(a.window)
    for seed in a.seeds:
        system = CoveringSystem.random(a.k_max, seed)
        rng = np.random.default_rng(derive_seed(a.seed, ["padding", seed]))
        for k in range(1, a.k_max + 1):
            rows.append({"seed": seed, **check_covering(system, k, window, rng, n_padding=a.padding_samples)})
    out = _out_path(a.out, "covering.csv")
    write_csv(out, rows)
    bad = [r for r in rows if not (r["covered"] and r["bounded"] and r["multiplicity_ok"] and r["padded"])]
    print(f"{out}: {len(rows) - len(bad)}/{len(rows)} (seed, scale) rows pass every check")


def _run_dir(a, kind):
    return a.run_dir or str(Path(default_out_dir()) / f"{kind}-seed{a.seed}")


def cmd_arms(a):
    cfg = ExperimentConfig(
        kind="arms", seed=a.seed, radii=tuple(a.n), trials=a.trials, p=a.p,
        bootstrap=a.bootstrap, out_dir=_run_dir(a, "arms"),
    )
    _run_and_copy(cfg, "arms.csv", _out_path(a.out, "arms.csv"), a.workers)


def cmd_backbone(a):
    cfg = ExperimentConfig(
        kind="backbone", seed=a.seed, n=a.n, flavor=a.flavor, k_min=min(a.k), k_max=max(a.k),
        eps=a.epsilon, clusters=a.ensemble, out_dir=_run_dir(a, "backbone"),
    )
    _run_and_copy(cfg, "backbone.csv", _out_path(a.out, "backbone.csv"), a.workers)


def cmd_walk(a):
    cfg = ExperimentConfig(
        kind="walk", seed=a.seed, n=a.n, flavor=a.flavor, T_grid=tuple(a.T),
        R_grid=tuple(a.R), R_grid_euc=tuple(a.R), clusters=a.clusters, walks=a.walks,
        hit_walks=a.hit_walks, lazy=a.lazy, censor=not a.no_censor, out_dir=_run_dir(a, "walk"),
    )
    _run_and_copy(cfg, "walk.csv", _out_path(a.out, "walk.csv"), a.workers)


def cmd_fit(a):
    with open(a.input, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    x = np.array([float(r[a.x]) for r in rows])
    cols = a.y or [c for c in rows[0] if c in ("max_chem2", "max_euc2", "chem2", "euc2", "mean_tau", "pi1", "pi2")]
    start = 1 if a.drop_first else 0
    doc = {"input": str(a.input), "x": a.x, "drop_first": a.drop_first, "fits": {}}
    for col in cols:
        y = np.array([float(r[col]) for r in rows])
        f = fit_loglog(x[start:], y[start:], bootstrap=a.bootstrap, seed=a.seed)
        d = f.to_dict()
        if col.startswith(("max_", "chem", "euc")):
            # displacement ~ T^(2/beta): report beta = 2 / slope
            d["escape_exponent"] = 2 / f.slope
        doc["fits"][col] = d
    out = _out_path(a.out, "fit.json")
    out.write_text(json.dumps(doc, indent=2) + "\n")
    for col, d in doc["fits"].items():
        print(f"{col}: slope {d['slope']:.4f}  95% CI [{d['ci'][0]:.4f}, {d['ci'][1]:.4f}]")


def _calibration(a):
    return [
        iic_approximant(a.n, a.flavor, derive_seed(a.seed, ["calibration", i]))
        for i in range(a.calibration)
    ]


def cmd_weights(a):
    cl = iic_approximant(a.n, a.flavor, derive_seed(a.seed, ["cluster", 0]))
    system = CoveringSystem.random(a.k, derive_seed(a.seed, ["cover", 0]))
    ens = _calibration(a)
    cal_seed = derive_seed(a.seed, ["calibration-cover"])
    if a.mode == "scale":
        p, se = backbone_density(ens, a.k, a.epsilon, cal_seed)
        u, _ = deep_backbone_union(cl, system, a.k, a.epsilon)
        om = indicator_weight(cl, u, p, kind="scale")
        om.record.update(k=a.k, p_se=se)
    elif a.mode == "mixture":
        fields = {}
        for j in range(1, a.k + 1):
            p, _ = backbone_density(ens, j, a.epsilon, cal_seed)
            if p > 0:
                u, _ = deep_backbone_union(cl, system, j, a.epsilon)
                fields[j] = indicator_weight(cl, u, p)
        om = mixture_weight(fields)
    else:
        p, _ = backbone_density(ens, a.k, a.epsilon, cal_seed)
        q, _ = large_patch_density(ens, a.k, a.c4, a.dprime, cal_seed)
        om = hybrid_weight(cl, system, a.k, a.epsilon, p, q, a.c4, a.dprime)
    header = {
        "record": "header", "mode": a.mode, "k": a.k, "eps": a.epsilon, "n": a.n,
        "flavor": a.flavor, "seed": a.seed, "cluster_seed": derive_seed(a.seed, ["cluster", 0]),
        "vertices": len(cl), "second_moment": om.second_moment(), "build": om.record,
    }
    out = _out_path(a.out, "weights.jsonl")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, default=float) + "\n")
        for (x, y), w in zip(cl.coords, om.weight):
            fh.write(json.dumps({"x": int(x), "y": int(y), "w": float(w)}) + "\n")
    print(f"{out}: {len(cl)} vertices, E[w^2] = {header['second_moment']:.4f}")


def load_weights(path):
    """Rebuild the cluster and weight field stored by ``weights build``."""
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        recs = [json.loads(line) for line in fh]
    cl = iic_approximant(header["n"], header["flavor"], header["cluster_seed"])
    w = np.zeros(len(cl))
    idx = cl.indices_of(np.array([r["x"] for r in recs]), np.array([r["y"] for r in recs]))
    if len(recs) != len(cl) or np.any(idx < 0):
        raise ValueError(f"{path}: weights do not match the regenerated cluster")
    w[idx] = [r["w"] for r in recs]
    return cl, WeightField(cl, w, header["mode"], header)


def cmd_distances(a):
    if a.metric == "weighted":
        if not a.weights:
            raise SystemExit("--metric weighted needs --weights")
        cl, om = load_weights(a.weights)
    else:
        cl = iic_approximant(a.n, a.flavor, derive_seed(a.seed, ["cluster", 0]))
        om = np.ones(len(cl))
    rng = np.random.default_rng(derive_seed(a.seed, ["pairs"]))
    per = max(1, a.pairs // a.sources)
    src = rng.choice(len(cl), size=min(a.sources, len(cl)), replace=False)
    pairs = sample_pairs(cl, src, per, rng, a.floor)[: a.pairs]
    dG, dw = pair_distances(cl, om, pairs)
    xs, ys = cl.xs, cl.ys
    rows = [
        {"source": s, "target": t, "sx": xs[s], "sy": ys[s], "tx": xs[t], "ty": ys[t], "dist_G": g, "dist_w": w}
        for (s, t), g, w in zip(pairs, dG, dw)
    ]
    out = _out_path(a.out, "dists.csv")
    write_csv(out, rows, ["source", "target", "sx", "sy", "tx", "ty", "dist_G", "dist_w"])
    print(f"{out}: {len(rows)} pairs")


def cmd_mtype(a):
    cl, om = load_weights(a.weights)
    r = markov_type_ratio(cl, om, a.t, a.walks, a.seed)
    out = _out_path(a.out, "mtype.csv")
    write_csv(out, ({"t": t, "ratio": q, "se": s} for t, q, s in zip(r["t"], r["ratio"], r["se"])), ["t", "ratio", "se"])
    print(f"{out}: max ratio {np.nanmax(r['ratio']):.4f}" + (" (degenerate weight)" if r["degenerate"] else ""))


def cmd_experiment(a):
    cfg = ExperimentConfig.load(a.config)
    if a.out_dir:
        cfg.out_dir = a.out_dir
    if a.seed is not None:
        cfg.seed = a.seed
    man = run_experiment(cfg, workers=a.workers)
    print(f"{cfg.out_dir}: {man.executed} of {man.task_count} tasks executed, outputs {', '.join(man.outputs)}")
    if cfg.kind == "full-pipeline":
        print(render_report(cfg.out_dir))


def cmd_report(a):
    print(render_report(a.dir or Path(default_out_dir()) / "full-pipeline"))


# -- parser ------------------------------------------------------------------------------


def build_parser():
    fmt = argparse.RawDescriptionHelpFormatter
    ap = argparse.ArgumentParser(prog="iiclab", description=__doc__, formatter_class=fmt)
    ap.add_argument("--version", action="version", version=f"iiclab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, epilog=None):
        p = sub.add_parser(name, help=help_, description=help_, epilog=epilog, formatter_class=fmt)
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.set_defaults(fn=fn)
        return p

    def cluster_args(p, n=256):
        p.add_argument("--n", type=int, default=n, help=f"box radius (default {n})")
        p.add_argument("--flavor", choices=("largest", "conditioned"), default="conditioned")

    def run_args(p):
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
        p.add_argument("--run-dir", default=None, help="resumable run directory")

    p = add("sample", cmd_sample, "Sample bond percolation on a box and save it.")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--out", default=None, help="binary sample path; a .json header is written beside it")

    p = add("covering", cmd_covering, "Check a random covering system.", COVERING_COLUMNS)
    p.add_argument("action", choices=("verify",))
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--window", type=int, default=256, help="half-width of the checked window")
    p.add_argument("--seeds", type=int_list, default=[0], help="comma separated covering seeds")
    p.add_argument("--padding-samples", type=int, default=10**4)
    p.add_argument("--out", default=None)

    p = add("arms", cmd_arms, "Estimate one- and two-arm probabilities.", ARMS_COLUMNS)
    p.add_argument("--n", type=int_list, default=[8, 16, 32, 64, 128], help="comma separated radii")
    p.add_argument("--trials", type=int, default=10**5)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--out", default=None)
    run_args(p)

    p = add("backbone-stats", cmd_backbone, "Frequency of the root in deep-patch backbones.", BACKBONE_COLUMNS)
    p.add_argument("--k", type=int_range, default=list(range(2, 9)), help="scales, e.g. 2..8")
    p.add_argument("--ensemble", type=int, default=1000)
    p.add_argument("--epsilon", type=float, default=1 / 3)
    cluster_args(p)
    p.add_argument("--out", default=None)
    run_args(p)

    p = add("weights", cmd_weights, "Build a conformal weight on one cluster (JSON lines: header, then x, y, w).")
    p.add_argument("action", choices=("build",))
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=("scale", "mixture", "hybrid"), default="scale")
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--c4", type=float, default=1.0)
    p.add_argument("--dprime", type=float, default=1.9)
    p.add_argument("--calibration", type=int, default=20, help="clusters used to estimate normalisers")
    cluster_args(p)
    p.add_argument("--out", default=None)

    p = add("distances", cmd_distances, "Chemical or weighted distances between sampled pairs.", DIST_COLUMNS)
    p.add_argument("--metric", choices=("chemical", "weighted"), default="chemical")
    p.add_argument("--weights", default=None, help="weights.jsonl from 'weights build'")
    p.add_argument("--pairs", type=int, default=120)
    p.add_argument("--sources", type=int, default=10)
    p.add_argument("--floor", type=int, default=8)
    cluster_args(p)
    p.add_argument("--out", default=None)

    p = add("walk", cmd_walk, "Displacement statistics of random walks on approximants.", WALK_COLUMNS)
    cluster_args(p)
    p.add_argument("--T", type=doubling_range, default=doubling_range("64..16384"))
    p.add_argument("--R", type=int_list, default=[2, 3, 4, 6, 8, 11, 16], help="hitting radii")
    p.add_argument("--clusters", type=int, default=100)
    p.add_argument("--walks", type=int, default=4)
    p.add_argument("--hit-walks", type=int, default=4)
    p.add_argument("--lazy", action="store_true")
    p.add_argument("--no-censor", action="store_true")
    p.add_argument("--out", default=None)
    run_args(p)

    p = add("fit", cmd_fit, "Log-log fits of CSV columns against an abscissa column.")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--x", default="T")
    p.add_argument("--y", action="append", default=None, help="column to fit (repeatable)")
    p.add_argument("--drop-first", action="store_true")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--out", default=None)

    p = add("mtype", cmd_mtype, "Markov-type ratio for a stored weight.", MTYPE_COLUMNS)
    p.add_argument("--weights", required=True)
    p.add_argument("--t", type=doubling_range, default=doubling_range("1..64"))
    p.add_argument("--walks", type=int, default=200)
    p.add_argument("--out", default=None)

    p = add("experiment", cmd_experiment, "Run or resume an experiment from a YAML config.")
    p.set_defaults(seed=None)
    p.add_argument("config")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--workers", type=int, default=None)

    p = add("report", cmd_report, "Print the acceptance summary of a full-pipeline run.")
    p.add_argument("dir", nargs="?", default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except RunFailed as e:
        for key, err in sorted(e.failed.items()):
            print(f"failed task {key}: {err}", file=sys.stderr)
        return 1
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
