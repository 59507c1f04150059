"""Command-line front end: ``rlvqsd sample|train|analyze|reproduce``."""

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis
from .agent import AgentConfig
from .ansatz import build_ee_block, to_unitary
from .config import ConfigError, ExperimentConfig, write_state_file
from .errors import (
    InsufficientAnsatzes,
    InsufficientData,
    MalformedLog,
    NoConvergence,
    NonFiniteLoss,
    NoSuccesses,
    ZeroVariance,
)
from .qas import run_experiment
from .qcore import concurrence_mixed, concurrence_pure, sample_hs_random_state

log = logging.getLogger("rlvqsd")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_INPUT = 0, 2, 3, 4, 5

SCALES = ("smoke", "desk", "full")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _train_one(cfg_dict):
    """Worker entry point; reuses a finished run with an identical config."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    out = Path(cfg.out_dir)
    done = out / "summary.json"
    if done.exists() and (out / "config.json").exists():
        if json.loads((out / "config.json").read_text()) == cfg.to_dict():
            return str(out), json.loads(done.read_text())
    _, summary = run_experiment(cfg, out)
    return str(out), summary


def train_many(configs, jobs=1):
    docs = [c.to_dict() for c in configs]
    if jobs > 1 and len(docs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_train_one, docs))
    return [_train_one(d) for d in docs]


def spread_targets(n, pool=400):
    """``n`` sampler seeds whose states span the concurrence range of the first ``pool`` seeds."""
    conc = np.array([concurrence_mixed(sample_hs_random_state(2, s)) for s in range(pool)])
    order = np.argsort(conc, kind="stable")
    picks = np.unique(np.round(np.linspace(0, pool - 1, n)).astype(int))
    return sorted(int(order[i]) for i in picks)


def low_concurrence_target(pool=200, goal=0.198, theta=0.5):
    """First-closest seed to ``goal`` concurrence among states the EE block makes more entangled."""
    from .qas import effective_input

    best, best_gap = None, math.inf
    for s in range(pool):
        rho = sample_hs_random_state(2, s)
        c = concurrence_mixed(rho)
        if concurrence_mixed(effective_input(rho, theta)) <= c:
            continue
        if abs(c - goal) < best_gap:
            best, best_gap = s, abs(c - goal)
    return best


def base_config(scale, **kw):
    if scale == "full":
        agent = AgentConfig()
    else:
        agent = AgentConfig(hidden=(128, 128))
    kw.setdefault("zeta", 1e-4 if scale == "full" else 1e-3)
    return ExperimentConfig(agent=agent, **kw)


# --------------------------------------------------------------------------
# sample


def cmd_sample(args):
    if args.qubits < 1 or args.count < 1:
        raise UsageError("--qubits and --count must be >= 1")
    out = Path(args.out or "states")
    seed = args.seed if args.seed is not None else 0
    out.mkdir(parents=True, exist_ok=True)
    if args.ensemble:
        if args.qubits != 2:
            raise UsageError("--ensemble is defined for two qubits")
        table = analysis.ensemble_study(args.count, seed)
        path = analysis.write_csv(out / "fig1_ensemble.csv", analysis.ENSEMBLE_HEADER,
                                  analysis.ensemble_table_rows(table))
        print(path)
        return EXIT_OK
    for i in range(args.count):
        s = seed + i
        rho = sample_hs_random_state(args.qubits, s)
        path = out / f"hs{args.qubits}-seed{s}.json"
        write_state_file(path, rho, id=f"hs{args.qubits}-seed{s}", sampler="hilbert-schmidt", seed=s)
        print(path)
    return EXIT_OK


# --------------------------------------------------------------------------
# train


TRAIN_OVERRIDES = {
    "episodes": "episodes", "zeta": "zeta", "d_max": "d_max", "ee_theta": "ee_theta",
    "budget": "optimizer_budget", "seed": "agent_seed", "policy_seed": "policy_seed",
}


def _train_config(args):
    config = args.config
    if config is None and args.resume and args.out is not None and (Path(args.out) / "config.json").exists():
        config = Path(args.out) / "config.json"
    cfg = ExperimentConfig.load(config) if config else ExperimentConfig()
    changes = {field: getattr(args, name) for name, field in TRAIN_OVERRIDES.items()
               if getattr(args, name, None) is not None}
    if args.target_seed is not None:
        changes["target"] = {"kind": "hs", "seed": args.target_seed, "n_qubits": 2}
    if args.state_file is not None:
        changes["target"] = {"kind": "file", "path": str(args.state_file)}
    if args.hidden is not None:
        changes["agent"] = replace(cfg.agent, hidden=tuple(args.hidden))
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    try:
        return ExperimentConfig.from_dict({**cfg.to_dict(), **{k: (v.to_dict() if isinstance(v, AgentConfig) else v)
                                                               for k, v in changes.items()}})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _summary_line(summary):
    return (f"{summary['state_id']} theta={summary['config']['ee_theta']} seed={summary['config']['agent_seed']}: "
            f"E_s={summary['E_s']}/{summary['E_tot']} reward={summary['total_reward']:.10g}")


def compare_arms(enhanced, default):
    """Ratios of success counts and collected reward between two runs."""

    def ratio(a, b):
        return a / b if b else None

    return {
        "enhanced": {"ee_theta": enhanced["config"]["ee_theta"], "E_s": enhanced["E_s"],
                     "total_reward": enhanced["total_reward"]},
        "default": {"ee_theta": default["config"]["ee_theta"], "E_s": default["E_s"],
                    "total_reward": default["total_reward"]},
        "success_ratio": ratio(enhanced["E_s"], default["E_s"]),
        "reward_ratio": ratio(enhanced["total_reward"], default["total_reward"]),
    }


def cmd_train(args):
    cfg = _train_config(args)
    if args.paired:
        if cfg.ee_theta == 0:
            raise UsageError("--paired needs a non-zero --ee-theta")
        out = Path(cfg.out_dir)
        arms = [replace(cfg, out_dir=str(out / f"theta{t:g}"), ee_theta=t) for t in (cfg.ee_theta, 0.0)]
        (_, s_enh), (_, s_def) = train_many(arms, args.jobs)
        for s in (s_enh, s_def):
            print(_summary_line(s))
        path = _write_json(out / "comparison.json", compare_arms(s_enh, s_def))
        print(path)
        return EXIT_OK
    if args.resume:
        _, summary = run_experiment(cfg, cfg.out_dir, resume=True, max_episodes=args.max_episodes)
    else:
        _, summary = run_experiment(cfg, cfg.out_dir, max_episodes=args.max_episodes)
    print(_summary_line(summary))
    return EXIT_OK


# --------------------------------------------------------------------------
# analyze


def _read_points(path):
    """``(input_concurrence, upper, lower)`` from a bounds CSV."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    cols = [header.index(c) for c in ("input_concurrence", "max_concurrence_mean", "min_concurrence_mean")]
    data = np.genfromtxt(path, delimiter=",", skip_header=1, usecols=cols, ndmin=2)
    return [tuple(row) for row in data if not np.isnan(row).any()]


def analyze_bounds(records, out):
    bounds = analysis.extract_concurrence_bounds(records)
    return [analysis.write_csv(out / "bounds.csv", analysis.BOUNDS_HEADER, analysis.bounds_rows(bounds))]


def analyze_eta(args, out):
    if len(args.logs) == 1 and str(args.logs[0]).endswith(".csv"):
        points = _read_points(args.logs[0])
    else:
        points = analysis.bounds_points(analysis.extract_concurrence_bounds(analysis.load_runs(args.logs)))
    if not points:
        raise NoSuccesses("no states with admissible ansatzes")
    if args.k_step <= 0 or args.k_max < args.k_min:
        raise UsageError("need k-step > 0 and k-max >= k-min")
    scan = analysis.eta_scan(points, analysis.k_grid(args.k_min, args.k_max, args.k_step))
    print(f"k* = {'none' if scan.k_star is None else format(scan.k_star, '.10g')}")
    return [analysis.write_csv(out / "eta_scan.csv", analysis.ETA_HEADER, analysis.eta_rows(scan)),
            _write_json(out / "eta_scan.json", {"k_star": scan.k_star, "n_points": len(points)})]


def analyze_contribution(records, out):
    pts = analysis.contribution_points(records)
    neg, pos = analysis.cumulative_weight(pts)
    print(f"cumulative weight: delta<0 {neg:.10g}, delta>0 {pos:.10g}")
    rows = [(sid, ep, dc, d) for dc, d, sid, ep in pts]
    return [analysis.write_csv(out / "fig6_contribution.csv", ["state_id", "episode", "delta_concurrence", "delta"],
                               rows),
            _write_json(out / "fig6_summary.json", {"n_points": len(pts), "cumulative_weight_negative": neg,
                                                    "cumulative_weight_positive": pos})]


def analyze_eigen(records, out):
    results, skipped = analysis.eigenvalue_correlation_study(records)
    if skipped:
        log.warning("skipped (fewer than 3 admissible ansatzes): %s", ", ".join(skipped))
    return [analysis.write_csv(out / "fig7_eigen_correlation.csv", analysis.EIGEN_HEADER,
                               analysis.eigen_rows(results))]


def analyze_resources(records, out):
    rows, averages = analysis.resource_stats(records)
    return [analysis.write_csv(out / "resources.csv", analysis.RESOURCE_HEADER, rows),
            _write_json(out / "resources_summary.json", averages)]


def analyze_ensemble(args, out):
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    seed = args.seed if args.seed is not None else 0
    table = analysis.ensemble_study(args.count, seed)
    paths = [analysis.write_csv(out / "fig1_ensemble.csv", analysis.ENSEMBLE_HEADER,
                                analysis.ensemble_table_rows(table))]
    if args.count >= 10:
        paths.append(_write_json(out / "fig1_summary.json", analysis.ensemble_aggregates(table)))
    return paths


def cmd_analyze(args):
    out = Path(args.out or ".")
    study = args.study
    if study == "ensemble":
        paths = analyze_ensemble(args, out)
    elif study == "eta-scan":
        paths = analyze_eta(args, out)
    else:
        records = analysis.load_runs(args.logs)
        fn = {"bounds": analyze_bounds, "contribution": analyze_contribution,
              "eigen-correlation": analyze_eigen, "resources": analyze_resources}[study]
        paths = fn(records, out)
    for p in paths:
        print(p)
    return EXIT_OK


# --------------------------------------------------------------------------
# reproduce

RECIPES = {
    "table1": ("Table I", "concurrence bounds per state across DDQN seeds"),
    "fig2": ("Fig. 2", "correlation of upper and lower bounds against input concurrence"),
    "fig4": ("Fig. 4", "EE-block concurrence against theta"),
    "table2": ("Table II", "success count and reward with and without the EE block"),
    "fig6": ("Fig. 6", "per-qubit conditional-entropy contribution"),
    "fig7": ("Fig. 7", "eigenvalues against qubit correlation"),
    "fig1": ("Fig. 1", "Hilbert-Schmidt ensemble trends"),
}

# (states, agent seeds, episodes) for the training-based recipes
TRAIN_SCALE = {
    "table1": {"smoke": (2, 1, 20), "desk": (5, 2, 300), "full": (9, 5, 10000)},
    "fig2": {"smoke": (4, 1, 20), "desk": (12, 1, 300), "full": (25, 1, 10000)},
    "fig6": {"smoke": (2, 1, 20), "desk": (6, 1, 300), "full": (25, 1, 10000)},
    "fig7": {"smoke": (2, 1, 30), "desk": (6, 1, 300), "full": (25, 1, 10000)},
}
TABLE2_SCALE = {"smoke": (1, 200), "desk": (3, 500), "full": (5, 10000)}
FIG1_SCALE = {"smoke": 2000, "desk": 100000, "full": 100000}

CAVEAT = {
    "smoke": "plumbing check only; numbers carry no scientific weight",
    "desk": "reduced episodes, states and network size; qualitative trends only",
    "full": "original-scale settings; expect days of single-core compute",
}


def _train_recipe(name, scale, out, base_seed, jobs):
    n_states, n_seeds, episodes = TRAIN_SCALE[name][scale]
    targets = spread_targets(n_states)
    configs = [
        base_config(scale, target={"kind": "hs", "seed": t, "n_qubits": 2}, episodes=episodes,
                    agent_seed=base_seed + k, policy_seed=1000 + base_seed + k,
                    out_dir=str(out / "runs" / f"hs2-seed{t}" / f"agent{base_seed + k}"))
        for t in targets for k in range(n_seeds)
    ]
    results = train_many(configs, jobs)
    for _, s in results:
        print(_summary_line(s))
    return analysis.load_runs(p for p, _ in results), [p for p, _ in results]


def recipe_fig4(out, scale, seed, jobs):
    thetas = np.linspace(0.0, 0.5, 101)
    rows = []
    for t in thetas:
        u = to_unitary(build_ee_block(float(t)))
        rows.append((float(t), concurrence_pure(u[:, 0]), abs(math.sin(math.pi * t))))
    return [analysis.write_csv(out / "fig4_ee_concurrence.csv", ["theta", "concurrence", "abs_sin_pi_theta"], rows)]


def recipe_fig1(out, scale, seed, jobs):
    table = analysis.ensemble_study(FIG1_SCALE[scale], seed)
    return [analysis.write_csv(out / "fig1_ensemble.csv", analysis.ENSEMBLE_HEADER,
                               analysis.ensemble_table_rows(table)),
            _write_json(out / "fig1_summary.json", analysis.ensemble_aggregates(table))]


def recipe_table1(out, scale, seed, jobs):
    records, runs = _train_recipe("table1", scale, out, seed, jobs)
    return analyze_bounds(records, out) + [_write_json(out / "runs.json", runs)]


def recipe_fig2(out, scale, seed, jobs):
    records, runs = _train_recipe("fig2", scale, out, seed, jobs)
    paths = analyze_bounds(records, out)
    points = analysis.bounds_points(analysis.extract_concurrence_bounds(records))
    scan = analysis.eta_scan(points, analysis.k_grid(0.05, 0.6, 0.005)) if points else None
    if scan is not None:
        paths.append(analysis.write_csv(out / "eta_scan.csv", analysis.ETA_HEADER, analysis.eta_rows(scan)))
        paths.append(_write_json(out / "eta_scan.json", {"k_star": scan.k_star, "n_points": len(points)}))
    return paths + [_write_json(out / "runs.json", runs)]


def recipe_fig6(out, scale, seed, jobs):
    records, runs = _train_recipe("fig6", scale, out, seed, jobs)
    return analyze_contribution(records, out) + [_write_json(out / "runs.json", runs)]


def recipe_fig7(out, scale, seed, jobs):
    records, runs = _train_recipe("fig7", scale, out, seed, jobs)
    return analyze_eigen(records, out) + [_write_json(out / "runs.json", runs)]


def recipe_table2(out, scale, seed, jobs):
    n_seeds, episodes = TABLE2_SCALE[scale]
    target = low_concurrence_target()
    configs = [
        base_config(scale, target={"kind": "hs", "seed": target, "n_qubits": 2}, episodes=episodes,
                    ee_theta=theta, agent_seed=seed + k, policy_seed=1000 + seed + k,
                    out_dir=str(out / "runs" / f"agent{seed + k}" / f"theta{theta:g}"))
        for k in range(n_seeds) for theta in (0.5, 0.0)
    ]
    results = train_many(configs, jobs)
    rows, pairs = [], []
    for k in range(n_seeds):
        (_, enh), (_, dflt) = results[2 * k], results[2 * k + 1]
        cmp_ = compare_arms(enh, dflt)
        pairs.append({"agent_seed": seed + k, **cmp_})
        for s in (enh, dflt):
            print(_summary_line(s))
            rows.append((seed + k, s["config"]["ee_theta"], s["input_concurrence"], s["E_tot"], s["E_s"],
                         s["total_reward"]))
    return [analysis.write_csv(out / "table2.csv", ["agent_seed", "ee_theta", "input_concurrence", "episodes",
                                                     "successes", "total_reward"], rows),
            _write_json(out / "table2_pairs.json", {"target_seed": target, "pairs": pairs})]


RECIPE_FN = {"table1": recipe_table1, "fig2": recipe_fig2, "fig4": recipe_fig4, "table2": recipe_table2,
             "fig6": recipe_fig6, "fig7": recipe_fig7, "fig1": recipe_fig1}


def cmd_reproduce(args):
    scale = args.scale or "desk"
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out or Path("reproduce") / args.recipe)
    out.mkdir(parents=True, exist_ok=True)
    paths = RECIPE_FN[args.recipe](out, scale, seed, args.jobs)
    artifact, what = RECIPES[args.recipe]
    manifest = {
        "recipe": args.recipe,
        "artifact": artifact,
        "description": what,
        "scale": scale,
        "caveat": CAVEAT[scale],
        "seed": seed,
        "code_version": __version__,
        "outputs": sorted(str(Path(p).relative_to(out)) if Path(p).is_relative_to(out) else str(p) for p in paths),
    }
    print(_write_json(out / "manifest.json", manifest))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master RNG seed")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("--scale", choices=SCALES, default=default, help="run scale for reproduce recipes")


def build_parser():
    p = argparse.ArgumentParser(prog="rlvqsd", description="RL-assisted variational state diagonalisation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("sample", help="write Hilbert-Schmidt random states")
    _global_flags(s, suppress=True)
    s.add_argument("--qubits", type=int, default=2, help="qubits per state")
    s.add_argument("--count", type=int, default=1, help="number of states")
    s.add_argument("--ensemble", action="store_true", help="write fig1_ensemble.csv instead of state files")
    s.set_defaults(func=cmd_sample)

    t = sub.add_parser("train", help="run one RL-VQSD experiment")
    _global_flags(t, suppress=True)
    t.add_argument("config", nargs="?", type=Path, help="config JSON (defaults used when omitted)")
    t.add_argument("--episodes", type=int, help="total episodes")
    t.add_argument("--zeta", type=float, help="success threshold on the cost")
    t.add_argument("--d-max", type=int, help="maximum gates per episode")
    t.add_argument("--ee-theta", type=float, help="EE-block angle in [0, 0.5]")
    t.add_argument("--budget", type=int, help="optimizer evaluations per step")
    t.add_argument("--policy-seed", type=int, help="seed of the exploration stream")
    t.add_argument("--target-seed", type=int, help="sample the target state with this seed")
    t.add_argument("--state-file", type=Path, help="read the target state from a JSON file")
    t.add_argument("--hidden", type=int, nargs="+", help="hidden layer widths")
    t.add_argument("--resume", action="store_true", help="continue from checkpoint.bin in the output dir")
    t.add_argument("--max-episodes", type=int, help="stop after this many new episodes")
    t.add_argument("--paired", action="store_true", help="also run the theta=0 arm and compare")
    t.add_argument("--jobs", type=int, default=1, help="parallel workers for --paired")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("analyze", help="post-hoc studies over episode logs")
    _global_flags(a, suppress=True)
    asub = a.add_subparsers(dest="study", required=True, metavar="STUDY")
    for name, helptext in (("bounds", "concurrence bounds per state"),
                           ("contribution", "per-qubit conditional-entropy contribution"),
                           ("eigen-correlation", "eigenvalues against qubit correlation"),
                           ("resources", "resources of the bound-attaining ansatzes")):
        x = asub.add_parser(name, help=helptext)
        _global_flags(x, suppress=True)
        x.add_argument("logs", nargs="+", type=Path, help="run directories or episodes.jsonl files")
    x = asub.add_parser("eta-scan", help="phase-transition scan over the split point k")
    _global_flags(x, suppress=True)
    x.add_argument("logs", nargs="+", type=Path, help="run directories, log files, or one bounds.csv")
    x.add_argument("--k-min", type=float, default=0.05, help="first grid point")
    x.add_argument("--k-max", type=float, default=0.6, help="last grid point")
    x.add_argument("--k-step", type=float, default=0.005, help="grid spacing")
    x = asub.add_parser("ensemble", help="random-state ensemble table")
    _global_flags(x, suppress=True)
    x.add_argument("--count", type=int, default=100000, help="number of samples")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("reproduce", help="scripted study named after a figure or table")
    _global_flags(r, suppress=True)
    r.add_argument("recipe", choices=sorted(RECIPES), help="which study")
    r.add_argument("--jobs", type=int, default=1, help="parallel training workers")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (MalformedLog, ConfigError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonFiniteLoss, NoConvergence, ZeroVariance, NoSuccesses, InsufficientData, InsufficientAnsatzes,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
