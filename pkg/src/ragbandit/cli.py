"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 environment error,
4 validation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import yaml

from .config import (LandscapeSection, build_config, build_environment, load_config_file, resolve_space,
                     reward_params, run_config)
from .environment import gen_landscape, gen_landscape_pair, regime_report, scan_replay, write_replay
from .environment.replay import manifest_path_for
from .exceptions import ConfigError, EnvironmentFailure, ReplayFormatError
from .harness import (CONTINUE, RESET, aggregate_seeds, default_parallelism, derive_seeds, grid_search,
                      model_switch_run, read_oracle, run_seeds, sweep, write_aggregate, write_oracle,
                      write_results, write_trial_log)
from .reward import PROFILES

logger = logging.getLogger("ragbandit")

EXIT_OK, EXIT_CONFIG, EXIT_ENV, EXIT_INVALID = 0, 2, 3, 4
RESOLVED_CONFIG = "resolved-config.json"
INCOMPLETE_MARKER = "INCOMPLETE"


def _dump_json(doc, path):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _parse_value(text):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _set_dotted(doc, key, value):
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        child = node.get(p)
        if not isinstance(child, dict):
            child = {}
            node[p] = child
        node = child
    node[parts[-1]] = value


def _overrides(args, names):
    """Command-line values that should win over the config file."""
    out = {}
    for attr, key in names.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


GLOBAL_FLAGS = {"seed": "seed", "out": "out", "parallel": "parallel"}


def load_cli_config(args, extra=None, write=True):
    doc = load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, value in _overrides(args, {**GLOBAL_FLAGS, **(extra or {})}).items():
        _set_dotted(doc, key, value)
    cfg = build_config(doc)
    out = Path(cfg.out)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(cfg.model_dump(mode="json"), out / RESOLVED_CONFIG)
    return cfg


def _parallel(cfg):
    return cfg.parallel or default_parallelism()


def _design_t_max(cfg):
    env = cfg.environment
    if isinstance(env, LandscapeSection):
        return PROFILES[env.profile]
    return getattr(env, "t_max", PROFILES["asqa-like"])


def _environment(cfg, section=None):
    space = resolve_space(cfg)
    design = reward_params(cfg, _design_t_max(cfg))
    env = build_environment(section or cfg.environment, space, design)
    if env.space != space and not isinstance(cfg.space, str):
        raise ConfigError("the configured space does not match the environment's space")
    return env, reward_params(cfg, env.t_max)


def _config_ids(env):
    return getattr(env, "config_ids", None)


def _oracle(cfg, env, reward, out, name="oracle.csv"):
    if cfg.oracle == "auto":
        oracle = grid_search(env, reward)
        write_oracle(oracle, env.space, out / name, _config_ids(env))
        return oracle
    return read_oracle(cfg.oracle, env.space)


def _clear_marker(out):
    marker = out / INCOMPLETE_MARKER
    if marker.exists():
        marker.unlink()


def _flag_incomplete(out, message, written):
    doc = {"error": message, "completed_files": sorted(written)}
    _dump_json(doc, out / INCOMPLETE_MARKER)


def _write_trajectories(trajectories, out, method, suffix=""):
    names = []
    for r, t in enumerate(trajectories):
        name = f"trajectory_{method}_seed{r}{suffix}.csv"
        write_trial_log(t, out / name)
        names.append(name)
    return names


def _summary(curves):
    for c in curves:
        print(f"{c.method}: Recall@x at budget {c.budgets[-1]} = {c.mean[-1]:.3f} +/- {c.std[-1]:.3f} "
              f"({c.n_seeds} seeds)")


# -- commands ----------------------------------------------------------------

def cmd_grid(args):
    cfg = load_cli_config(args)
    env, reward = _environment(cfg)
    oracle = grid_search(env, reward)
    out = Path(cfg.out)
    write_oracle(oracle, env.space, out / "oracle.csv", _config_ids(env))
    print(f"oracle written to {out / 'oracle.csv'} ({len(oracle)} configs)")
    print(f"eval_count: {oracle.eval_count}")
    return EXIT_OK


def cmd_run(args):
    cfg = load_cli_config(args, {"method": "method", "budget": "budget", "batch_size": "batch_size",
                                 "seeds": "seeds", "oracle": "oracle"})
    out = Path(cfg.out)
    _clear_marker(out)
    env, reward = _environment(cfg)
    oracle = _oracle(cfg, env, reward, out)
    seeds = derive_seeds(cfg.seed, cfg.seeds)
    written, all_trajectories, curves = [], [], []
    for method in cfg.methods:
        run = run_config(cfg, method, reward)
        try:
            trajectories = run_seeds(run, env, seeds, oracle, _parallel(cfg))
        except EnvironmentFailure as exc:
            _flag_incomplete(out, f"{method}: {exc}", written)
            raise
        written += _write_trajectories(trajectories, out, method)
        all_trajectories += trajectories
        curves.append(aggregate_seeds(trajectories))
    write_results(all_trajectories, out / "results.csv")
    write_aggregate(curves, out / "aggregate.csv")
    _summary(curves)
    return EXIT_OK


def _cell_dirname(label):
    return "cell_" + re.sub(r"[^A-Za-z0-9_.=-]+", "_", label)


def cmd_sweep(args):
    cfg = load_cli_config(args, {"method": "method", "budget": "budget", "seeds": "seeds"})
    grid = dict(cfg.grid)
    for item in args.grid or []:
        if "=" not in item:
            raise ConfigError(f"--grid expects key=v1,v2,..., got {item!r}")
        key, values = item.split("=", 1)
        grid[key.strip()] = [_parse_value(v) for v in values.split(",")]
    if len(cfg.methods) > 1 and "method" not in grid:
        grid = {"method": cfg.methods, **grid}
    out = Path(cfg.out)
    env, reward = _environment(cfg)
    base = run_config(cfg, cfg.methods[0], reward)
    cells = sweep(base, grid, env, derive_seeds(cfg.seed, cfg.seeds), _parallel(cfg))
    rows = []
    for cell in cells:
        sub = out / _cell_dirname(cell.label)
        sub.mkdir(parents=True, exist_ok=True)
        _dump_json({k: v for k, v in cell.overrides.items()}, sub / "overrides.json")
        _write_trajectories(cell.trajectories, sub, cell.run.method)
        write_results(cell.trajectories, sub / "results.csv")
        write_aggregate([cell.aggregate], sub / "aggregate.csv")
        for b, m, s in zip(cell.aggregate.budgets, cell.aggregate.mean, cell.aggregate.std):
            rows.append([cell.label, cell.run.method, b, repr(float(m)), repr(float(s))])
        print(f"{cell.label}: final recall {cell.aggregate.mean[-1]:.3f} +/- {cell.aggregate.std[-1]:.3f}")
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("cell,method,budget,recall_mean,recall_std\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    print(f"{len(cells)} cells written under {out}")
    return EXIT_OK


def _switch_envs(cfg):
    sw = cfg.switch
    env1, reward = _environment(cfg)
    if sw.phase2 is not None:
        env2, _ = _environment(cfg, sw.phase2)
        return env1, env2, reward
    section = cfg.environment
    if not isinstance(section, LandscapeSection) or section.path:
        raise ConfigError("switch needs a 'switch.phase2' environment unless phase 1 is a generated landscape")
    design = reward_params(cfg, PROFILES[section.profile])
    env1, env2 = gen_landscape_pair(section.regime, resolve_space(cfg), seed=section.seed, lift=sw.lift,
                                    jitter=sw.jitter, reward=design, noise_std=section.noise_std,
                                    profile=section.profile)
    return env1, env2, reward


def cmd_switch(args):
    cfg = load_cli_config(args, {"method": "method", "seeds": "seeds", "mode": "switch.mode",
                                 "switch_budget": "switch.budget", "phase2_budget": "budget"})
    out = Path(cfg.out)
    sw = cfg.switch
    env1, env2, reward = _switch_envs(cfg)
    if env1.space != env2.space:
        raise ConfigError("both phases must share one search space")
    o1 = grid_search(env1, reward)
    o2 = grid_search(env2, reward)
    write_oracle(o1, env1.space, out / "oracle_phase1.csv", _config_ids(env1))
    write_oracle(o2, env2.space, out / "oracle_phase2.csv", _config_ids(env2))
    modes = [CONTINUE, RESET] if sw.mode == "both" else [sw.mode]
    seeds = derive_seeds(cfg.seed, cfg.seeds)
    # total run = phase 1 (switch.budget) + phase 2 (budget)
    total = sw.budget + cfg.budget
    for mode in modes:
        sub = out / mode
        sub.mkdir(parents=True, exist_ok=True)
        meta = {"mode": mode, "switch_budget": sw.budget, "phase2_budget": cfg.budget, "runs": []}
        phase1_all, phase2_all, curves = [], [], []
        for method in cfg.methods:
            run = run_config(cfg, method, reward).replace(budget=total)
            p1s, p2s = [], []
            for r, s in enumerate(seeds):
                pulls = {}

                def on_switch(tuner, pulls=pulls):
                    pulls["total"] = int(tuner.n_trials_)

                p1, p2, _ = model_switch_run(run.replace(seed=s), env1, env2, sw.budget, mode, (o1, o2),
                                             on_switch=on_switch)
                write_trial_log(p1, sub / f"trajectory_{method}_seed{r}_phase1.csv")
                write_trial_log(p2, sub / f"trajectory_{method}_seed{r}_phase2.csv")
                meta["runs"].append({"method": method, "replicate": r, "seed": s,
                                     "pulls_after_switch": pulls["total"]})
                p1s.append(p1)
                p2s.append(p2)
            phase1_all += p1s
            phase2_all += p2s
            curves.append(aggregate_seeds(p2s))
        write_results(phase1_all, sub / "results_phase1.csv")
        write_results(phase2_all, sub / "results_phase2.csv")
        write_aggregate(curves, sub / "aggregate_phase2.csv")
        _dump_json(meta, sub / "metadata.json")
        print(f"[{mode}]")
        _summary(curves)
    return EXIT_OK


def cmd_validate(args):
    manifest = args.manifest or manifest_path_for(args.path)
    try:
        table, problems, warnings = scan_replay(args.path, manifest)
    except ReplayFormatError as exc:
        print(f"error: {exc}")
        return EXIT_INVALID
    for w in warnings:
        print(f"warning: {w}")
    if problems:
        for p in problems:
            print(f"error: {p}")
        print(f"{args.path}: {len(problems)} problem(s)")
        return EXIT_INVALID
    print(f"{args.path}: ok ({table.space.cardinality} configs x {table.n_queries} queries, "
          f"{len(table)} records)")
    return EXIT_OK


def cmd_gen_landscape(args):
    cfg = load_cli_config(args, {"regime": "environment.regime", "noise_std": "environment.noise_std",
                                 "profile": "environment.profile"})
    section = cfg.environment
    if not isinstance(section, LandscapeSection):
        raise ConfigError("gen-landscape needs a landscape environment section")
    seed = getattr(args, "seed", None)
    seed = section.seed if seed is None else seed
    space = resolve_space(cfg)
    design = reward_params(cfg, PROFILES[section.profile])
    out = Path(cfg.out)
    if args.pair:
        models = gen_landscape_pair(section.regime, space, seed=seed, reward=design,
                                    noise_std=section.noise_std, profile=section.profile)
        names = ["landscape_phase1", "landscape_phase2"]
    else:
        models = [gen_landscape(section.regime, space, seed=seed, reward=design, noise_std=section.noise_std,
                                profile=section.profile)]
        names = ["landscape"]
    for model, name in zip(models, names):
        _dump_json(model.to_dict(), out / f"{name}.json")
        report = {k: (round(v, 4) if isinstance(v, float) else v) for k, v in regime_report(model).items()}
        print(f"{name}.json: {report}")
        if args.queries:
            table = model.sample_replay(args.queries, seed=seed)
            write_replay(table, out / f"{name}_replay.csv")
            print(f"{name}_replay.csv: {table.space.cardinality} configs x {args.queries} queries")
    return EXIT_OK


def cmd_serve(args):
    import uvicorn

    from .service.app import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--parallel", type=int, default=argparse.SUPPRESS,
                        help="worker processes for seeds and sweep cells")
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                        help="override a config field, dotted keys allowed (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="ragbandit", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", parents=[common], help="exhaustive oracle ranking")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("run", parents=[common], help="online tuning runs over several seeds")
    p.add_argument("--method", action="append", help="tuner (repeatable)")
    p.add_argument("--budget", type=int, help="query evaluations per run (T*B)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seeds", type=int, help="number of replicate seeds")
    p.add_argument("--oracle", help="'auto' or an oracle file written by 'grid'")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="grid of run-parameter overrides")
    p.add_argument("--method", action="append")
    p.add_argument("--budget", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="values for one field (repeatable)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("switch", parents=[common], help="two-phase run with a mid-run environment swap")
    p.add_argument("--method", action="append")
    p.add_argument("--seeds", type=int)
    p.add_argument("--mode", choices=["continue", "reset", "both"])
    p.add_argument("--switch-budget", type=int, help="evaluations before the swap")
    p.add_argument("--phase2-budget", type=int, help="evaluations after the swap")
    p.set_defaults(func=cmd_switch)

    p = sub.add_parser("validate", parents=[common], help="check a replay file and its manifest")
    p.add_argument("path")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-landscape", parents=[common], help="write a synthetic landscape")
    p.add_argument("--regime", choices=["easy", "medium", "hard"])
    p.add_argument("--noise-std", type=float)
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--queries", type=int, help="also sample a replay table with this many queries")
    p.add_argument("--pair", action="store_true", help="write a correlated two-phase pair")
    p.set_defaults(func=cmd_gen_landscape)

    p = sub.add_parser("serve", parents=[common], help="run the suggest/report service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ReplayFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT_ENV
    except EnvironmentFailure as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
