"""Command line driver: gen-data, train, eval, sweep, serve.

A JSON config file supplies per-module settings; flags override single
fields (flags win). Every stochastic stage takes --seed and is then
bit-reproducible in its primary outputs.
"""

import argparse
import dataclasses
import json
import sys

from .catalog import SyntheticConfig
from .dialoggen import CorpusConfig
from .env import RewardConfig
from .nlu import TrackerConfig
from .policy import PolicyConfig
from .recommender import FMConfig
from . import pipeline
from .pipeline import (EnvConfig, PretrainConfig, RLConfig, StageError)

SECTIONS = {
    "catalog": SyntheticConfig,
    "corpus": CorpusConfig,
    "tracker": TrackerConfig,
    "fm": FMConfig,
    "policy": PolicyConfig,
    "reward": RewardConfig,
    "env": EnvConfig,
    "pretrain": PretrainConfig,
    "rl": RLConfig,
}


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    for section, payload in doc.items():
        if section not in SECTIONS:
            raise StageError(f"unknown config section {section!r}")
        fields = {f.name for f in dataclasses.fields(SECTIONS[section])}
        for key in payload:
            if key not in fields:
                raise StageError(f"unknown key {section}.{key} in config")
    return doc


def _section(doc, name, overrides=None):
    """Dataclass for a config section; non-None overrides win."""
    payload = dict(doc.get(name, {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            payload[key] = value
    return SECTIONS[name](**payload)


def _policies(arg):
    names = [p.strip() for p in arg.split(",") if p.strip()]
    if not names:
        raise StageError("empty policy list")
    return names


def _grid_axis(arg, cast):
    return [cast(x) for x in arg.split(",") if x.strip()]


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #

def cmd_gen_data(args):
    doc = _load_config(args.config)
    catalog_cfg = _section(doc, "catalog", {
        "n_users": args.users, "n_items": args.items, "seed": args.seed})
    corpus_cfg = _section(doc, "corpus", {
        "typo_rate": args.typo_rate, "casing_rate": args.casing_rate,
        "seed": args.seed})
    info = pipeline.stage_gen_data(args.run, catalog_cfg, corpus_cfg)
    print(f"wrote {info['users']} users, {info['items']} items, "
          f"{info['ratings']} ratings, {info['dialogues']} dialogues to {args.run}")
    return 0


def cmd_train(args):
    doc = _load_config(args.config)
    quiet = not args.verbose
    if args.stage == "tracker":
        cfg = _section(doc, "tracker", {
            "max_epochs": args.epochs, "learning_rate": args.lr,
            "hidden": args.hidden, "seed": args.seed})
        info = pipeline.stage_train_tracker(args.run, cfg, verbose=not quiet)
        per_facet = " ".join(f"{k}={v:.3f}" for k, v in info["dev_per_facet"].items())
        print(f"tracker: dev joint {info['dev_joint']:.3f} ({per_facet}) "
              f"after {info['epochs']} epochs -> {info['checkpoint']}")
    elif args.stage == "fm":
        cfg = _section(doc, "fm", {
            "max_epochs": args.epochs, "learning_rate": args.lr, "seed": args.seed})
        info = pipeline.stage_train_fm(args.run, cfg, verbose=not quiet)
        print(f"fm: dev rmse {info['dev_rmse']:.4f} after {info['epochs']} epochs "
              f"-> {info['checkpoint']}")
    elif args.stage == "pretrain":
        policy_cfg = _section(doc, "policy", {"seed": args.seed})
        pre_cfg = _section(doc, "pretrain", {
            "episodes": args.episodes, "max_epochs": args.epochs,
            "learning_rate": args.lr, "seed": args.seed})
        info = pipeline.stage_pretrain(
            args.run, policy_cfg, pre_cfg, _section(doc, "env"),
            _section(doc, "reward"), verbose=not quiet)
        print(f"pretrain: dev accuracy {info['dev_accuracy']:.3f} "
              f"-> {info['checkpoint']}")
    elif args.stage == "rl":
        rl_cfg = _section(doc, "rl", {
            "epochs": args.epochs, "batches_per_epoch": args.batches_per_epoch,
            "batch_size": args.batch_size, "seed": args.seed})
        policy_cfg = _section(doc, "policy", {
            "gamma": args.gamma, "learning_rate": args.lr, "seed": args.seed})
        reward_cfg = _section(doc, "reward", {"model": args.model})
        info = pipeline.stage_train_rl(
            args.run, rl_cfg, _section(doc, "env"), reward_cfg,
            allow_random_init=args.allow_random_init,
            policy_config=policy_cfg, verbose=not quiet)
        print(f"rl[{info['reward_model']}]: behavior reward {info['avg_reward']} "
              f"turns {info['avg_turns']} -> {info['checkpoint']}")
    return 0


def cmd_eval(args):
    doc = _load_config(args.config)
    reward_cfg = _section(doc, "reward", {
        "model": args.model, "C": args.C, "K": args.K})
    env_cfg = _section(doc, "env", {
        "mu": args.mu, "theta_known": args.theta_known})
    out, rows = pipeline.stage_eval(
        args.run, _policies(args.policies), reward_cfg, env_cfg,
        n_episodes=args.episodes, seed=args.seed if args.seed is not None else 0,
        workers=args.workers)
    for row in rows:
        print(f"{row['policy']:>16}: R {row['R']:8.3f}  T {row['T']:5.2f}  "
              f"S {row['S']:5.1f}  W {row['W']:4.1f}  L {row['L']:4.1f}  "
              f"timeout {row['timeout']:4.1f}")
    print(f"wrote {out}")
    return 0


def cmd_sweep(args):
    doc = _load_config(args.config)
    grid = []
    axes = []
    if args.C_grid:
        axes.append([("C", v) for v in _grid_axis(args.C_grid, float)])
    if args.K_grid:
        axes.append([("K", v) for v in _grid_axis(args.K_grid, int)])
    if args.model_grid:
        axes.append([("model", v) for v in _grid_axis(args.model_grid, str)])
    if args.acc_grid:
        axes.append([("acc", v) for v in _grid_axis(args.acc_grid, float)])
    if not axes:
        raise StageError("sweep needs at least one grid axis "
                         "(--C-grid / --K-grid / --model-grid / --acc-grid)")
    points = [{}]
    for axis in axes:
        points = [dict(p, **{k: v}) for p in points for k, v in axis]
    grid.extend(points)
    out, rows = pipeline.stage_sweep(
        args.run, _policies(args.policies), grid,
        _section(doc, "reward"), _section(doc, "env"),
        n_episodes=args.episodes, seed=args.seed if args.seed is not None else 0,
        workers=args.workers)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_serve(args):
    doc = _load_config(args.config)
    from . import service
    return service.run_server(
        args.run, env_config=_section(doc, "env"),
        reward_config=_section(doc, "reward"), policy=args.policy,
        host=args.host, port=args.port, study_log=args.study_log,
        ttl_minutes=args.ttl_minutes)


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #

def build_parser():
    parser = argparse.ArgumentParser(
        prog="convrec",
        description="Conversational recommender pipeline: synthetic data, "
                    "staged training, evaluation, sweeps and a chat service.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--run", default="run", help="run directory (default: run)")
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="seed for stochastic stages")

    p = sub.add_parser("gen-data", help="synthesize catalog and dialogue corpus")
    common(p)
    p.add_argument("--users", type=int, help="number of synthetic users")
    p.add_argument("--items", type=int, help="number of synthetic items")
    p.add_argument("--typo-rate", type=float, help="per-word typo probability")
    p.add_argument("--casing-rate", type=float, help="per-word upcasing probability")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one pipeline stage")
    p.add_argument("stage", choices=["tracker", "fm", "pretrain", "rl"])
    common(p)
    p.add_argument("--epochs", type=int, help="stage epoch budget")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--hidden", type=int, help="tracker LSTM width")
    p.add_argument("--episodes", type=int, help="pretrain harvest episodes")
    p.add_argument("--batches-per-epoch", type=int, help="rl batches per epoch")
    p.add_argument("--batch-size", type=int, help="rl episodes per batch")
    p.add_argument("--gamma", type=float, help="rl discount factor")
    p.add_argument("--model", choices=["linear", "ndcg", "cascade"],
                   help="reward model for the rl stage")
    p.add_argument("--allow-random-init", action="store_true",
                   help="let rl start from random weights (skips pretrain)")
    p.add_argument("--verbose", action="store_true", help="per-epoch prints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate policies on held-out episodes")
    common(p)
    p.add_argument("--policies", default="maxent_full,crm",
                   help="comma list: maxent_full, maxent@K, crm, random, recommend_first")
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--model", choices=["linear", "ndcg", "cascade"])
    p.add_argument("--C", type=float, help="success reward scale")
    p.add_argument("--K", type=int, help="recommendation list length")
    p.add_argument("--mu", type=int, help="retrieval combination budget")
    p.add_argument("--theta-known", type=float, help="belief confidence gate")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="metrics over a parameter grid")
    common(p)
    p.add_argument("--policies", default="maxent_full,crm")
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--C-grid", help="comma list of C values")
    p.add_argument("--K-grid", help="comma list of K values")
    p.add_argument("--model-grid", help="comma list of reward models")
    p.add_argument("--acc-grid", help="comma list of tracker accuracies")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="run the chat service on trained checkpoints")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080,
                   help="TCP port; 0 picks an ephemeral port")
    p.add_argument("--policy", default="crm",
                   help="agent served to sessions (default: crm)")
    p.add_argument("--study-log", help="JSONL study log path "
                   "(default: <run>/study_log.jsonl)")
    p.add_argument("--ttl-minutes", type=float, default=30.0,
                   help="idle session eviction time")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
