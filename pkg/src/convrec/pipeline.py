"""Staged pipeline over a run directory: data, training, evaluation.

Each stage reads the artifacts of the previous one from a fixed layout and
writes its own, so the command driver and the tests share one code path:

    run/
      catalog/{schema.json, items.jsonl, ratings.jsonl}
      templates.jsonl
      dialogues.jsonl
      checkpoints/{tracker.json, fm.json, policy_pretrain.json, policy_rl.json}
      logs/{tracker.jsonl, fm.jsonl, pretrain.jsonl, rl.jsonl}
      metrics/{eval.csv, sweep.csv}
"""

import dataclasses
import json
import os

import numpy as np

from .catalog import SyntheticConfig, generate_synthetic, load_catalog, split, write_catalog
from .dialoggen import (CorpusConfig, default_template_pack, generate_dialogue_corpus,
                        load_dialogues, load_templates, save_dialogues, save_templates)
from .env import (EnvComponents, NoiseConfig, RewardConfig, evaluate,
                  harvest_pretrain_data, make_agent, sweep, train_rl, write_metrics_csv)
from .nlu import (TrackerConfig, degrade_tracker, evaluate_tracker, load_tracker,
                  save_tracker, train_tracker)
from .policy import (PolicyConfig, init_policy, load_policy, pretrain_policy, save_policy)
from .recommender import FMConfig, load_fm, save_fm, tracker_beliefs, train_fm


class StageError(RuntimeError):
    """A stage cannot run: missing prerequisite artifact or bad request."""


@dataclasses.dataclass(frozen=True)
class EnvConfig:
    """Environment calibration shared by pretraining, RL and evaluation."""
    mu: int = 1
    theta_known: float = 0.8
    typo_rate: float = 0.0
    casing_rate: float = 0.0

    def noise(self):
        if self.typo_rate == 0.0 and self.casing_rate == 0.0:
            return None
        return NoiseConfig(self.typo_rate, self.casing_rate)


@dataclasses.dataclass(frozen=True)
class PretrainConfig:
    episodes: int = 2000
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 128
    learning_rate: float = 0.002
    seed: int = 0


@dataclasses.dataclass(frozen=True)
class RLConfig:
    epochs: int = 20
    batches_per_epoch: int = 15
    batch_size: int = 100
    seed: int = 0


class RunPaths:
    """Computed artifact locations under a run directory."""

    def __init__(self, root):
        self.root = root
        self.catalog_dir = os.path.join(root, "catalog")
        self.schema = os.path.join(self.catalog_dir, "schema.json")
        self.items = os.path.join(self.catalog_dir, "items.jsonl")
        self.ratings = os.path.join(self.catalog_dir, "ratings.jsonl")
        self.templates = os.path.join(root, "templates.jsonl")
        self.dialogues = os.path.join(root, "dialogues.jsonl")
        ckpt = os.path.join(root, "checkpoints")
        self.tracker = os.path.join(ckpt, "tracker.json")
        self.fm = os.path.join(ckpt, "fm.json")
        self.policy_pretrain = os.path.join(ckpt, "policy_pretrain.json")
        self.policy_rl = os.path.join(ckpt, "policy_rl.json")
        self.logs = os.path.join(root, "logs")
        self.metrics = os.path.join(root, "metrics")

    def log(self, stage):
        return os.path.join(self.logs, stage + ".jsonl")

    def require(self, path, what, hint):
        if not os.path.exists(path):
            raise StageError(f"missing {what} at {path}; run `{hint}` first")
        return path


def _write_log(path, rows):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


# --------------------------------------------------------------------------- #
# Stages
# --------------------------------------------------------------------------- #

def stage_gen_data(run_dir, catalog_config=None, corpus_config=None):
    """Synthesize catalog, template pack and dialogue corpus files."""
    paths = RunPaths(run_dir)
    catalog_config = catalog_config or SyntheticConfig()
    corpus_config = corpus_config or CorpusConfig()
    catalog = generate_synthetic(catalog_config)
    templates = default_template_pack(catalog.schema)
    dialogues = generate_dialogue_corpus(catalog, templates, corpus_config)
    write_catalog(catalog, paths.catalog_dir)
    save_templates(templates, paths.templates)
    save_dialogues(dialogues, paths.dialogues)
    return {"users": catalog.n_users, "items": catalog.n_items,
            "ratings": len(catalog.ratings), "dialogues": len(dialogues)}


def load_corpus(run_dir):
    """(catalog, templates, dialogues) from a gen-data run dir."""
    paths = RunPaths(run_dir)
    paths.require(paths.schema, "catalog", "gen-data")
    catalog = load_catalog(paths.items, paths.ratings, paths.schema)
    templates = load_templates(paths.require(paths.templates, "template pack", "gen-data"))
    dialogues = load_dialogues(paths.require(paths.dialogues, "dialogue corpus", "gen-data"))
    return catalog, templates, dialogues


def _dev_cut(dialogues):
    n_dev = max(1, len(dialogues) // 10)
    return dialogues[n_dev:], dialogues[:n_dev]


def stage_train_tracker(run_dir, config=None, verbose=True):
    paths = RunPaths(run_dir)
    catalog, _, dialogues = load_corpus(run_dir)
    train, dev = _dev_cut(dialogues)
    model, history = train_tracker(train, dev, catalog.schema,
                                   config or TrackerConfig(), verbose=verbose)
    os.makedirs(os.path.dirname(paths.tracker), exist_ok=True)
    save_tracker(model, paths.tracker)
    _write_log(paths.log("tracker"), history)
    acc = evaluate_tracker(model, dev)
    return {"checkpoint": paths.tracker, "dev_joint": acc["joint"],
            "dev_per_facet": acc["per_facet"], "epochs": len(history)}


def stage_train_fm(run_dir, config=None, verbose=True):
    paths = RunPaths(run_dir)
    catalog, _, dialogues = load_corpus(run_dir)
    tracker = load_tracker(paths.require(paths.tracker, "tracker checkpoint", "train tracker"))
    beliefs = tracker_beliefs(tracker, dialogues)
    model, history = train_fm(catalog, split(catalog), beliefs,
                              config or FMConfig(), verbose=verbose)
    os.makedirs(os.path.dirname(paths.fm), exist_ok=True)
    save_fm(model, paths.fm)
    _write_log(paths.log("fm"), history)
    return {"checkpoint": paths.fm, "dev_rmse": history[-1]["dev_rmse"],
            "epochs": len(history)}


def build_components(run_dir, env_config=None):
    """EnvComponents from a run dir with trained tracker and FM."""
    paths = RunPaths(run_dir)
    env_config = env_config or EnvConfig()
    catalog, templates, _ = load_corpus(run_dir)
    tracker = load_tracker(paths.require(paths.tracker, "tracker checkpoint", "train tracker"))
    fm = load_fm(paths.require(paths.fm, "recommender checkpoint", "train fm"))
    return EnvComponents(catalog, templates, tracker, fm, mu=env_config.mu,
                         theta_known=env_config.theta_known, noise=env_config.noise())


def all_pairs(catalog):
    """Every (user, item) combination: leak-free policy training targets."""
    return [(u, it.item_id) for u in catalog.users for it in catalog.items]


def held_out_pairs(catalog, seed=0):
    """Test-split rating pairs used for evaluation episodes."""
    return [(r.user_id, r.item_id) for r in split(catalog, seed=seed).test]


def stage_pretrain(run_dir, policy_config=None, pretrain_config=None,
                   env_config=None, reward_config=None, verbose=True):
    """Imitation pretraining against rule-policy rollouts."""
    paths = RunPaths(run_dir)
    pc = pretrain_config or PretrainConfig()
    components = build_components(run_dir, env_config)
    schema = components.catalog.schema
    X, y = harvest_pretrain_data(components, all_pairs(components.catalog),
                                 reward_config or RewardConfig(),
                                 pc.episodes, seed=pc.seed)
    model = init_policy(schema.state_dim, schema.n_facets + 1,
                        policy_config or PolicyConfig())
    model, history = pretrain_policy(model, X, y, max_epochs=pc.max_epochs,
                                     patience=pc.patience, batch_size=pc.batch_size,
                                     learning_rate=pc.learning_rate, verbose=verbose)
    os.makedirs(os.path.dirname(paths.policy_pretrain), exist_ok=True)
    save_policy(model, paths.policy_pretrain)
    _write_log(paths.log("pretrain"), history)
    return {"checkpoint": paths.policy_pretrain,
            "dev_accuracy": history[-1]["dev_accuracy"] if history else None,
            "epochs": len(history)}


def stage_train_rl(run_dir, rl_config=None, env_config=None, reward_config=None,
                   allow_random_init=False, policy_config=None, verbose=True):
    """REINFORCE from the pretrained policy (random init opt-in only)."""
    paths = RunPaths(run_dir)
    rl = rl_config or RLConfig()
    components = build_components(run_dir, env_config)
    schema = components.catalog.schema
    if os.path.exists(paths.policy_pretrain):
        model = load_policy(paths.policy_pretrain)
        if policy_config is not None:
            model.config = dataclasses.replace(policy_config,
                                               hidden=model.config.hidden)
    elif allow_random_init:
        model = init_policy(schema.state_dim, schema.n_facets + 1,
                            policy_config or PolicyConfig())
    else:
        raise StageError(
            f"missing pretrain checkpoint at {paths.policy_pretrain}; "
            "run `train pretrain` first or pass --allow-random-init")
    cfg = reward_config or RewardConfig()
    os.makedirs(paths.logs, exist_ok=True)
    log_path = paths.log("rl")
    open(log_path, "w").close()   # train_rl appends per epoch
    model, log = train_rl(model, components, all_pairs(components.catalog), cfg,
                          epochs=rl.epochs, batches_per_epoch=rl.batches_per_epoch,
                          batch_size=rl.batch_size, seed=rl.seed,
                          log_path=log_path, verbose=verbose)
    os.makedirs(os.path.dirname(paths.policy_rl), exist_ok=True)
    save_policy(model, paths.policy_rl)
    last = log[-1] if log else {}
    return {"checkpoint": paths.policy_rl, "reward_model": cfg.model,
            "avg_reward": last.get("avg_reward"), "avg_turns": last.get("avg_turns")}


def _resolve_agent(name, paths):
    """Agent by policy name; net-backed names load the RL checkpoint."""
    if name == "crm":
        net = load_policy(paths.require(paths.policy_rl, "policy checkpoint", "train rl"))
        return make_agent(name, policy_model=net)
    return make_agent(name)


def stage_eval(run_dir, policies, reward_config=None, env_config=None,
               n_episodes=2000, seed=0, workers=1):
    """Metrics CSV over held-out pairs for each requested policy."""
    paths = RunPaths(run_dir)
    components = build_components(run_dir, env_config)
    pairs = held_out_pairs(components.catalog)
    cfg = reward_config or RewardConfig()
    rows = []
    for name in policies:
        agent = _resolve_agent(name, paths)
        m = evaluate(agent, components, pairs, cfg, n_episodes,
                     seed=seed, workers=workers)
        rows.append({"policy": name, "model": cfg.model, "C": cfg.C,
                     "K": cfg.K, "acc": 1.0,
                     "R": round(m.R, 4), "T": round(m.T, 4),
                     "S": round(m.S, 3), "W": round(m.W, 3),
                     "L": round(m.L, 3), "timeout": round(m.timeout, 3)})
    os.makedirs(paths.metrics, exist_ok=True)
    out = os.path.join(paths.metrics, "eval.csv")
    write_metrics_csv(rows, out)
    return out, rows


def stage_sweep(run_dir, policies, grid, reward_config=None, env_config=None,
                n_episodes=2000, seed=0, workers=1, degrade=None):
    """Grid sweep CSV (reward-model / C / K / tracker-accuracy axes)."""
    paths = RunPaths(run_dir)
    components = build_components(run_dir, env_config)
    pairs = held_out_pairs(components.catalog)
    agents = {name: _resolve_agent(name, paths) for name in policies}
    if degrade is None and any("acc" in point for point in grid):
        _, dev = _dev_cut(load_corpus(run_dir)[2])
        tracker = components.tracker
        degrade = lambda acc: degrade_tracker(tracker, acc, dev)
    rows = sweep(agents, components, pairs, reward_config or RewardConfig(),
                 grid, n_episodes, seed=seed, workers=workers, degrade=degrade)
    os.makedirs(paths.metrics, exist_ok=True)
    out = os.path.join(paths.metrics, "sweep.csv")
    write_metrics_csv(rows, out)
    return out, rows
