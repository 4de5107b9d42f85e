"""Simulated user, reward models, the episode loop, and evaluation.

An episode is one conversation: the user opens with a facet value, the
agent alternates between requesting facets and recommending, and the
user answers cooperatively (always the target's true values) until the
agent shows a list. Success pays a rank-dependent reward; every failure
mode pays the quit penalty.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .catalog import items_matching
from .dialoggen import Utterance, _noisy, inform, realize
from .policy import (
    Action,
    Episode,
    RuleState,
    index_to_action,
    maxent_policy,
    policy_forward,
    reinforce_update,
    sample_action,
)
from .recommender import recommend

REWARD_MODELS = ("linear", "ndcg", "cascade")
OUTCOMES = ("success", "wrong_quit", "low_rank", "timeout")


@dataclass(frozen=True)
class RewardConfig:
    r_c: float = -1.0        # per-turn conversation cost
    r_q: float = -10.0       # quit penalty, any failure mode
    C: float = 40.0          # maximum success reward
    K: int = 30              # stop threshold: rank past K is a failure
    kappa: int = 3           # page size (cascade browsing)
    alpha1: float = 0.95     # page-continuation decay
    alpha2: float = 0.95     # per-page reward decay
    gamma: float = 0.95      # training discount; metrics stay undiscounted
    max_turns: int = 7
    model: str = "linear"

    def __post_init__(self):
        if self.r_c > 0:
            raise ValueError("r_c must be non-positive")
        if self.r_q >= 0:
            raise ValueError("r_q must be negative")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if not (0 < self.alpha1 < 1 and 0 < self.alpha2 < 1):
            raise ValueError("alpha decay factors must lie in (0, 1)")
        if self.kappa < 1 or self.K < 1:
            raise ValueError("kappa and K must be at least 1")
        if self.max_turns < 1:
            raise ValueError("max_turns must be at least 1")
        if self.model not in REWARD_MODELS:
            raise ValueError(f"unknown reward model {self.model!r}")


def success_reward(tau, cfg):
    """Reward for the target found at rank tau, or None past the threshold."""
    if tau < 1:
        raise ValueError(f"rank must be >= 1, got {tau}")
    if tau > cfg.K:
        return None
    if cfg.model == "linear":
        return cfg.C * (cfg.K - tau + 1) / cfg.K
    if cfg.model == "ndcg":
        return cfg.C / math.log2(tau + 1)
    rho = math.ceil(tau / cfg.kappa)
    return cfg.C * cfg.alpha2 ** (rho - 1)


# --------------------------------------------------------------------------- #
# Simulated user
# --------------------------------------------------------------------------- #

@dataclass
class UserEvent:
    kind: str                    # utterance | found | quit
    utterance: Utterance | None = None
    tau: int | None = None
    reason: str | None = None


@dataclass(frozen=True)
class NoiseConfig:
    """Sloppiness of the simulated user's typing."""
    typo_rate: float = 0.0
    casing_rate: float = 0.0


@dataclass
class SimulatedUser:
    """Cooperative user: answers with the target's true facet values."""

    user_id: str
    target: object               # catalog Item
    templates: dict
    rng: np.random.Generator
    noise: NoiseConfig | None = None
    informed: set = field(default_factory=set)

    def _inform(self, facet_index, schema):
        name = schema.names[facet_index]
        value = schema.values(facet_index)[self.target.values[facet_index]]
        self.informed.add(facet_index)
        utt = realize(self.templates, inform(name, value), self.rng)
        if self.noise is not None:
            return Utterance(_noisy(utt.text, self.rng, self.noise), utt.acts)
        return utt

    def open(self, schema):
        """First utterance: the value of one uniformly random facet."""
        j = int(self.rng.integers(schema.n_facets))
        return self._inform(j, schema)

    def examine(self, ranked_item_ids, cfg):
        """Scan a recommendation list top-down for the target item."""
        try:
            tau = ranked_item_ids.index(self.target.item_id) + 1
        except ValueError:
            return UserEvent("quit", reason="wrong_quit")
        if tau > cfg.K:
            return UserEvent("quit", reason="low_rank", tau=tau)
        if cfg.model == "cascade":
            # first page is always viewed; reaching page p+1 from p is a
            # Bernoulli(alpha1^p) continuation draw
            rho = math.ceil(tau / cfg.kappa)
            for page in range(1, rho):
                if self.rng.random() >= cfg.alpha1 ** page:
                    return UserEvent("quit", reason="low_rank", tau=tau)
        return UserEvent("found", tau=tau)


def user_respond(user, action, cfg, turn, schema, ranked_item_ids=None):
    """One user behavior: answer a question, examine a list, or give up."""
    if action.kind == "recommend":
        return user.examine(ranked_item_ids or [], cfg)
    if turn >= cfg.max_turns:
        return UserEvent("quit", reason="timeout")
    return UserEvent("utterance", utterance=user._inform(action.facet, schema))


# --------------------------------------------------------------------------- #
# Agents
# --------------------------------------------------------------------------- #

class RuleAgent:
    """MaxEnt policy over the symbolically-known facets."""

    def __init__(self, variant="full"):
        self.variant = variant

    def act(self, belief_vector, rule_state, rng):
        action = maxent_policy(rule_state, self.variant)
        return action_index(action, rule_state.n_facets), None


class NetAgent:
    """Policy network driven by the tracker's belief vector."""

    def __init__(self, model, mode="greedy"):
        self.model = model
        self.mode = mode

    def act(self, belief_vector, rule_state, rng):
        return sample_action(self.model.params, belief_vector, rng, self.mode)


class RandomAgent:
    def act(self, belief_vector, rule_state, rng):
        n = rule_state.n_facets + 1
        return int(rng.integers(n)), math.log(1.0 / n)


class RecommendFirstAgent:
    def act(self, belief_vector, rule_state, rng):
        return rule_state.n_facets, None


def action_index(action, n_facets):
    return n_facets if action.kind == "recommend" else action.facet


def make_agent(name, policy_model=None, mode="greedy"):
    """Agent registry used by the command line and the service."""
    if name == "maxent_full":
        return RuleAgent("full")
    if name.startswith("maxent@"):
        return RuleAgent(("at_k", int(name.split("@", 1)[1])))
    if name == "crm":
        if policy_model is None:
            raise ValueError("crm agent needs a policy checkpoint")
        return NetAgent(policy_model, mode)
    if name == "random":
        return RandomAgent()
    if name == "recommend_first":
        return RecommendFirstAgent()
    raise ValueError(f"unknown policy {name!r}")


# --------------------------------------------------------------------------- #
# Episode loop
# --------------------------------------------------------------------------- #

@dataclass
class EnvComponents:
    catalog: object
    templates: dict
    tracker: object              # anything with .session(rng)
    fm: object                   # recommender FMModel
    mu: int = 3
    theta_known: float = 0.5
    noise: NoiseConfig | None = None   # user typing noise during episodes


def run_episode(agent, components, user, cfg, rng):
    """One full dialogue; returns the Episode with per-turn (s, a, r)."""
    catalog = components.catalog
    schema = catalog.schema
    l = schema.n_facets
    user_index = catalog.user_index[user.user_id]
    session = components.tracker.session(rng=rng)

    belief = session.consume(user.open(schema))
    states, actions, rewards, log_probs = [], [], [], []
    outcome, tau, asked = None, None, 0
    for t in range(cfg.max_turns + 1):
        known = {j: user.target.values[j] for j in user.informed}
        candidates = items_matching(catalog, known)
        rule_state = RuleState(known=frozenset(user.informed),
                               candidates=candidates, turn=t, asked=asked,
                               n_facets=l, max_turns=cfg.max_turns)
        a, logp = agent.act(belief.vector, rule_state, rng)
        states.append(belief.vector)
        actions.append(a)
        log_probs.append(logp)
        action = index_to_action(a, l)
        if action.kind == "recommend":
            ranked = recommend(components.fm, user_index, belief, catalog,
                               mu=components.mu,
                               theta_known=components.theta_known)
            event = user_respond(user, action, cfg, t, schema,
                                 [item_id for item_id, _ in ranked])
            if event.kind == "found":
                tau = event.tau
                rewards.append(success_reward(tau, cfg))
                outcome = "success"
            else:
                tau = event.tau
                rewards.append(cfg.r_q)
                outcome = event.reason
            break
        event = user_respond(user, action, cfg, t, schema)
        if event.kind == "quit":
            rewards.append(cfg.r_q)
            outcome = "timeout"
            break
        rewards.append(cfg.r_c)
        asked += 1
        belief = session.consume(event.utterance)
    return Episode(states=states, actions=actions, rewards=rewards,
                   outcome=outcome, tau=tau, log_probs=log_probs,
                   meta={"user_id": user.user_id, "item_id": user.target.item_id})


def _episode_rng(seed, index):
    return np.random.default_rng([seed, index])


def _run_indexed(agent, components, pairs, cfg, seed, index):
    rng = _episode_rng(seed, index)
    user_id, item_id = pairs[int(rng.integers(len(pairs)))]
    target = components.catalog.items[components.catalog.item_index[item_id]]
    user = SimulatedUser(user_id, target, components.templates, rng,
                         noise=components.noise)
    return run_episode(agent, components, user, cfg, rng)


def generate_episodes(agent, components, pairs, cfg, n_episodes, seed=0,
                      workers=1, start_index=0):
    """Independent episodes with per-episode RNG streams keyed (seed, index).

    The per-index streams make results identical for any worker count.
    """
    if n_episodes <= 0:
        raise ValueError("need at least one episode")
    if not pairs:
        raise ValueError("no (user, item) pairs to sample from")
    indices = range(start_index, start_index + n_episodes)
    if workers <= 1:
        return [_run_indexed(agent, components, pairs, cfg, seed, i)
                for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(
            lambda i: _run_indexed(agent, components, pairs, cfg, seed, i),
            indices))


# --------------------------------------------------------------------------- #
# Metrics
# --------------------------------------------------------------------------- #

@dataclass
class Metrics:
    episodes: int
    R: float          # mean undiscounted return
    T: float          # mean dialogue turns, recommendation turn included
    S: float          # success %
    W: float          # wrong-quit %
    L: float          # low-rank %
    timeout: float    # timeout %

    def as_dict(self):
        return {"episodes": self.episodes, "R": self.R, "T": self.T,
                "S": self.S, "W": self.W, "L": self.L, "timeout": self.timeout}


def metrics_from_episodes(episodes):
    if not episodes:
        raise ValueError("no episodes to aggregate")
    n = len(episodes)
    counts = {k: 0 for k in OUTCOMES}
    for ep in episodes:
        counts[ep.outcome] += 1
    return Metrics(
        episodes=n,
        R=float(np.mean([ep.total_reward for ep in episodes])),
        T=float(np.mean([ep.n_turns for ep in episodes])),
        S=100.0 * counts["success"] / n,
        W=100.0 * counts["wrong_quit"] / n,
        L=100.0 * counts["low_rank"] / n,
        timeout=100.0 * counts["timeout"] / n,
    )


def evaluate(agent, components, pairs, cfg, n_episodes, seed=0, workers=1):
    """Metrics over n sampled episodes; deterministic for a given seed."""
    episodes = generate_episodes(agent, components, pairs, cfg, n_episodes,
                                 seed=seed, workers=workers)
    return metrics_from_episodes(episodes)


CSV_COLUMNS = ("policy", "model", "C", "K", "acc", "R", "T", "S", "W", "L",
               "timeout")


def sweep(policies, components, pairs, base_cfg, grid, n_episodes, seed=0,
          workers=1, degrade=None):
    """Metrics per (grid point x policy); rows ready for CSV emission.

    Grid points are dicts of RewardConfig overrides, plus an optional
    "acc" key that swaps in a degraded tracker built by ``degrade(acc)``.
    """
    if not grid:
        raise ValueError("empty sweep grid")
    rows = []
    for point in grid:
        overrides = {k: v for k, v in point.items() if k != "acc"}
        cfg = replace(base_cfg, **overrides)
        acc = point.get("acc", 1.0)
        comps = components
        if acc != 1.0:
            if degrade is None:
                raise ValueError("accuracy sweep needs a degrade callback")
            comps = replace(components, tracker=degrade(acc))
        for name, agent in policies.items():
            m = evaluate(agent, comps, pairs, cfg, n_episodes, seed=seed,
                         workers=workers)
            rows.append({"policy": name, "model": cfg.model, "C": cfg.C,
                         "K": cfg.K, "acc": acc,
                         "R": round(m.R, 4), "T": round(m.T, 4),
                         "S": round(m.S, 3), "W": round(m.W, 3),
                         "L": round(m.L, 3), "timeout": round(m.timeout, 3)})
    return rows


def write_metrics_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


# --------------------------------------------------------------------------- #
# Training on the simulator
# --------------------------------------------------------------------------- #

def harvest_pretrain_data(components, pairs, cfg, n_episodes, seed=0):
    """(state, action) pairs from rule-policy rollouts, for imitation."""
    episodes = generate_episodes(RuleAgent("full"), components, pairs, cfg,
                                 n_episodes, seed=seed)
    states, labels = [], []
    for ep in episodes:
        states.extend(ep.states)
        labels.extend(ep.actions)
    return np.stack(states), np.array(labels, dtype=np.intp)


def train_rl(model, components, pairs, cfg, epochs=20, batches_per_epoch=10,
             batch_size=100, seed=0, log_path=None, verbose=True):
    """REINFORCE over simulator episodes sampled from the current net.

    One update per batch; the epoch log reports the behavior policy's own
    episodes (reward, success rate, turns). Returns (model, history).
    """
    agent = NetAgent(model, mode="sample")
    opt_state = None
    history = []
    index = 0
    for epoch in range(epochs):
        epoch_eps = []
        for _ in range(batches_per_epoch):
            batch = generate_episodes(agent, components, pairs, cfg,
                                      batch_size, seed=seed,
                                      start_index=index)
            index += batch_size
            _, opt_state = reinforce_update(model, batch, opt_state)
            epoch_eps.extend(batch)
        m = metrics_from_episodes(epoch_eps)
        row = {"epoch": epoch, "avg_reward": round(m.R, 4),
               "success_rate": round(m.S, 3), "avg_turns": round(m.T, 4)}
        history.append(row)
        if verbose:
            print(f"rl epoch {epoch}: reward {m.R:.3f} success {m.S:.1f}% "
                  f"turns {m.T:.2f}")
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(row) + "\n")
    return model, history
