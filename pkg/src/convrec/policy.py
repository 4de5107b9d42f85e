"""Dialogue managers: MaxEnt rule baselines and the REINFORCE-trained net.

Actions are integers: 0..l-1 request that facet, l means recommend. The
policy network is two ReLU layers and a softmax; training ascends the
Monte-Carlo policy gradient with an optional batch-mean return baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import GradientTape, OptimizerConfig, Tensor, optimizer_step


@dataclass(frozen=True)
class Action:
    kind: str                 # "request" | "recommend"
    facet: int | None = None  # facet index for requests

    def __post_init__(self):
        if self.kind not in ("request", "recommend"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind == "request" and (self.facet is None or self.facet < 0):
            raise ValueError("request needs a facet index")


def action_to_index(action, n_facets):
    if action.kind == "recommend":
        return n_facets
    if action.facet >= n_facets:
        raise ValueError(f"facet index {action.facet} outside [0, {n_facets})")
    return action.facet


def index_to_action(index, n_facets):
    if not 0 <= index <= n_facets:
        raise ValueError(f"action index {index} outside [0, {n_facets}]")
    return Action("recommend") if index == n_facets else Action("request", index)


# --------------------------------------------------------------------------- #
# Rule baselines
# --------------------------------------------------------------------------- #

def facet_entropy(candidates, facet_index):
    """Entropy in bits of a facet's value distribution over the candidates."""
    if not candidates:
        raise ValueError("empty candidate set has no facet entropy")
    counts = {}
    for item in candidates:
        v = item.values[facet_index]
        counts[v] = counts.get(v, 0) + 1
    n = len(candidates)
    return -sum((c / n) * math.log2(c / n) for c in counts.values())


@dataclass
class RuleState:
    """What a rule policy sees: symbolic knowledge, not tracker beliefs."""
    known: frozenset     # facet indices answered (or offered) so far
    candidates: list     # items matching the known facet values
    turn: int            # agent actions taken so far
    asked: int           # request actions taken so far
    n_facets: int
    max_turns: int


def maxent_policy(state, variant="full"):
    """Ask the unknown facet of maximum candidate entropy, else recommend.

    ``variant`` is "full" (ask until everything is known) or ("at_k", K')
    (recommend after exactly K' requests). Entropy ties break on the
    lowest facet index.
    """
    unknown = [j for j in range(state.n_facets) if j not in state.known]
    out_of_time = state.turn >= state.max_turns
    if variant == "full":
        stop = not unknown or not state.candidates or out_of_time
    else:
        kind, k_asks = variant
        if kind != "at_k":
            raise ValueError(f"unknown maxent variant {variant!r}")
        stop = state.asked >= k_asks or not unknown or not state.candidates \
            or out_of_time
    if stop:
        return Action("recommend")
    best = max(unknown, key=lambda j: (facet_entropy(state.candidates, j), -j))
    return Action("request", best)


# --------------------------------------------------------------------------- #
# Policy network
# --------------------------------------------------------------------------- #

@dataclass
class PolicyConfig:
    hidden: int = 32
    learning_rate: float = 0.001
    optimizer: str = "rmsprop"
    batch_size: int = 100
    gamma: float = 0.95
    baseline: bool = True    # subtract batch-mean return; off = literal estimator
    seed: int = 0


@dataclass
class PolicyModel:
    state_dim: int
    n_actions: int
    params: dict
    config: PolicyConfig


def init_policy(state_dim, n_actions, config=None):
    config = config or PolicyConfig()
    rng = np.random.default_rng(config.seed)
    params = {}
    params.update(T.linear_params(rng, state_dim, config.hidden, "fc1"))
    params.update(T.linear_params(rng, config.hidden, config.hidden, "fc2"))
    params.update(T.linear_params(rng, config.hidden, n_actions, "out"))
    return PolicyModel(state_dim, n_actions, params, config)


def policy_logits(params, states):
    X = states if isinstance(states, Tensor) else Tensor(np.atleast_2d(states))
    h1 = T.relu(T.add(T.matmul(X, params["fc1.w"]), params["fc1.b"]))
    h2 = T.relu(T.add(T.matmul(h1, params["fc2.w"]), params["fc2.b"]))
    return T.add(T.matmul(h2, params["out.w"]), params["out.b"])


def policy_forward(params, states):
    """Action distribution(s); rows sum to 1."""
    return T.softmax(policy_logits(params, states), axis=-1)


def sample_action(params, state, rng=None, mode="sample"):
    """Returns (action index, log probability of that action)."""
    probs = policy_forward(params, state).data[0]
    if mode == "greedy":
        a = int(np.argmax(probs))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        a = int(rng.choice(len(probs), p=probs))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return a, float(np.log(probs[a]))


# --------------------------------------------------------------------------- #
# Episodes and returns
# --------------------------------------------------------------------------- #

@dataclass
class Episode:
    """One dialogue as the policy saw it."""
    states: list       # belief vectors, one per agent action
    actions: list      # action indices
    rewards: list      # aligned rewards; last one is terminal
    outcome: str       # success | wrong_quit | low_rank | timeout
    tau: int | None = None   # target's rank when found
    log_probs: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_turns(self):
        return len(self.actions)

    @property
    def total_reward(self):
        return float(sum(self.rewards))


def returns(rewards, gamma):
    """Discounted returns G_t by backward recursion."""
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def reinforce_loss(params, episodes, gamma, baseline=True):
    """-(1/B) sum over episodes, turns of gamma^t (G_t - b) log pi(a_t|s_t)."""
    if not episodes:
        raise ValueError("empty episode batch")
    states, actions, weights = [], [], []
    all_returns = []
    for ep in episodes:
        if not ep.actions:
            raise ValueError("episode has no actions to learn from")
        all_returns.append(returns(ep.rewards, gamma))
    b = float(np.mean(np.concatenate(all_returns))) if baseline else 0.0
    for ep, G in zip(episodes, all_returns):
        for t in range(len(ep.actions)):
            states.append(ep.states[t])
            actions.append(ep.actions[t])
            weights.append((gamma ** t) * (G[t] - b))
    logp = T.log_softmax(policy_logits(params, Tensor(np.stack(states))), axis=-1)
    picked = T.gather_rows(logp, np.array(actions))
    weighted = T.mul(picked, Tensor(np.array(weights)[:, None]))
    return T.neg(T.mul(T.tensor_sum(weighted), 1.0 / len(episodes)))


def reinforce_update(model, episodes, opt_state=None):
    """One policy-gradient step over an episode batch; returns opt state."""
    opt = OptimizerConfig(kind=model.config.optimizer,
                          learning_rate=model.config.learning_rate)
    with GradientTape() as tape:
        loss = reinforce_loss(model.params, episodes, model.config.gamma,
                              model.config.baseline)
    grads = tape.gradient(loss, model.params)
    model.params, opt_state = optimizer_step(model.params, grads, opt, opt_state)
    return loss.item(), opt_state


# --------------------------------------------------------------------------- #
# Imitation pretraining
# --------------------------------------------------------------------------- #

def pretrain_policy(model, states, labels, dev_frac=0.1, max_epochs=50,
                    patience=3, min_improve=1e-4, batch_size=64,
                    learning_rate=0.001, verbose=True):
    """Cross-entropy imitation of rule-policy labels until dev accuracy plateaus.

    Returns (model, history); history rows carry train loss and dev accuracy.
    """
    states = np.asarray(states, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if states.size == 0:
        raise ValueError("no labeled states to pretrain on")
    n_dev = max(1, int(len(labels) * dev_frac))
    X_dev, y_dev = states[:n_dev], labels[:n_dev]
    X_train, y_train = states[n_dev:], labels[n_dev:]
    opt = OptimizerConfig(kind="adam", learning_rate=learning_rate)
    opt_state = None
    rng = np.random.default_rng(model.config.seed)

    def dev_accuracy():
        probs = policy_forward(model.params, X_dev).data
        return float(np.mean(probs.argmax(axis=1) == y_dev))

    history = []
    best, best_params, stale = -1.0, model.params, 0
    for epoch in range(max_epochs):
        order = rng.permutation(len(y_train))
        losses = []
        for k in range(0, len(order), batch_size):
            idx = order[k:k + batch_size]
            with GradientTape() as tape:
                logp = T.log_softmax(policy_logits(model.params, Tensor(X_train[idx])),
                                     axis=-1)
                picked = T.gather_rows(logp, y_train[idx])
                loss = T.neg(T.mean(picked))
            grads = tape.gradient(loss, model.params)
            model.params, opt_state = optimizer_step(model.params, grads, opt, opt_state)
            losses.append(loss.item())
        acc = dev_accuracy()
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "dev_accuracy": acc})
        if verbose:
            print(f"pretrain epoch {epoch}: loss {np.mean(losses):.4f} dev acc {acc:.3f}")
        if acc > best + min_improve:
            best, best_params, stale = acc, dict(model.params), 0
        else:
            stale += 1
            if stale >= patience:
                break
    model.params = best_params
    return model, history


# --------------------------------------------------------------------------- #
# Checkpoint plumbing
# --------------------------------------------------------------------------- #

def save_policy(model, path):
    meta = {"state_dim": model.state_dim, "n_actions": model.n_actions,
            "hidden": model.config.hidden}
    T.save_checkpoint(path, "policy", model.params, meta)


def load_policy(path):
    kind, params, meta = T.load_checkpoint(path)
    if kind != "policy":
        raise ValueError(f"checkpoint is {kind!r}, expected policy")
    config = PolicyConfig(hidden=meta["hidden"])
    return PolicyModel(meta["state_dim"], meta["n_actions"], params, config)
