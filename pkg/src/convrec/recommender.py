"""2-way factorization machine plus belief-driven candidate retrieval.

Features are [user one-hot | item one-hot | belief vector]. The pairwise
interaction term uses the O(K*D) identity
    sum_{a<b} <v_a, v_b> x_a x_b = 0.5 * sum_k [(sum_a v_ak x_a)^2
                                                - sum_a v_ak^2 x_a^2]
so scoring stays linear in the feature dimension.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .catalog import matching_mask
from .nlu import BeliefState
from .tensor import GradientTape, OptimizerConfig, Tensor, optimizer_step


@dataclass
class FMConfig:
    rank: int = 2
    learning_rate: float = 0.001
    optimizer: str = "adam"
    l2: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    min_improve: float = 1e-4
    init_scale: float = 0.05
    seed: int = 0


@dataclass
class FMModel:
    m_users: int
    n_items: int
    state_dim: int
    params: dict
    config: FMConfig

    @property
    def dim(self):
        return self.m_users + self.n_items + self.state_dim


def init_fm(m_users, n_items, state_dim, config=None):
    config = config or FMConfig()
    rng = np.random.default_rng(config.seed)
    D = m_users + n_items + state_dim
    params = {
        "w0": T.zeros((1, 1)),
        "w": T.zeros((D, 1)),
        "v": Tensor(rng.normal(0.0, config.init_scale, size=(D, config.rank))),
    }
    return FMModel(m_users, n_items, state_dim, params, config)


def build_features(user_index, item_index, belief, m_users, n_items):
    """[user one-hot | item one-hot | belief] feature vector."""
    if not 0 <= user_index < m_users:
        raise IndexError(f"user index {user_index} outside [0, {m_users})")
    if not 0 <= item_index < n_items:
        raise IndexError(f"item index {item_index} outside [0, {n_items})")
    b = belief.vector if isinstance(belief, BeliefState) else np.asarray(belief, dtype=np.float64)
    x = np.zeros(m_users + n_items + b.size)
    x[user_index] = 1.0
    x[m_users + item_index] = 1.0
    x[m_users + n_items:] = b
    return x


def fm_score_batch(params, X):
    """FM scores for a (B, D) feature matrix; returns a (B, 1) Tensor."""
    X = X if isinstance(X, Tensor) else Tensor(X)
    if X.shape[1] != params["w"].shape[0]:
        raise T.ShapeError(
            f"feature dim {X.shape[1]} != model dim {params['w'].shape[0]}")
    linear = T.add(params["w0"], T.matmul(X, params["w"]))
    xv = T.matmul(X, params["v"])
    squares = T.tensor_sum(T.square(xv), axis=1, keepdims=True)
    diag = T.matmul(T.square(X), T.tensor_sum(T.square(params["v"]), axis=1, keepdims=True))
    return T.add(linear, T.mul(0.5, T.sub(squares, diag)))


def fm_score(params, x):
    """Score of a single feature vector."""
    return fm_score_batch(params, np.asarray(x, dtype=np.float64)[None, :]).item()


# --------------------------------------------------------------------------- #
# Training
# --------------------------------------------------------------------------- #

def gold_beliefs(catalog):
    """Perfect end-of-dialogue beliefs: the item's facet one-hots."""
    def lookup(user_id, item_id):
        return catalog.item_one_hot_state(catalog.items[catalog.item_index[item_id]])
    return lookup


def zero_beliefs(catalog):
    """Ablation: belief block zeroed out."""
    dim = catalog.schema.state_dim
    return lambda user_id, item_id: np.zeros(dim)


def tracker_beliefs(tracker, dialogues, chunk=200, prefixes=False):
    """Tracker states per (user, item) pair.

    Default is the end-of-dialogue belief.  With ``prefixes`` every post-turn
    state is kept (a (n_turns, state_dim) array), so downstream training sees
    the partial-knowledge beliefs a live session produces before the user has
    mentioned every facet.
    """
    out = {}
    for start in range(0, len(dialogues), chunk):
        block = dialogues[start:start + chunk]
        session = tracker.batch_session(len(block))
        depth = max(len(d.turns) for d in block)
        states = [[] for _ in block]
        beliefs = session.beliefs
        for t in range(depth):
            beliefs = session.consume(
                [d.turns[t] if t < len(d.turns) else None for d in block])
            if prefixes:
                for i, d in enumerate(block):
                    if t < len(d.turns):
                        states[i].append(beliefs[i].vector)
        for i, (d, b) in enumerate(zip(block, beliefs)):
            out[(d.user_id, d.item_id)] = np.stack(states[i]) if prefixes else b.vector
    return out


def _as_lookup(beliefs):
    if callable(beliefs):
        return beliefs
    return lambda user_id, item_id: beliefs[(user_id, item_id)]


def _design_matrix(catalog, events, lookup):
    rows, y = [], []
    for r in events:
        belief = np.asarray(lookup(r.user_id, r.item_id), dtype=np.float64)
        # a (n_states, state_dim) lookup yields one row per stored state
        for state in belief if belief.ndim == 2 else belief[None, :]:
            rows.append(build_features(catalog.user_index[r.user_id],
                                       catalog.item_index[r.item_id],
                                       state, catalog.n_users, catalog.n_items))
            y.append(r.rating)
    return np.stack(rows), np.array(y)


def rmse(params, X, y):
    pred = fm_score_batch(params, X).data[:, 0]
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def train_fm(catalog, split, beliefs, config=None, verbose=True):
    """Fit the FM on the train split; returns (model, per-epoch history).

    ``beliefs`` maps (user_id, item_id) to the belief vector used in the
    features: a callable, or a dict from tracker_beliefs().
    """
    config = config or FMConfig()
    if not split.train:
        raise ValueError("empty train split")
    lookup = _as_lookup(beliefs)
    X_train, y_train = _design_matrix(catalog, split.train, lookup)
    X_dev, y_dev = _design_matrix(catalog, split.dev, lookup) if split.dev else (None, None)

    model = init_fm(catalog.n_users, catalog.n_items, catalog.schema.state_dim, config)
    if config.learning_rate == 0:
        return model, []  # degenerate config: report nothing, change nothing
    opt = OptimizerConfig(kind=config.optimizer, learning_rate=config.learning_rate)
    opt_state = None
    rng = np.random.default_rng(config.seed)

    history = []
    best, best_params, stale = np.inf, model.params, 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(y_train))
        for k in range(0, len(order), config.batch_size):
            idx = order[k:k + config.batch_size]
            Xb, yb = X_train[idx], y_train[idx][:, None]
            with GradientTape() as tape:
                err = T.sub(fm_score_batch(model.params, Xb), Tensor(yb))
                loss = T.mean(T.square(err))
                reg = T.mul(config.l2, T.add(T.tensor_sum(T.square(model.params["w"])),
                                             T.tensor_sum(T.square(model.params["v"]))))
                loss = T.add(loss, reg)
            grads = tape.gradient(loss, model.params)
            model.params, opt_state = optimizer_step(model.params, grads, opt, opt_state)
        row = {"epoch": epoch, "train_rmse": rmse(model.params, X_train, y_train)}
        if X_dev is not None:
            row["dev_rmse"] = rmse(model.params, X_dev, y_dev)
        history.append(row)
        if verbose and (epoch % 10 == 0 or epoch == config.max_epochs - 1):
            print(f"fm epoch {epoch}: " +
                  " ".join(f"{k} {v:.4f}" for k, v in row.items() if k != "epoch"))
        watched = row.get("dev_rmse", row["train_rmse"])
        if watched < best - config.min_improve:
            best, best_params, stale = watched, dict(model.params), 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.params = best_params
    return model, history


# --------------------------------------------------------------------------- #
# Retrieval
# --------------------------------------------------------------------------- #

def known_facets(belief, theta_known=0.5):
    """Facets whose belief is confident enough to constrain retrieval.

    Returns [(facet_index, argmax value index, max probability)];
    theta_known=0 admits every facet (literal argmax-of-everything mode).
    """
    out = []
    for j, block in enumerate(belief.blocks):
        p = float(block.max())
        if p >= theta_known:
            out.append((j, int(block.argmax()), p))
    return out


def top_value_combinations(belief, facets, mu):
    """Best-first enumeration of the mu most probable value combinations.

    ``facets`` lists facet indices to combine over; probability of a
    combination is the product of its values' belief probabilities. Ties
    break lexicographically on value indices. Returns
    [(prob, {facet: value})] in emission order.
    """
    if not facets:
        return [(1.0, {})]
    ranked = []
    for j in facets:
        block = belief.blocks[j]
        order = sorted(range(len(block)), key=lambda v: (-block[v], v))
        ranked.append([(int(v), float(block[v])) for v in order])

    def combo(ranks):
        prob = 1.0
        values = {}
        for (j, col), r in zip(zip(facets, ranked), ranks):
            v, p = col[r]
            prob *= p
            values[j] = v
        return prob, values

    start = (0,) * len(facets)
    prob, values = combo(start)
    heap = [(-prob, tuple(values[j] for j in facets), start)]
    seen = {start}
    out = []
    while heap and len(out) < mu:
        negp, vals, ranks = heapq.heappop(heap)
        out.append((-negp, dict(zip(facets, vals))))
        for i, j in enumerate(facets):
            if ranks[i] + 1 < len(ranked[i]):
                nxt = ranks[:i] + (ranks[i] + 1,) + ranks[i + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    prob, values = combo(nxt)
                    heapq.heappush(heap, (-prob, tuple(values[j] for j in facets), nxt))
    return out


def retrieve_candidates(belief, catalog, mu=3, theta_known=0.5):
    """Union of items matching the mu most probable known-facet combinations.

    Contradictory constraints (no item matches any combination) back off by
    dropping the least confident facet until something matches.
    """
    known = sorted(known_facets(belief, theta_known), key=lambda f: -f[2])
    facets = [j for j, _, _ in known]
    while True:
        mask = np.zeros(catalog.n_items, dtype=bool)
        for _, values in top_value_combinations(belief, facets, mu):
            mask |= matching_mask(catalog, values)
        if mask.any() or not facets:
            return [catalog.items[i] for i in np.flatnonzero(mask)]
        facets = facets[:-1]


def gate_belief(belief, theta_known):
    """Hard-assignment view of a belief for scoring.

    Facets that clear the confidence gate commit to their argmax value
    (exact one-hot); the rest flatten to uniform, so whatever the tracker
    left in an unknown block cannot leak into the score.
    """
    blocks = []
    for b in belief.blocks:
        if float(b.max()) >= theta_known:
            one_hot = np.zeros(b.shape)
            one_hot[int(b.argmax())] = 1.0
            blocks.append(one_hot)
        else:
            blocks.append(np.full(b.shape, 1.0 / b.size))
    return BeliefState(belief.schema, tuple(blocks))


def recommend(model, user_index, belief, catalog, mu=3, theta_known=0.5,
              candidates=None):
    """Ranked (item_id, score) list over the retrieved candidates."""
    if candidates is None:
        candidates = retrieve_candidates(belief, catalog, mu, theta_known)
    if not candidates:
        return []
    if isinstance(belief, BeliefState):
        belief = gate_belief(belief, theta_known)
    b = belief.vector if isinstance(belief, BeliefState) else np.asarray(belief)
    X = np.zeros((len(candidates), model.dim))
    for i, item in enumerate(candidates):
        X[i] = build_features(user_index, catalog.item_index[item.item_id], b,
                              model.m_users, model.n_items)
    scores = fm_score_batch(model.params, X).data[:, 0]
    order = sorted(range(len(candidates)),
                   key=lambda i: (-scores[i], candidates[i].item_id))
    return [(candidates[i].item_id, float(scores[i])) for i in order]


# --------------------------------------------------------------------------- #
# Checkpoint plumbing
# --------------------------------------------------------------------------- #

def save_fm(model, path):
    meta = {"m_users": model.m_users, "n_items": model.n_items,
            "state_dim": model.state_dim, "rank": model.config.rank}
    T.save_checkpoint(path, "fm", model.params, meta)


def load_fm(path):
    kind, params, meta = T.load_checkpoint(path)
    if kind != "fm":
        raise ValueError(f"checkpoint is {kind!r}, expected fm")
    D = meta["m_users"] + meta["n_items"] + meta["state_dim"]
    if params["w"].shape != (D, 1):
        raise ValueError("fm checkpoint layout does not match its dimensions")
    config = FMConfig(rank=meta["rank"])
    return FMModel(meta["m_users"], meta["n_items"], meta["state_dim"], params, config)
