"""Belief tracker: bag-of-bigram utterances, an LSTM encoder, per-facet heads.

The tracker turns the running utterance history into one probability
vector per facet; their concatenation is the dialogue state every other
component consumes. Count vectors go straight into the LSTM (no learned
embedding), matching the bag-of-2-gram input representation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .catalog import FacetSchema
from .tensor import GradientTape, OptimizerConfig, Tensor, optimizer_step

_PUNCT = re.compile(r"[^\w\s']")
_BOS, _EOS = "<s>", "</s>"


def tokenize(text):
    """Lowercase, strip punctuation, split on whitespace."""
    return _PUNCT.sub(" ", text.lower()).split()


def ngrams(tokens):
    """Bigrams over the padded token stream plus the unigrams themselves."""
    if not tokens:
        return []
    padded = [_BOS] + list(tokens) + [_EOS]
    out = [(a, b) for a, b in zip(padded, padded[1:])]
    out.extend((t,) for t in tokens)
    return out


class NGramVocabulary:
    """Dense n-gram -> index map; index 0 is the catch-all OOV bucket."""

    def __init__(self, entries):
        self.entries = [tuple(e) for e in entries]
        self.index = {e: i + 1 for i, e in enumerate(self.entries)}
        if len(self.index) != len(self.entries):
            raise ValueError("duplicate vocabulary entries")

    @property
    def size(self):
        return len(self.entries) + 1

    @classmethod
    def build(cls, texts, min_count=1, max_size=None):
        counts = {}
        order = []
        for text in texts:
            for g in ngrams(tokenize(text)):
                if g not in counts:
                    order.append(g)
                counts[g] = counts.get(g, 0) + 1
        kept = [g for g in order if counts[g] >= min_count]
        if max_size is not None:
            kept = sorted(kept, key=lambda g: -counts[g])[:max_size - 1]
            kept = [g for g in order if g in set(kept)]
        return cls(kept)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump([list(e) for e in self.entries], fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls(json.load(fh))


def vectorize(text, vocab):
    """Count vector over the vocabulary; unknown n-grams pool in index 0."""
    z = np.zeros(vocab.size)
    tokens = tokenize(text)
    if not tokens:
        return z
    for g in ngrams(tokens):
        z[vocab.index.get(g, 0)] += 1.0
    return z


# --------------------------------------------------------------------------- #
# Belief state
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class BeliefState:
    schema: FacetSchema
    blocks: tuple  # one ndarray per facet, schema order

    @property
    def vector(self):
        return np.concatenate(self.blocks)

    def argmax(self, facet):
        j = facet if isinstance(facet, int) else self.schema.facet_index(facet)
        return int(np.argmax(self.blocks[j]))

    def top_value(self, facet):
        j = facet if isinstance(facet, int) else self.schema.facet_index(facet)
        k = self.argmax(j)
        return self.schema.values(j)[k], float(self.blocks[j][k])

    def check_valid(self, tol=1e-6):
        for j, block in enumerate(self.blocks):
            if block.shape != (self.schema.sizes[j],) or np.any(block < 0) \
                    or abs(block.sum() - 1.0) > tol:
                raise ValueError(f"belief block {j} is not a distribution")
        return self


def uniform_belief(schema):
    return BeliefState(schema, tuple(np.full(n, 1.0 / n) for n in schema.sizes))


# --------------------------------------------------------------------------- #
# Model
# --------------------------------------------------------------------------- #

@dataclass
class TrackerConfig:
    hidden: int = 64
    separate: bool = False        # one LSTM per facet instead of a shared one
    project_dim: int | None = None  # optional linear projection of count vectors
    learning_rate: float = 0.001
    optimizer: str = "adam"
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 3
    min_improve: float = 1e-4
    seed: int = 0


@dataclass
class TrackerModel:
    schema: FacetSchema
    vocab: NGramVocabulary
    config: TrackerConfig
    params: dict

    def session(self, rng=None):
        return TrackerSession(self)

    def batch_session(self, n, rngs=None):
        return BatchTrackerSession(self, n)


def init_tracker(schema, vocab, config=None, seed=None):
    config = config or TrackerConfig()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    in_dim = vocab.size if config.project_dim is None else config.project_dim
    params = {}
    if config.project_dim is not None:
        params.update(T.linear_params(rng, vocab.size, config.project_dim, "proj"))
    encoders = schema.n_facets if config.separate else 1
    for e in range(encoders):
        prefix = f"f{e}.lstm" if config.separate else "lstm"
        params.update(T.lstm_params(rng, in_dim, config.hidden, prefix))
    for j, size in enumerate(schema.sizes):
        params.update(T.linear_params(rng, config.hidden, size, f"head{j}"))
    return TrackerModel(schema, vocab, config, params)


def _encoder_prefix(model, j):
    return f"f{j}.lstm" if model.config.separate else "lstm"


def _tracker_step(model, params, z, states):
    """Advance every encoder one turn. z: (B, V) ndarray; states: [(h, c)]."""
    x = Tensor(z)
    if model.config.project_dim is not None:
        x = T.add(T.matmul(x, params["proj.w"]), params["proj.b"])
    out = []
    for e, (h, c) in enumerate(states):
        p = _encoder_prefix(model, e)
        out.append(T.lstm_cell(x, h, c, params[f"{p}.wx"], params[f"{p}.wh"], params[f"{p}.b"]))
    return out


def _head_logits(model, params, states, j):
    h = states[j if model.config.separate else 0][0]
    return T.add(T.matmul(h, params[f"head{j}.w"]), params[f"head{j}.b"])


def _zero_states(model, batch):
    n = model.schema.n_facets if model.config.separate else 1
    H = model.config.hidden
    return [(T.zeros((batch, H)), T.zeros((batch, H))) for _ in range(n)]


def _utterance_text(utterance):
    return utterance if isinstance(utterance, str) else utterance.text


class TrackerSession:
    """Incremental single-dialogue tracking; O(1) work per new turn."""

    def __init__(self, model):
        self.model = model
        self.states = _zero_states(model, 1)
        self.belief = uniform_belief(model.schema)

    def consume(self, utterance):
        z = vectorize(_utterance_text(utterance), self.model.vocab)[None, :]
        self.states = _tracker_step(self.model, self.model.params, z, self.states)
        blocks = []
        for j in range(self.model.schema.n_facets):
            logits = _head_logits(self.model, self.model.params, self.states, j)
            blocks.append(T.softmax(logits, axis=-1).data[0])
        self.belief = BeliefState(self.model.schema, tuple(blocks))
        return self.belief


class BatchTrackerSession:
    """Lockstep tracking for a batch of dialogues; None skips a lane."""

    def __init__(self, model, n):
        self.model = model
        self.n = n
        self.states = _zero_states(model, n)
        self.beliefs = [uniform_belief(model.schema) for _ in range(n)]

    def consume(self, utterances):
        assert len(utterances) == self.n
        active = np.array([u is not None for u in utterances])
        if not active.any():
            return self.beliefs
        z = np.zeros((self.n, self.model.vocab.size))
        for i, u in enumerate(utterances):
            if u is not None:
                z[i] = vectorize(_utterance_text(u), self.model.vocab)
        new_states = _tracker_step(self.model, self.model.params, z, self.states)
        keep = active[:, None].astype(np.float64)
        self.states = [
            (Tensor(keep * h2.data + (1 - keep) * h1.data),
             Tensor(keep * c2.data + (1 - keep) * c1.data))
            for (h1, c1), (h2, c2) in zip(self.states, new_states)
        ]
        for j in range(self.model.schema.n_facets):
            logits = _head_logits(self.model, self.model.params, self.states, j)
            probs = T.softmax(logits, axis=-1).data
            for i in range(self.n):
                if active[i]:
                    blocks = list(self.beliefs[i].blocks)
                    blocks[j] = probs[i]
                    self.beliefs[i] = BeliefState(self.model.schema, tuple(blocks))
        return self.beliefs


def track(model, utterance_history):
    """Belief state after consuming the whole history in order."""
    if not utterance_history:
        raise ValueError("utterance history is empty")
    session = model.session()
    for u in utterance_history:
        belief = session.consume(u)
    return belief


# --------------------------------------------------------------------------- #
# Training
# --------------------------------------------------------------------------- #

def _dialogue_arrays(dialogue, schema, vocab):
    """Count matrix (T, V), cumulative gold (T, l) and mask (T, l)."""
    Tn, l = len(dialogue.turns), schema.n_facets
    Z = np.zeros((Tn, vocab.size))
    gold = np.zeros((Tn, l), dtype=np.intp)
    mask = np.zeros((Tn, l))
    informed = {}
    for t, turn in enumerate(dialogue.turns):
        Z[t] = vectorize(turn.text, vocab)
        for act in turn.acts:
            if act.kind == "inform":
                j = schema.facet_index(act.facet)
                informed[j] = schema.value_index(j, act.value)
        for j, v in informed.items():
            gold[t, j] = v
            mask[t, j] = 1.0
    return Z, gold, mask


def _batched_loss(model, params, Z, gold, mask):
    """Masked cross-entropy over a (B, T, V) stack of equal-length dialogues."""
    B, Tn, _ = Z.shape
    states = _zero_states(model, B)
    total = None
    for t in range(Tn):
        states = _tracker_step(model, params, Z[:, t, :], states)
        for j in range(model.schema.n_facets):
            col = mask[:, t, j]
            if not col.any():
                continue
            logits = _head_logits(model, params, states, j)
            picked = T.gather_rows(T.log_softmax(logits, axis=-1), gold[:, t, j])
            term = T.tensor_sum(T.mul(picked, Tensor(col[:, None])))
            total = term if total is None else T.add(total, term)
    count = mask.sum()
    return T.neg(T.mul(total, 1.0 / max(count, 1.0)))


def evaluate_tracker(model, dialogues, seed=0):
    """Per-facet / joint accuracy of end-of-dialogue argmax beliefs."""
    schema = model.schema
    correct = np.zeros(schema.n_facets)
    seen = np.zeros(schema.n_facets)
    joint = 0
    for k, d in enumerate(dialogues):
        session = model.session(np.random.default_rng([seed, k]))
        for turn in d.turns:
            belief = session.consume(turn)
        informed = d.informed_values()
        ok = True
        for f, v in informed.items():
            j = schema.facet_index(f)
            seen[j] += 1
            hit = belief.argmax(j) == schema.value_index(j, v)
            correct[j] += hit
            ok = ok and hit
        joint += ok
    per_facet = {schema.names[j]: float(correct[j] / seen[j]) if seen[j] else 1.0
                 for j in range(schema.n_facets)}
    return {
        "per_facet": per_facet,
        "mean": float(np.mean(list(per_facet.values()))),
        "joint": float(joint / len(dialogues)) if dialogues else 0.0,
    }


def train_tracker(train_dialogues, dev_dialogues, schema, config=None, verbose=True):
    """Fit the tracker; early-stops when joint dev accuracy plateaus.

    Returns (model, history) where history is a list of per-epoch dicts
    with train loss and dev accuracies.
    """
    config = config or TrackerConfig()
    if not train_dialogues:
        raise ValueError("empty training corpus")
    vocab = NGramVocabulary.build(
        t.text for d in train_dialogues for t in d.turns)
    model = init_tracker(schema, vocab, config)
    opt = OptimizerConfig(kind=config.optimizer, learning_rate=config.learning_rate)
    opt_state = None

    prepped = [_dialogue_arrays(d, schema, vocab) for d in train_dialogues]
    by_length = {}
    for arrays in prepped:
        by_length.setdefault(arrays[0].shape[0], []).append(arrays)

    rng = np.random.default_rng(config.seed)
    history = []
    best, best_params, stale = -1.0, model.params, 0
    for epoch in range(config.max_epochs):
        losses = []
        batches = []
        for group in by_length.values():
            order = rng.permutation(len(group))
            for k in range(0, len(group), config.batch_size):
                batches.append([group[i] for i in order[k:k + config.batch_size]])
        rng.shuffle(batches)
        for batch in batches:
            Z = np.stack([b[0] for b in batch])
            gold = np.stack([b[1] for b in batch])
            mask = np.stack([b[2] for b in batch])
            with GradientTape() as tape:
                loss = _batched_loss(model, model.params, Z, gold, mask)
            grads = tape.gradient(loss, model.params)
            model.params, opt_state = optimizer_step(model.params, grads, opt, opt_state)
            losses.append(loss.item())
        dev = evaluate_tracker(model, dev_dialogues)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "dev_joint": dev["joint"], "dev_per_facet": dev["per_facet"]})
        if verbose:
            print(f"tracker epoch {epoch}: loss {np.mean(losses):.4f} "
                  f"dev joint {dev['joint']:.3f}")
        if dev["joint"] > best + config.min_improve:
            best, best_params, stale = dev["joint"], dict(model.params), 0
        else:
            # among equally accurate epochs keep the latest: extra epochs
            # sharpen the softmax blocks even after accuracy saturates
            if dev["joint"] >= best:
                best_params = dict(model.params)
            stale += 1
            if stale >= config.patience:
                break
    model.params = best_params
    return model, history


# --------------------------------------------------------------------------- #
# Oracle and degraded trackers
# --------------------------------------------------------------------------- #

class OracleTracker:
    """Perfect beliefs from gold acts: one-hot informed facets, uniform rest.

    Simulation-only; consume() requires utterances that carry their acts.
    """

    def __init__(self, schema):
        self.schema = schema

    def session(self, rng=None):
        return _OracleSession(self.schema)

    def batch_session(self, n, rngs=None):
        return _BatchShim(self, n)


class _OracleSession:
    def __init__(self, schema):
        self.schema = schema
        self.informed = {}
        self.belief = uniform_belief(schema)

    def consume(self, utterance):
        if isinstance(utterance, str):
            raise ValueError("oracle tracker needs utterances with gold acts")
        for act in utterance.acts:
            if act.kind == "inform":
                j = self.schema.facet_index(act.facet)
                self.informed[j] = self.schema.value_index(j, act.value)
        blocks = []
        for j, n in enumerate(self.schema.sizes):
            if j in self.informed:
                block = np.zeros(n)
                block[self.informed[j]] = 1.0
            else:
                block = np.full(n, 1.0 / n)
            blocks.append(block)
        self.belief = BeliefState(self.schema, tuple(blocks))
        return self.belief


class _BatchShim:
    """Batch interface over per-lane sessions, for trackers without a fast path."""

    def __init__(self, model, n, rngs=None):
        rngs = rngs or [None] * n
        self.sessions = [model.session(rngs[i]) for i in range(n)]
        self.beliefs = [s.belief for s in self.sessions]

    def consume(self, utterances):
        for i, u in enumerate(utterances):
            if u is not None:
                self.beliefs[i] = self.sessions[i].consume(u)
        return self.beliefs


class DegradedTracker:
    """Wraps a tracker so informed facets point at a wrong value with prob p_j.

    The flip decisions and replacement offsets are drawn once per session,
    so a degraded belief stays consistent across the dialogue's turns.
    """

    def __init__(self, base, flip_probs):
        self.base = base
        self.schema = base.schema
        self.flip_probs = flip_probs  # facet index -> probability

    def session(self, rng=None):
        rng = rng or np.random.default_rng(0)
        return _DegradedSession(self, self.base.session(rng), rng)

    def batch_session(self, n, rngs=None):
        return _BatchShim(self, n, rngs)


class _DegradedSession:
    def __init__(self, wrapper, base_session, rng):
        self.wrapper = wrapper
        self.base_session = base_session
        sizes = wrapper.schema.sizes
        self.flips = {j: int(rng.integers(1, sizes[j]))
                      for j, p in wrapper.flip_probs.items() if rng.random() < p}
        self.belief = self._apply(base_session.belief)

    def _apply(self, belief):
        if not self.flips:
            return belief
        blocks = list(belief.blocks)
        for j, offset in self.flips.items():
            block = blocks[j].copy()
            a = int(np.argmax(block))
            w = (a + offset) % len(block)
            block[a], block[w] = block[w], block[a]
            blocks[j] = block
        return BeliefState(belief.schema, tuple(blocks))

    def consume(self, utterance):
        self.belief = self._apply(self.base_session.consume(utterance))
        return self.belief


def degrade_tracker(model, target_accuracy, dev_dialogues, seed=0):
    """Calibrated wrapper whose measured per-facet dev accuracy ≈ target."""
    if not 0.0 < target_accuracy <= 1.0:
        raise ValueError("target accuracy must be in (0, 1]")
    base = evaluate_tracker(model, dev_dialogues, seed=seed)
    flip_probs = {}
    for j, name in enumerate(model.schema.names):
        acc = base["per_facet"][name]
        if target_accuracy > acc + 1e-9:
            raise ValueError(
                f"target {target_accuracy} above facet {name!r} accuracy {acc:.3f}")
        flip_probs[j] = 1.0 - target_accuracy / acc
    return DegradedTracker(model, flip_probs)


# --------------------------------------------------------------------------- #
# Checkpoint plumbing
# --------------------------------------------------------------------------- #

def save_tracker(model, path):
    meta = {
        "schema": model.schema.to_dict(),
        "vocab": [list(e) for e in model.vocab.entries],
        "config": {
            "hidden": model.config.hidden,
            "separate": model.config.separate,
            "project_dim": model.config.project_dim,
        },
    }
    T.save_checkpoint(path, "tracker", model.params, meta)


def load_tracker(path):
    kind, params, meta = T.load_checkpoint(path)
    if kind != "tracker":
        raise ValueError(f"checkpoint is {kind!r}, expected tracker")
    schema = FacetSchema.from_dict(meta["schema"])
    vocab = NGramVocabulary(meta["vocab"])
    config = TrackerConfig(**meta["config"])
    return TrackerModel(schema, vocab, config, params)
