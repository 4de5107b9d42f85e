"""Tracker checks: tokenization, belief validity, masking, degradation."""

import functools

import numpy as np
import pytest

from convrec import tensor as T
from convrec.catalog import FacetSchema, SyntheticConfig, generate_synthetic
from convrec.dialoggen import (
    RESTAURANT_FACETS,
    CorpusConfig,
    default_template_pack,
    generate_dialogue_corpus,
)
from convrec.nlu import (
    BatchTrackerSession,
    NGramVocabulary,
    OracleTracker,
    TrackerConfig,
    _batched_loss,
    _dialogue_arrays,
    degrade_tracker,
    evaluate_tracker,
    init_tracker,
    load_tracker,
    ngrams,
    save_tracker,
    tokenize,
    track,
    train_tracker,
    uniform_belief,
    vectorize,
)
from tests.gradcheck import assert_gradients_close


@functools.lru_cache(maxsize=None)
def corpus():
    cat = generate_synthetic(SyntheticConfig(
        n_users=16, n_items=60, ratings_per_user=20,
        facet_spec=RESTAURANT_FACETS, seed=3))
    pack = default_template_pack(cat.schema)
    dialogues = generate_dialogue_corpus(cat, pack, CorpusConfig(seed=3))
    return cat, dialogues


@functools.lru_cache(maxsize=None)
def trained_tracker():
    cat, dialogues = corpus()
    model, history = train_tracker(dialogues[:256], dialogues[256:320], cat.schema,
                                   TrackerConfig(max_epochs=60, patience=10,
                                                 learning_rate=0.003, seed=0),
                                   verbose=False)
    return model, history


# ---------------------------------------------------------------- tokenization

def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("I'm looking for Sushi!") == ["i'm", "looking", "for", "sushi"]
    assert tokenize("") == []


def test_ngrams_slide_one_token_at_a_time():
    grams = ngrams(["very", "very", "good"])
    assert grams.count(("very", "very")) == 1
    assert grams.count(("very", "good")) == 1
    assert grams.count(("<s>", "very")) == 1
    assert grams.count(("good", "</s>")) == 1
    assert grams.count(("very",)) == 2


def test_vectorize_counts_known_bigrams():
    vocab = NGramVocabulary([("mexican", "food")])
    z = vectorize("Mexican food", vocab)
    assert z[vocab.index[("mexican", "food")]] == 1.0


def test_vectorize_empty_text_is_zero():
    vocab = NGramVocabulary([("a", "b")])
    assert np.array_equal(vectorize("", vocab), np.zeros(vocab.size))


def test_unknown_ngrams_pool_in_oov_bucket():
    vocab = NGramVocabulary([("mexican", "food")])
    z = vectorize("thai noodles", vocab)
    assert z[0] > 0
    assert z[1:].sum() == 0


def test_vocabulary_round_trips_through_json(tmp_path):
    vocab = NGramVocabulary.build(["mexican food", "thai food please"])
    path = tmp_path / "vocab.json"
    vocab.save(path)
    loaded = NGramVocabulary.load(path)
    assert loaded.entries == vocab.entries
    assert loaded.size == vocab.size


def test_vocabulary_rejects_duplicates():
    with pytest.raises(ValueError):
        NGramVocabulary([("a", "b"), ("a", "b")])


# ---------------------------------------------------------------- beliefs

def test_untrained_tracker_emits_valid_distributions():
    cat, dialogues = corpus()
    vocab = NGramVocabulary.build(["anything"])
    model = init_tracker(cat.schema, vocab, TrackerConfig(hidden=8))
    belief = track(model, ["complete gibberish here", "more of it"])
    belief.check_valid()
    assert belief.vector.shape == (cat.schema.state_dim,)


def test_state_length_is_sum_of_facet_sizes():
    schema = FacetSchema((("a", tuple(f"a{i}" for i in range(10))),
                          ("b", tuple(f"b{i}" for i in range(5))),
                          ("c", tuple(f"c{i}" for i in range(8))),
                          ("d", tuple(f"d{i}" for i in range(4)))))
    model = init_tracker(schema, NGramVocabulary.build(["x"]), TrackerConfig(hidden=4))
    assert track(model, ["x"]).vector.shape == (27,)


def test_track_requires_history():
    cat, _ = corpus()
    model = init_tracker(cat.schema, NGramVocabulary.build(["x"]), TrackerConfig(hidden=4))
    with pytest.raises(ValueError):
        track(model, [])


def test_overfit_single_dialogue_recovers_gold():
    cat, dialogues = corpus()
    d = dialogues[0]
    model, _ = train_tracker([d], [d], cat.schema,
                             TrackerConfig(max_epochs=80, patience=80, hidden=24, seed=1),
                             verbose=False)
    belief = track(model, [t.text for t in d.turns])
    for facet, value in d.informed_values().items():
        j = cat.schema.facet_index(facet)
        assert belief.argmax(j) == cat.schema.value_index(j, value)


def test_trained_tracker_beats_95_percent_on_clean_text():
    cat, dialogues = corpus()
    model, history = trained_tracker()
    dev = evaluate_tracker(model, dialogues[256:320])
    assert dev["joint"] >= 0.95


def test_session_streaming_matches_full_track():
    cat, dialogues = corpus()
    model, _ = trained_tracker()
    d = dialogues[5]
    session = model.session()
    for t in range(len(d.turns)):
        streamed = session.consume(d.turns[t].text)
        fresh = track(model, [turn.text for turn in d.turns[:t + 1]])
        assert np.allclose(streamed.vector, fresh.vector, atol=1e-12)


def test_batch_session_matches_sequential_sessions():
    cat, dialogues = corpus()
    model, _ = trained_tracker()
    picks = dialogues[:4]
    batch = BatchTrackerSession(model, 4)
    singles = [model.session() for _ in picks]
    for t in range(max(len(d.turns) for d in picks)):
        texts = [d.turns[t].text if t < len(d.turns) else None for d in picks]
        batch_beliefs = batch.consume(texts)
        for i, text in enumerate(texts):
            if text is not None:
                single = singles[i].consume(text)
                assert np.allclose(batch_beliefs[i].vector, single.vector, atol=1e-12)
            else:
                assert np.allclose(batch_beliefs[i].vector, singles[i].belief.vector,
                                   atol=1e-12)


# ---------------------------------------------------------------- training loss

def test_masked_facets_get_exactly_zero_gradient():
    cat, dialogues = corpus()
    vocab = NGramVocabulary.build(t.text for d in dialogues[:20] for t in d.turns)
    model = init_tracker(cat.schema, vocab, TrackerConfig(hidden=8, seed=2))
    Z, gold, mask = _dialogue_arrays(dialogues[0], cat.schema, vocab)
    silent = cat.schema.facet_index(next(iter(dialogues[0].informed_values())))
    mask = mask.copy()
    mask[:, silent] = 0.0
    with T.GradientTape() as tape:
        loss = _batched_loss(model, model.params, Z[None], gold[None], mask[None])
    grads = tape.gradient(loss, model.params)
    assert np.all(grads[f"head{silent}.w"] == 0.0)
    assert np.all(grads[f"head{silent}.b"] == 0.0)
    assert np.any(grads["lstm.wx"] != 0.0)


def test_tracker_loss_gradient_matches_finite_differences():
    schema = FacetSchema((("p", ("p0", "p1", "p2")), ("q", ("q0", "q1"))))
    vocab = NGramVocabulary([("hi", "there"), ("hi",), ("there",)])
    model = init_tracker(schema, vocab, TrackerConfig(hidden=3, seed=4))
    rng = np.random.default_rng(11)
    Z = rng.poisson(1.0, size=(2, 2, vocab.size)).astype(np.float64)
    gold = np.array([[[0, 1], [2, 0]], [[1, 0], [1, 1]]])
    mask = np.array([[[1.0, 0.0], [1.0, 1.0]], [[0.0, 1.0], [1.0, 1.0]]])

    def loss_fn(params):
        return _batched_loss(model, params, Z, gold, mask)

    with T.GradientTape() as tape:
        loss = loss_fn(model.params)
    grads = tape.gradient(loss, model.params)
    assert_gradients_close(lambda ps: loss_fn(ps).item(), model.params, grads)


def test_train_tracker_rejects_empty_corpus():
    cat, _ = corpus()
    with pytest.raises(ValueError):
        train_tracker([], [], cat.schema)


def test_separate_encoders_flag_trains():
    cat, dialogues = corpus()
    model, history = train_tracker(
        dialogues[:40], dialogues[40:50], cat.schema,
        TrackerConfig(hidden=12, separate=True, max_epochs=2, seed=0), verbose=False)
    assert any(k.startswith("f3.lstm") for k in model.params)
    track(model, ["hello there"]).check_valid()


def test_projection_flag_trains():
    cat, dialogues = corpus()
    model, history = train_tracker(
        dialogues[:40], dialogues[40:50], cat.schema,
        TrackerConfig(hidden=12, project_dim=16, max_epochs=2, seed=0), verbose=False)
    assert model.params["proj.w"].shape == (model.vocab.size, 16)
    track(model, ["hello there"]).check_valid()


# ---------------------------------------------------------------- oracle, degraded

def test_oracle_tracker_is_perfectly_accurate():
    cat, dialogues = corpus()
    oracle = OracleTracker(cat.schema)
    result = evaluate_tracker(oracle, dialogues[:100])
    assert result["joint"] == 1.0
    assert all(v == 1.0 for v in result["per_facet"].values())


def test_oracle_uninformed_facets_stay_uniform():
    cat, dialogues = corpus()
    oracle = OracleTracker(cat.schema)
    session = oracle.session()
    belief = session.consume(dialogues[0].turns[0])
    informed = {cat.schema.facet_index(a.facet) for a in dialogues[0].turns[0].acts}
    for j, n in enumerate(cat.schema.sizes):
        if j not in informed:
            assert np.allclose(belief.blocks[j], 1.0 / n)
        else:
            assert belief.blocks[j].max() == 1.0


def test_oracle_rejects_plain_text():
    cat, _ = corpus()
    with pytest.raises(ValueError):
        OracleTracker(cat.schema).session().consume("plain text")


def test_degraded_tracker_hits_target_accuracy():
    cat, dialogues = corpus()
    oracle = OracleTracker(cat.schema)
    degraded = degrade_tracker(oracle, 0.7, dialogues[:50])
    measured = evaluate_tracker(degraded, dialogues[:150], seed=9)
    assert abs(measured["mean"] - 0.7) < 0.04


def test_degraded_target_of_current_accuracy_is_identity():
    cat, dialogues = corpus()
    oracle = OracleTracker(cat.schema)
    degraded = degrade_tracker(oracle, 1.0, dialogues[:50])
    measured = evaluate_tracker(degraded, dialogues[:100])
    assert measured["joint"] == 1.0


def test_degraded_flips_are_stable_within_a_session():
    cat, dialogues = corpus()
    oracle = OracleTracker(cat.schema)
    degraded = degrade_tracker(oracle, 0.3, dialogues[:50])
    d = max(dialogues[:50], key=lambda d: len(d.turns))
    session = degraded.session(np.random.default_rng(4))
    seen = {}
    for turn in d.turns:
        belief = session.consume(turn)
        for a in turn.acts:
            if a.kind == "inform":
                seen[a.facet] = belief.argmax(a.facet)
        for facet, pick in seen.items():
            assert belief.argmax(facet) == pick  # no flicker across turns


def test_degrade_target_above_achievable_errors():
    cat, dialogues = corpus()
    oracle = OracleTracker(cat.schema)
    weak = degrade_tracker(oracle, 0.6, dialogues[:60])
    with pytest.raises(ValueError):
        degrade_tracker(weak, 0.95, dialogues[:60])
    with pytest.raises(ValueError):
        degrade_tracker(oracle, 1.5, dialogues[:60])


# ---------------------------------------------------------------- checkpoints

def test_tracker_checkpoint_round_trip(tmp_path):
    cat, dialogues = corpus()
    model, _ = trained_tracker()
    path = tmp_path / "tracker.json"
    save_tracker(model, path)
    loaded = load_tracker(path)
    assert loaded.schema == model.schema
    assert loaded.vocab.entries == model.vocab.entries
    for name in model.params:
        assert np.array_equal(loaded.params[name].data, model.params[name].data)
    a = track(model, ["i want sushi"]).vector
    b = track(loaded, ["i want sushi"]).vector
    assert np.array_equal(a, b)


def test_tracker_checkpoint_rejects_other_kinds(tmp_path):
    path = tmp_path / "thing.json"
    T.save_checkpoint(path, "fm", {"w": T.Tensor([1.0])})
    with pytest.raises(ValueError, match="tracker"):
        load_tracker(path)
