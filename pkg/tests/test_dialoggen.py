"""Template realization, delexicalization and corpus generation checks."""

import numpy as np
import pytest

from convrec.catalog import FacetSchema, SyntheticConfig, generate_synthetic, items_matching
from convrec.dialoggen import (
    RESTAURANT_FACETS,
    CorpusConfig,
    DialogueAct,
    TemplateError,
    UtteranceTemplate,
    check_coverage,
    default_template_pack,
    delexicalize,
    fill,
    generate_dialogue_corpus,
    inform,
    load_dialogues,
    load_templates,
    placeholder,
    realize,
    request,
    save_dialogues,
    save_templates,
)

SCHEMA = FacetSchema(RESTAURANT_FACETS)
PACK = default_template_pack(SCHEMA)


def restaurant_catalog(**kw):
    args = dict(n_users=6, n_items=30, ratings_per_user=8,
                facet_spec=RESTAURANT_FACETS, seed=13)
    args.update(kw)
    return generate_synthetic(SyntheticConfig(**args))


# ---------------------------------------------------------------- placeholders

def test_placeholder_camel_cases_facet_names():
    assert placeholder("price_range") == "<PriceRange>"
    assert placeholder("city") == "<City>"
    assert placeholder("rating_range") == "<RatingRange>"


# ---------------------------------------------------------------- delexicalize

def test_delexicalize_two_facet_opener():
    out = delexicalize("I'm looking for Mexican food in Glendale",
                       {"category": "Mexican", "city": "Glendale"})
    assert out.text == "I'm looking for <Category> food in <City>"
    assert out.facets == ("category", "city")


def test_delexicalize_without_targets_is_identity():
    out = delexicalize("thank you", {})
    assert out.text == "thank you"
    assert out.facets == ()


def test_delexicalize_replaces_every_occurrence():
    out = delexicalize("cheap food, really cheap", {"price_range": "cheap"})
    assert out.text == "<PriceRange> food, really <PriceRange>"


def test_delexicalize_is_case_insensitive():
    out = delexicalize("i want MEXICAN food", {"category": "Mexican"})
    assert out.text == "i want <Category> food"


def test_delexicalize_reports_missing_values():
    with pytest.raises(TemplateError, match="Glendale"):
        delexicalize("I want sushi", {"city": "Glendale"})


def test_delexicalize_longer_values_first():
    out = delexicalize("New York style, New menu",
                       {"city": "New York", "category": "New"})
    assert out.text == "<City> style, <Category> menu"


# ---------------------------------------------------------------- realize

def _support(act, n=300):
    texts = set()
    rng = np.random.default_rng(0)
    for _ in range(n):
        texts.add(realize(PACK, act, rng).text)
    return texts


def test_request_city_idiom_is_reachable():
    assert "Which city are you in?" in _support(request("city"))


def test_cheap_price_idiom_is_reachable():
    assert "Low price." in _support(inform("price_range", "cheap"))


def test_thanks_idiom_is_reachable():
    assert "thank you" in _support(DialogueAct("thanks"))


def test_value_idiom_never_fires_for_other_values():
    assert "Low price." not in _support(inform("price_range", "luxury"))


def test_realized_informs_carry_the_value():
    rng = np.random.default_rng(1)
    for _ in range(50):
        utt = realize(PACK, inform("city", "Burbank"), rng)
        assert "Burbank" in utt.text
        assert "<City>" not in utt.text


def test_realize_without_template_errors():
    with pytest.raises(TemplateError):
        realize([], request("city"), np.random.default_rng(0))


def test_fill_requires_all_placeholders():
    tpl = UtteranceTemplate("inform", ("city",), "I'm in <City>.")
    with pytest.raises(TemplateError, match="city"):
        fill(tpl, {})


def test_round_trip_through_shipped_pack():
    values = {"category": "Thai", "city": "Irvine",
              "price_range": "moderate", "rating_range": "4+"}
    for tpl in PACK:
        if tpl.act != "inform" or not tpl.facets or tpl.value is not None:
            continue
        chosen = {f: values[f] for f in tpl.facets}
        text = fill(tpl, chosen)
        assert delexicalize(text, chosen).text == tpl.text


# ---------------------------------------------------------------- coverage

def test_default_pack_covers_schema():
    check_coverage(PACK, SCHEMA)


def test_coverage_gap_names_the_facet():
    gap = [t for t in PACK if not (t.act == "inform" and t.facets == ("city",))]
    with pytest.raises(TemplateError, match="city"):
        check_coverage(gap, SCHEMA)


# ---------------------------------------------------------------- jsonl

def test_template_pack_round_trips_through_jsonl(tmp_path):
    path = tmp_path / "templates.jsonl"
    save_templates(PACK, path)
    loaded = load_templates(path)
    assert loaded == PACK


def test_template_jsonl_reports_bad_lines(tmp_path):
    path = tmp_path / "templates.jsonl"
    path.write_text('{"act": "inform", "facet": "city", "text": ""}\n')
    with pytest.raises(TemplateError, match="templates.jsonl:1"):
        load_templates(path)


# ---------------------------------------------------------------- corpus

def test_one_dialogue_per_pair():
    cat = restaurant_catalog()
    pairs = [(r.user_id, r.item_id) for r in cat.ratings[:3]]
    dialogues = generate_dialogue_corpus(cat, PACK, pairs=pairs)
    assert len(dialogues) == 3
    assert [(d.user_id, d.item_id) for d in dialogues] == pairs


def test_corpus_defaults_to_rating_pairs():
    cat = restaurant_catalog()
    dialogues = generate_dialogue_corpus(cat, PACK)
    assert len(dialogues) == len(cat.ratings)


def test_gold_labels_match_target_item():
    cat = restaurant_catalog()
    dialogues = generate_dialogue_corpus(cat, PACK, pairs=[
        (r.user_id, r.item_id) for r in cat.ratings[:20]])
    for d in dialogues:
        item = cat.items[cat.item_index[d.item_id]]
        informed = d.informed_values()
        assert set(informed) == set(cat.schema.names)
        for f, v in informed.items():
            fi = cat.schema.facet_index(f)
            assert cat.schema.values(fi)[item.values[fi]] == v
        assert item in items_matching(cat, informed)


def test_corpus_is_deterministic_per_seed():
    cat = restaurant_catalog()
    pairs = [(r.user_id, r.item_id) for r in cat.ratings[:10]]
    a = generate_dialogue_corpus(cat, PACK, CorpusConfig(seed=5), pairs)
    b = generate_dialogue_corpus(cat, PACK, CorpusConfig(seed=5), pairs)
    c = generate_dialogue_corpus(cat, PACK, CorpusConfig(seed=6), pairs)
    assert a == b
    assert a != c


def test_two_facet_opener_rate_is_calibrated():
    cat = restaurant_catalog(n_users=20, ratings_per_user=25)
    dialogues = generate_dialogue_corpus(cat, PACK, CorpusConfig(seed=2))
    rate = np.mean([len(d.turns[0].acts) == 2 for d in dialogues])
    assert 0.15 < rate < 0.25  # 500 draws at p=0.2


def test_dontknow_replaces_the_inform():
    cat = restaurant_catalog()
    dialogues = generate_dialogue_corpus(
        cat, PACK, CorpusConfig(dontknow_prob=1.0, opener_two_facet_prob=0.0),
        pairs=[(cat.ratings[0].user_id, cat.ratings[0].item_id)])
    d = dialogues[0]
    assert len(d.informed_values()) == 1  # only the opener facet
    assert any(a.kind == "dontknow" for t in d.turns[1:] for a in t.acts)


def test_typo_noise_perturbs_text():
    cat = restaurant_catalog()
    pairs = [(r.user_id, r.item_id) for r in cat.ratings[:10]]
    clean = generate_dialogue_corpus(cat, PACK, CorpusConfig(seed=1), pairs)
    noisy = generate_dialogue_corpus(
        cat, PACK, CorpusConfig(seed=1, typo_rate=0.9, casing_rate=0.5), pairs)
    assert any(c.turns[i].text != n.turns[i].text
               for c, n in zip(clean, noisy) for i in range(len(c.turns)))


def test_dialogues_round_trip_through_jsonl(tmp_path):
    cat = restaurant_catalog()
    dialogues = generate_dialogue_corpus(cat, PACK, pairs=[
        (r.user_id, r.item_id) for r in cat.ratings[:5]])
    path = tmp_path / "dialogues.jsonl"
    save_dialogues(dialogues, path)
    assert load_dialogues(path) == dialogues
