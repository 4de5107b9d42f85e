"""Utterance templates and synthetic dialogue generation.

The simulated user and the agent both speak through a template pack:
surface texts with <FacetName> placeholders, drawn by weight. Dialogues
for tracker training are generated one per (user, item) pair by walking
a random facet order and realizing inform acts for the item's values.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

ACT_KINDS = ("inform", "request", "recommend", "dontknow", "thanks")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class DialogueAct:
    kind: str
    facet: str | None = None
    value: str | None = None

    def __post_init__(self):
        if self.kind not in ACT_KINDS:
            raise TemplateError(f"unknown act kind {self.kind!r}")
        if self.kind in ("inform", "request", "dontknow") and not self.facet:
            raise TemplateError(f"act {self.kind!r} needs a facet")
        if self.kind == "inform" and self.value is None:
            raise TemplateError("inform needs a value")


def inform(facet, value):
    return DialogueAct("inform", facet, value)


def request(facet):
    return DialogueAct("request", facet)


@dataclass(frozen=True)
class UtteranceTemplate:
    act: str
    facets: tuple = ()          # facet names whose placeholders appear, in text order
    text: str = ""
    weight: float = 1.0
    value: str | None = None    # set on idioms tied to one specific value

    def __post_init__(self):
        if self.act not in ACT_KINDS:
            raise TemplateError(f"unknown act kind {self.act!r}")
        if not self.text:
            raise TemplateError("template text must be non-empty")
        if self.weight <= 0:
            raise TemplateError("template weight must be positive")


@dataclass(frozen=True)
class Utterance:
    text: str
    acts: tuple = ()

    def __post_init__(self):
        if not self.text:
            raise TemplateError("utterance text must be non-empty")


def placeholder(facet_name):
    """price_range -> <PriceRange>"""
    return "<" + "".join(part.capitalize() for part in facet_name.split("_")) + ">"


def fill(template, values):
    """Substitute the placeholders that occur from a {facet: value} mapping."""
    text = template.text
    for facet in template.facets:
        ph = placeholder(facet)
        if ph not in text:
            continue  # facet is metadata only (request/dontknow surface forms)
        if values.get(facet) is None:
            raise TemplateError(f"template needs a value for facet {facet!r}")
        text = text.replace(ph, values[facet])
    return text


def delexicalize(utterance, target_values):
    """Replace each target value in the text with its facet placeholder.

    Matching is case-insensitive and covers every occurrence; longer values
    are substituted first so one value being a substring of another cannot
    corrupt the template.
    """
    text = utterance.text if isinstance(utterance, Utterance) else str(utterance)
    missing = [v for v in target_values.values()
               if re.search(re.escape(v), text, re.IGNORECASE) is None]
    if missing:
        raise TemplateError(f"values not found in utterance: {missing}")
    by_length = sorted(target_values.items(), key=lambda kv: -len(kv[1]))
    for facet, value in by_length:
        text = re.sub(re.escape(value), placeholder(facet), text, flags=re.IGNORECASE)
    order = sorted(target_values, key=lambda f: text.index(placeholder(f)))
    return UtteranceTemplate(act="inform", facets=tuple(order), text=text)


def realize(templates, act, rng):
    """Weighted draw of a matching template, placeholders filled from the act."""
    if act.kind == "inform":
        pool = [t for t in templates if t.act == "inform" and t.facets == (act.facet,)
                and (t.value is None or t.value == act.value)]
    elif act.kind in ("request", "dontknow"):
        pool = [t for t in templates if t.act == act.kind and t.facets == (act.facet,)]
    else:
        pool = [t for t in templates if t.act == act.kind]
    if not pool:
        raise TemplateError(f"no template for act {act!r}")
    weights = np.array([t.weight for t in pool])
    chosen = pool[int(rng.choice(len(pool), p=weights / weights.sum()))]
    values = {act.facet: act.value} if act.facet else {}
    return Utterance(fill(chosen, values), acts=(act,))


def realize_inform_turn(templates, informs, rng):
    """One user turn carrying one or more inform acts.

    A template covering exactly the informed facets is preferred (the
    two-facet opener idiom); otherwise single-facet realizations are joined.
    """
    informs = tuple(informs)
    facet_set = {a.facet for a in informs}
    joint = [t for t in templates if t.act == "inform" and len(t.facets) > 1
             and set(t.facets) == facet_set and t.value is None]
    if joint and len(informs) > 1:
        weights = np.array([t.weight for t in joint])
        chosen = joint[int(rng.choice(len(joint), p=weights / weights.sum()))]
        values = {a.facet: a.value for a in informs}
        return Utterance(fill(chosen, values), acts=informs)
    parts = [realize(templates, a, rng).text for a in informs]
    return Utterance(" ".join(parts), acts=informs)


# --------------------------------------------------------------------------- #
# Starter pack
# --------------------------------------------------------------------------- #

RESTAURANT_FACETS = (
    ("category", ("Mexican", "Chinese", "Italian", "Thai", "Indian",
                  "Burgers", "Sushi", "Pizza", "Vegan", "Seafood")),
    ("city", ("Glendale", "Pasadena", "Burbank", "Torrance", "Irvine")),
    ("price_range", ("cheap", "moderate", "expensive", "luxury")),
    ("rating_range", ("3+", "3.5+", "4+", "4.5+")),
)

_INFORM_FORMS = (
    ("I'm looking for {ph}.", 2.0),
    ("I want {ph}.", 1.0),
    ("{ph} would be great.", 1.0),
    ("Let's go with {ph}.", 1.0),
    ("How about {ph}?", 1.0),
    ("I'd prefer {ph}.", 1.0),
    ("Make it {ph}.", 0.5),
    ("{ph}, please.", 1.0),
)

_REQUEST_FORMS = (
    ("Which {name} do you prefer?", 2.0),
    ("What {name} are you looking for?", 1.0),
    ("Do you have a {name} in mind?", 1.0),
    ("Any preference on {name}?", 1.0),
    ("Could you tell me the {name}?", 1.0),
    ("What about the {name}?", 0.5),
    ("Which {name} works for you?", 1.0),
    ("Tell me your preferred {name}.", 0.5),
)

_DONTKNOW_FORMS = (
    ("I don't mind.", 2.0),
    ("No preference.", 1.0),
    ("Anything is fine.", 1.0),
    ("I'm not sure about the {name}.", 1.0),
    ("Whatever you suggest.", 1.0),
    ("Don't know.", 0.5),
    ("No idea about the {name}.", 0.5),
    ("Surprise me.", 0.5),
)

_RECOMMEND_FORMS = (
    ("How about this one?", 2.0),
    ("I think you'll like this.", 1.0),
    ("Here's my pick for you.", 1.0),
    ("You might enjoy this one.", 1.0),
    ("Take a look at this.", 1.0),
    ("This one seems like a fit.", 1.0),
    ("My best match for you:", 0.5),
    ("I'd recommend this.", 1.0),
)

_THANKS_FORMS = (
    ("thank you", 2.0),
    ("thanks!", 1.0),
    ("thanks a lot", 1.0),
    ("great, thank you", 1.0),
    ("perfect, thanks", 1.0),
    ("that works, thank you", 0.5),
    ("awesome, thanks", 0.5),
    ("much appreciated", 0.5),
)

# domain idioms keyed on facet names, merged in when the schema has them
_REQUEST_IDIOMS = {
    "city": ("Which city are you in?",),
    "category": ("What kind of food do you want?",),
    "price_range": ("How much do you want to spend?",),
    "rating_range": ("How picky are you about ratings?",),
}

_INFORM_IDIOMS = {
    "city": ("I'm in <City>.", "Somewhere in <City> works."),
    "category": ("I'm looking for <Category> food.", "I feel like <Category> today."),
}

_INFORM_VALUE_IDIOMS = {
    ("price_range", "cheap"): ("Low price.", "Something cheap."),
    ("price_range", "expensive"): ("High price.",),
}

_JOINT_OPENER_IDIOMS = {
    ("category", "city"): ("I'm looking for <Category> food in <City>",),
}


def default_template_pack(schema):
    """Generic surface forms for every facet plus domain idioms when names match."""
    pack = []
    for name in schema.names:
        ph = placeholder(name)
        readable = name.replace("_", " ")
        for text, w in _INFORM_FORMS:
            pack.append(UtteranceTemplate("inform", (name,), text.format(ph=ph), w))
        for text, w in _REQUEST_FORMS:
            pack.append(UtteranceTemplate("request", (name,), text.format(name=readable), w))
        for text, w in _DONTKNOW_FORMS:
            pack.append(UtteranceTemplate("dontknow", (name,), text.format(name=readable), w))
        for text in _REQUEST_IDIOMS.get(name, ()):
            pack.append(UtteranceTemplate("request", (name,), text, 3.0))
        for text in _INFORM_IDIOMS.get(name, ()):
            pack.append(UtteranceTemplate("inform", (name,), text, 1.5))
        for value in schema.values(name):
            for text in _INFORM_VALUE_IDIOMS.get((name, value), ()):
                pack.append(UtteranceTemplate("inform", (name,), text, 1.5, value=value))
    for text, w in _RECOMMEND_FORMS:
        pack.append(UtteranceTemplate("recommend", (), text, w))
    for text, w in _THANKS_FORMS:
        pack.append(UtteranceTemplate("thanks", (), text, w))
    for facets, texts in _JOINT_OPENER_IDIOMS.items():
        if all(f in schema.names for f in facets):
            for text in texts:
                pack.append(UtteranceTemplate("inform", tuple(facets), text, 2.0))
    return pack


def check_coverage(templates, schema):
    """Every facet needs a value-agnostic inform template; raise naming gaps."""
    for name in schema.names:
        ok = any(t.act == "inform" and t.facets == (name,) and t.value is None
                 for t in templates)
        if not ok:
            raise TemplateError(f"template pack has no ('inform', {name!r}) coverage")


# --------------------------------------------------------------------------- #
# templates.jsonl
# --------------------------------------------------------------------------- #

def save_templates(templates, path):
    with open(path, "w") as fh:
        for t in templates:
            doc = {"act": t.act, "text": t.text, "weight": t.weight}
            if len(t.facets) == 1:
                doc["facet"] = t.facets[0]
            elif t.facets:
                doc["facet"] = list(t.facets)
            if t.value is not None:
                doc["value"] = t.value
            fh.write(json.dumps(doc) + "\n")


def load_templates(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                facet = doc.get("facet")
                facets = () if facet is None else \
                    (facet,) if isinstance(facet, str) else tuple(facet)
                out.append(UtteranceTemplate(doc["act"], facets, doc["text"],
                                             float(doc.get("weight", 1.0)),
                                             doc.get("value")))
            except (KeyError, TemplateError, json.JSONDecodeError) as err:
                raise TemplateError(f"{path}:{lineno}: {err}") from None
    return out


# --------------------------------------------------------------------------- #
# Corpus generation
# --------------------------------------------------------------------------- #

@dataclass
class CorpusConfig:
    opener_two_facet_prob: float = 0.2
    dontknow_prob: float = 0.0
    typo_rate: float = 0.0       # per word: swap two adjacent characters
    casing_rate: float = 0.0     # per word: uppercase the whole word
    include_thanks: bool = False
    seed: int = 0


@dataclass(frozen=True)
class Turn:
    text: str
    acts: tuple  # gold DialogueActs of this turn


@dataclass(frozen=True)
class Dialogue:
    user_id: str
    item_id: str
    turns: tuple

    def informed_values(self):
        """Cumulative {facet: value} after the final turn."""
        out = {}
        for turn in self.turns:
            for act in turn.acts:
                if act.kind == "inform":
                    out[act.facet] = act.value
        return out


def _noisy(text, rng, config):
    if config.typo_rate <= 0 and config.casing_rate <= 0:
        return text
    words = text.split(" ")
    for i, w in enumerate(words):
        if len(w) >= 3 and rng.random() < config.typo_rate:
            k = int(rng.integers(0, len(w) - 1))
            w = w[:k] + w[k + 1] + w[k] + w[k + 2:]
        if rng.random() < config.casing_rate:
            w = w.upper()
        words[i] = w
    return " ".join(words)


def generate_dialogue_corpus(catalog, templates, config=None, pairs=None):
    """One labeled dialogue per (user, item) pair; deterministic per seed.

    The user informs the target item's facet values in a random order, one
    facet per turn except the opener, which carries two facets with
    ``opener_two_facet_prob``. Gold acts ride along for tracker training.
    """
    config = config or CorpusConfig()
    schema = catalog.schema
    check_coverage(templates, schema)
    if pairs is None:
        pairs = [(r.user_id, r.item_id) for r in catalog.ratings]

    dialogues = []
    for k, (user_id, item_id) in enumerate(pairs):
        rng = np.random.default_rng([config.seed, k])
        item = catalog.items[catalog.item_index[item_id]]
        facet_order = [schema.names[j] for j in rng.permutation(schema.n_facets)]
        informs = [inform(f, schema.values(f)[item.values[schema.facet_index(f)]])
                   for f in facet_order]

        turns = []
        opener_n = 2 if (len(informs) >= 2 and rng.random() < config.opener_two_facet_prob) else 1
        head, rest = informs[:opener_n], informs[opener_n:]
        opener = realize_inform_turn(templates, head, rng)
        turns.append(Turn(_noisy(opener.text, rng, config), opener.acts))
        for act in rest:
            if config.dontknow_prob > 0 and rng.random() < config.dontknow_prob:
                # the user cannot answer for this facet; it stays uninformed
                dk = realize(templates, DialogueAct("dontknow", act.facet), rng)
                turns.append(Turn(_noisy(dk.text, rng, config), dk.acts))
                continue
            utt = realize(templates, act, rng)
            turns.append(Turn(_noisy(utt.text, rng, config), utt.acts))
        if config.include_thanks:
            utt = realize(templates, DialogueAct("thanks"), rng)
            turns.append(Turn(utt.text, utt.acts))
        dialogues.append(Dialogue(user_id, item_id, tuple(turns)))
    return dialogues


def save_dialogues(dialogues, path):
    with open(path, "w") as fh:
        for d in dialogues:
            doc = {
                "user_id": d.user_id,
                "item_id": d.item_id,
                "turns": [{"text": t.text,
                           "acts": [{"kind": a.kind, "facet": a.facet, "value": a.value}
                                    for a in t.acts]} for t in d.turns],
            }
            fh.write(json.dumps(doc) + "\n")


def load_dialogues(path):
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            turns = tuple(
                Turn(t["text"], tuple(DialogueAct(a["kind"], a.get("facet"), a.get("value"))
                                      for a in t["acts"]))
                for t in doc["turns"])
            out.append(Dialogue(doc["user_id"], doc["item_id"], turns))
    return out
