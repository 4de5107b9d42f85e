"""
Template dialogues: acts in, text out
=====================================

Dialogue acts (inform/request/recommend) are realized through a template
pack with several surface idioms per act. Corpus generation walks each
user-item pair, informing facet values over a few turns; the gold labels
ride along for tracker supervision.
"""

import numpy as np

from convrec import SyntheticConfig, generate_synthetic
from convrec.dialoggen import (CorpusConfig, default_template_pack,
                               generate_dialogue_corpus, inform, realize,
                               request)

cat = generate_synthetic(SyntheticConfig(seed=0))
templates = default_template_pack(cat.schema)
print(f"template pack: {len(templates)} templates")

rng = np.random.default_rng(3)
for act in (inform("cuisine", cat.schema.values("cuisine")[2]),
            request("area")):
    for _ in range(3):
        print(f"  {act.kind}({act.facet}) -> {realize(templates, act, rng).text!r}")

# a corpus keyed to catalog pairs
dialogues = generate_dialogue_corpus(cat, templates, CorpusConfig(seed=0))
print(f"\ncorpus: {len(dialogues)} dialogues")
d = dialogues[0]
print(f"dialogue for user {d.user_id}, item {d.item_id}:")
for turn in d.turns:
    gold = {a.facet: a.value for a in turn.acts}
    print(f"  {turn.text!r}   gold={gold}")
print(f"informed after full dialogue: {d.informed_values()}")
