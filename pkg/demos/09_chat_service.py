"""
The chat service, driven in process
===================================

The HTTP layer is a thin FastAPI wrapper over ChatService; everything it
does can be scripted directly. Create a study-mode session, answer the
agent's questions truthfully, and select the target from the list.
`convrec serve --run <dir>` exposes the same object over HTTP.
"""

import tempfile

from convrec import (RewardConfig, SyntheticConfig, TrackerConfig,
                     generate_synthetic, split)
from convrec.dialoggen import (CorpusConfig, default_template_pack,
                               generate_dialogue_corpus)
from convrec.env import EnvComponents
from convrec.nlu import train_tracker
from convrec.recommender import FMConfig, gold_beliefs, train_fm
from convrec.service import ChatService

cat = generate_synthetic(SyntheticConfig(n_users=20, n_items=60,
                                         ratings_per_user=15, seed=0))
templates = default_template_pack(cat.schema)
dialogues = generate_dialogue_corpus(cat, templates, CorpusConfig(seed=0))
n_dev = len(dialogues) // 10
tracker, _ = train_tracker(dialogues[n_dev:], dialogues[:n_dev], cat.schema,
                           TrackerConfig(hidden=32, max_epochs=40, patience=10,
                                         seed=0), verbose=False)
fm, _ = train_fm(cat, split(cat), gold_beliefs(cat), FMConfig(seed=0),
                 verbose=False)
# a quickly-trained tracker is less confident than the benchmark one, so
# the known-facet gate sits lower here
comp = EnvComponents(cat, templates, tracker, fm, mu=1, theta_known=0.5)
log = tempfile.mktemp(suffix=".jsonl")
svc = ChatService(comp, RewardConfig(), default_policy="maxent_full",
                  study_log=log)

d = svc.create_session(policy="maxent_full", study_mode=True, seed=4)
sid = d["session_id"]
facets = d["target"]["facets"]
print(f"session {sid[:8]}..., find item {d['target']['item_id']}: {facets}")

reply = svc.post_message(sid, f"I'd like something {facets['cuisine']}.")
while reply["kind"] == "question":
    print(f"agent asks: {reply['text']!r}")
    answer = f"{facets[reply['facet']]}, please."
    print(f"user says:  {answer!r}")
    reply = svc.post_message(sid, answer)

shown = [card["item_id"] for card in reply["items"]]
print(f"agent recommends {len(shown)} items: {shown[:5]}{'...' if len(shown) > 5 else ''}")

if d["target"]["item_id"] in shown:
    out = svc.select_item(sid, item_id=d["target"]["item_id"])
    print(f"selected the target: outcome {out['outcome']}, rank {out['tau']}, "
          f"reward {out['reward']:.2f}")
else:
    out = svc.select_item(sid, none_found=True)
    print(f"target missing from the list: outcome {out['outcome']}, "
          f"reward {out['reward']:.2f}")
print(f"study log row written to {log}")
print(f"health: {svc.health()}")
