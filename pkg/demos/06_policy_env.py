"""
Talking to the simulated user
=============================

A cooperative user wants one target item and answers questions with its
true facet values. Watch a MaxEnt agent interrogate one user, then score
the rule baselines over a few hundred seeded episodes.
"""

import numpy as np

from convrec import RewardConfig, SyntheticConfig, generate_synthetic
from convrec.dialoggen import default_template_pack, realize, request
from convrec.env import EnvComponents, SimulatedUser, evaluate, make_agent
from convrec.nlu import OracleTracker
from convrec.policy import RuleState, index_to_action
from convrec.recommender import FMConfig, gold_beliefs, recommend, train_fm
from convrec.catalog import items_matching, split

cat = generate_synthetic(SyntheticConfig(seed=0))
templates = default_template_pack(cat.schema)
fm, _ = train_fm(cat, split(cat), gold_beliefs(cat), FMConfig(seed=0),
                 verbose=False)
comp = EnvComponents(cat, templates, OracleTracker(cat.schema), fm,
                     mu=1, theta_known=0.8)
cfg = RewardConfig()
schema = cat.schema

# one episode, spelled out
rng = np.random.default_rng(12)
target = cat.items[42]
user = SimulatedUser(cat.users[3], target, templates, rng)
agent = make_agent("maxent_full")
session = comp.tracker.session(rng=rng)
opening = user.open(schema)
belief = session.consume(opening)
print(f"target: {target.item_id}")
print(f"user:  {opening.text!r}")
asked = 0
for t in range(cfg.max_turns + 1):
    known = {j: target.values[j] for j in user.informed}
    state = RuleState(known=frozenset(user.informed),
                      candidates=items_matching(cat, known), turn=t,
                      asked=asked, n_facets=schema.n_facets,
                      max_turns=cfg.max_turns)
    a, _ = agent.act(belief.vector, state, rng)
    action = index_to_action(a, schema.n_facets)
    if action.kind == "recommend":
        ranked = recommend(fm, cat.user_index[user.user_id], belief, cat,
                           mu=1, theta_known=0.8)
        ids = [item_id for item_id, _ in ranked]
        tau = ids.index(target.item_id) + 1 if target.item_id in ids else None
        print(f"agent: recommends {len(ids)} items; target at rank {tau}")
        break
    q = realize(templates, request(schema.names[action.facet]), rng)
    reply = user._inform(action.facet, schema)
    asked += 1
    print(f"agent: {q.text!r}")
    print(f"user:  {reply.text!r}")
    belief = session.consume(reply)

# rule baselines over seeded episode batches
pairs = [(r.user_id, r.item_id) for r in split(cat).test]
print(f"\n{'policy':<14} {'R':>7} {'T':>5} {'S%':>6} {'W%':>6} {'L%':>6}")
for name in ("maxent@1", "maxent@2", "maxent_full", "random"):
    m = evaluate(make_agent(name), comp, pairs, cfg, 400, seed=9)
    print(f"{name:<14} {m.R:>7.2f} {m.T:>5.2f} {m.S:>6.1f} {m.W:>6.1f} {m.L:>6.1f}")
