"""
REINFORCE from scratch on a two-armed bandit
============================================

The dialogue policy trains with plain Monte-Carlo policy gradient:
sample episodes, weight log-probabilities by discounted returns minus a
batch-mean baseline, ascend. A one-state bandit makes the machinery easy
to watch before pointing it at dialogues.
"""

import numpy as np

from convrec.policy import (Episode, PolicyConfig, init_policy,
                            policy_forward, reinforce_update)

# arm 0 pays 0.2, arm 1 pays 1.0; the policy should find arm 1
state = np.ones((1, 1))
net = init_policy(1, 2, PolicyConfig(hidden=8, learning_rate=0.01,
                                     gamma=1.0, seed=0))
rng = np.random.default_rng(0)

opt_state = None
print(f"{'batch':>5} {'P(arm 1)':>9} {'loss':>9}")
for batch_idx in range(30):
    batch = []
    for _ in range(50):
        probs = policy_forward(net.params, state).data[0]
        a = int(rng.choice(2, p=probs))
        batch.append(Episode(states=[state[0]], actions=[a],
                             rewards=[1.0 if a == 1 else 0.2],
                             outcome="success",
                             log_probs=[float(np.log(probs[a]))]))
    loss, opt_state = reinforce_update(net, batch, opt_state)
    if batch_idx % 5 == 0 or batch_idx == 29:
        p1 = policy_forward(net.params, state).data[0, 1]
        print(f"{batch_idx:>5} {p1:>9.3f} {loss:>9.4f}")

p1 = policy_forward(net.params, state).data[0, 1]
print(f"\nafter 30 batches the policy pulls the better arm "
      f"with probability {p1:.3f}")
print("the dialogue version is identical, with belief vectors as states,")
print("facet requests plus recommend as arms, and episode returns from the")
print("simulated user (see train_rl in the env module)")
