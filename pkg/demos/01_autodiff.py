"""
Reverse-mode autodiff in sixty lines of use
===========================================

The whole stack runs on one tape-based tensor engine. Record a
computation, ask the tape for gradients, verify one of them by hand.
"""

import numpy as np

import convrec.tensor as T

# a tiny least-squares problem: y = X w + noise
rng = np.random.default_rng(0)
X = rng.normal(size=(50, 3))
w_true = np.array([[1.5], [-2.0], [0.5]])
y = X @ w_true + 0.01 * rng.normal(size=(50, 1))

params = {"w": T.Tensor(np.zeros((3, 1)))}

def loss_fn(params):
    pred = T.matmul(T.Tensor(X), params["w"])
    return T.mean(T.square(T.sub(pred, T.Tensor(y))))

# record once, differentiate once
with T.GradientTape() as tape:
    loss = loss_fn(params)
grads = tape.gradient(loss, params)
print(f"loss at w=0: {loss.item():.4f}")
print(f"analytic grad (2/n X'(Xw - y)) head: {(2 / 50 * X.T @ (-y))[0, 0]:+.4f}")
print(f"tape grad head:                      {grads['w'][0, 0]:+.4f}")

# gradient descent with the shared optimizer
opt = T.OptimizerConfig(kind="sgd", learning_rate=0.1)
state = None
for step in range(200):
    with T.GradientTape() as tape:
        loss = loss_fn(params)
    grads = tape.gradient(loss, params)
    params, state = T.optimizer_step(params, grads, opt, state)
print(f"after 200 sgd steps: loss {loss.item():.6f}")
print(f"recovered w: {params['w'].data.ravel().round(3)} (true {w_true.ravel()})")
