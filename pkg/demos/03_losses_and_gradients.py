"""The three training objectives and the gradient contract behind them.

Shows the recommendation BCE, the ranking-consistency term between the two
item views, the orthogonality penalty on their correlation matrix, the
weighted total, and a finite-difference audit of the analytic gradients.

Run: python demos/03_losses_and_gradients.py
"""

import numpy as np

from fed3cr import (
    consistency_loss,
    forward_pass,
    grad_check,
    init_client,
    orthogonality_loss,
    rec_loss,
    top_one_distribution,
    total_loss,
)
from fed3cr.losses import total_loss_t

print("=== Recommendation BCE ===")
print("coin-flip prediction on a positive:", round(rec_loss(np.array([0.5]), np.array([1])), 4))
print("confident correct predictions     :", round(rec_loss(np.array([0.99, 0.01]), np.array([1, 0])), 4))

print("\n=== Ranking consistency between views ===")
proto = np.array([1.0, 0.5])
table = np.random.default_rng(0).normal(size=(6, 2))
dist = top_one_distribution(proto, table)
print("top-one distribution (softmax of cosines):", np.round(dist, 3), "sum", dist.sum())
same = consistency_loss(dist, dist)
print(f"matching distributions -> shared entropy {same:.4f} (the floor, not zero)")
other = top_one_distribution(-proto, table)
print(f"disagreeing distributions -> {consistency_loss(dist, other):.4f}")

print("\n=== Orthogonality penalty ===")
c_e = np.array([[1.0, 0.0]])
v = np.array([[0.0, 1.0]])
print("single-row worked case:", orthogonality_loss(c_e, v))
rng = np.random.default_rng(1)
shared = rng.normal(size=(10, 4))
print("tables with heavy overlap:", round(orthogonality_loss(shared, 0.7 * shared), 3))

print("\n=== Weighted total on a live forward pass ===")
state = init_client(seed=5, d=4, M=6, dtype=np.float64)
positives = np.array([0, 2, 4])
trace = forward_pass(state, positives)
items, labels = np.array([0, 1, 2, 3, 5]), np.array([1, 0, 1, 0, 0])
parts = total_loss(trace, (items, labels), beta_a=0.5, beta_o=0.5)
print(f"rec {parts.l_rec:.4f} + 0.5*consistency {parts.l_a:.4f} + 0.5*orthogonality {parts.l_o:.4f}"
      f" = {parts.total:.4f}")

print("\n=== Gradient audit (central differences vs the tape) ===")
# condition the instance: tiny near-zero blocks make finite differences noisy
rng = np.random.default_rng(9)
state.user_embedding = rng.normal(0, 0.5, 4)
state.global_table = rng.normal(0, 0.5, (6, 4))
state.personal_table = rng.normal(0, 0.5, (6, 4))
state.transfer_net.weights[-1] = rng.normal(0, 0.3, state.transfer_net.weights[-1].shape)


def objective(s):
    t = forward_pass(s, positives)
    return total_loss_t(t, items, labels, beta_a=0.5, beta_o=0.5)[0], t


total_tensor, trace = objective(state)
total_tensor.backward()
for name in ("u", "C", "V", "w0", "w1"):
    tensor = trace.params[name]

    def f(p, name=name):
        s2 = state.copy()
        if name == "u":
            s2.user_embedding = p
        elif name == "C":
            s2.global_table = p
        elif name == "V":
            s2.personal_table = p
        else:
            s2.transfer_net.weights[int(name[1:])] = p
        return objective(s2)[0].item()

    print(f"  block {name:2s}: {grad_check(f, tensor.data, tensor.grad)}")
