"""numpy kernels for the feedforward-net hot loop.

Reference semantics for both backends: an affine/ReLU stack with a linear
output layer, squared-error loss on one selected output coordinate per
sample (or the single output when `action_idx` is None), and one plain
gradient-descent step on the batch-mean loss. The ReLU subgradient at 0
is 0. `sgd_step` mutates the weight/bias arrays in place and returns the
pre-update loss.
"""

import numpy as np


def forward_batch(weights, biases, x):
    h = np.asarray(x, dtype=np.float64)
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        h = np.maximum(z, 0.0) if i < last else z
    return h


def sgd_step(weights, biases, x, action_idx, targets, lr):
    n_layers = len(weights)
    acts = [np.asarray(x, dtype=np.float64)]
    for i in range(n_layers):
        z = acts[-1] @ weights[i] + biases[i]
        acts.append(np.maximum(z, 0.0) if i < n_layers - 1 else z)
    out = acts[-1]
    batch = out.shape[0]

    rows = np.arange(batch)
    cols = np.zeros(batch, dtype=np.int64) if action_idx is None else action_idx
    err = out[rows, cols] - targets
    loss = float(np.mean(err * err))

    delta = np.zeros_like(out)
    delta[rows, cols] = (2.0 / batch) * err
    for i in range(n_layers - 1, -1, -1):
        grad_w = acts[i].T @ delta
        grad_b = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (acts[i] > 0.0)
        weights[i] -= lr * grad_w
        biases[i] -= lr * grad_b
    return loss
