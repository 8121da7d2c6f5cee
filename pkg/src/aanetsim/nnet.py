"""Feedforward-network engine with manual gradients.

Tiny fully connected nets (affine + ReLU hidden layers, linear output)
trained by plain stochastic gradient descent on a squared-error loss,
with soft-updated target copies. Everything is double precision.

Two interchangeable kernel backends exist: a compiled Cython extension
and a pure-numpy fallback. The compiled one is preferred when it
imported successfully; set AANETSIM_NNET_BACKEND=numpy|cython to force a
choice (see benchmarks/bench_mlp_backends.py for a comparison).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _mlp_np

try:
    from . import _mlp_cy
except ImportError:
    _mlp_cy = None

PARAMS_FORMAT_VERSION = 1


class GradientError(RuntimeError):
    """A training step produced a non-finite loss or gradient."""


class ParamsFileError(ValueError):
    """Parameter file is unreadable or structurally invalid."""


class ParamsShapeError(ValueError):
    """Parameter file does not match the expected network shape."""


def _select_backend():
    requested = os.environ.get("AANETSIM_NNET_BACKEND", "auto").lower()
    if requested == "auto":
        return _mlp_cy if _mlp_cy is not None else _mlp_np
    if requested == "numpy":
        return _mlp_np
    if requested == "cython":
        if _mlp_cy is None:
            raise ImportError("AANETSIM_NNET_BACKEND=cython but the compiled "
                              "extension is not importable")
        return _mlp_cy
    raise ImportError(f"AANETSIM_NNET_BACKEND={requested!r} (use auto, numpy or cython)")


_kernels = _select_backend()
BACKEND = "cython" if _kernels is _mlp_cy else "numpy"


def available_backends() -> list[str]:
    return ["cython", "numpy"] if _mlp_cy is not None else ["numpy"]


def get_kernels(name: str):
    """Kernel module by backend name; used by tests and the benchmark."""
    if name == "numpy":
        return _mlp_np
    if name == "cython" and _mlp_cy is not None:
        return _mlp_cy
    raise KeyError(name)


@dataclass(frozen=True)
class NetSpec:
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim <= 0 or self.output_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise ValueError("all layer widths must be positive")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)


class NetParams:
    """Per-layer weight matrices and bias vectors; mutated in place by training."""

    def __init__(self, spec: NetSpec, weights: list[np.ndarray], biases: list[np.ndarray]):
        dims = spec.layer_dims
        if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
            raise ValueError("layer count does not match the spec")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} shapes {w.shape}/{b.shape} do not match spec {dims}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i} contains non-finite entries")
        self.spec = spec
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]

    def copy(self) -> "NetParams":
        return NetParams(self.spec, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def init_params(spec: NetSpec, rng_seed) -> NetParams:
    """Variance-scaled uniform weights (half-width 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(rng_seed)
    dims = spec.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetParams(spec, weights, biases)


def forward(params: NetParams, x) -> np.ndarray:
    """Network output for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.spec.input_dim,):
        raise ValueError(f"input shape {x.shape} does not match "
                         f"input_dim={params.spec.input_dim}")
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite entries")
    return _kernels.forward_batch(params.weights, params.biases, x[None, :])[0]


def forward_batch(params: NetParams, x) -> np.ndarray:
    """Network outputs for a (batch, input_dim) array; hot path, no validation."""
    return _kernels.forward_batch(params.weights, params.biases, x)


def train_step(params: NetParams, x, targets, action_indices=None,
               learning_rate: float = 1e-4) -> float:
    """One gradient-descent step on the batch-mean squared error.

    For a multi-output net, `action_indices` selects the output
    coordinate each sample's loss touches; for a single-output net leave
    it None. Mutates `params` and returns the pre-update loss.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a non-empty 2-D array")
    if targets.shape != (x.shape[0],):
        raise ValueError("one target per sample required")
    if not np.isfinite(targets).all():
        raise ValueError("targets contain non-finite entries")
    if action_indices is None:
        if params.spec.output_dim != 1:
            raise ValueError("action_indices required for a multi-output net")
    else:
        action_indices = np.ascontiguousarray(action_indices, dtype=np.int64)
        if action_indices.shape != (x.shape[0],):
            raise ValueError("one action index per sample required")
        if action_indices.min() < 0 or action_indices.max() >= params.spec.output_dim:
            raise ValueError("action index out of range")
    loss = _kernels.sgd_step(params.weights, params.biases, x, action_indices,
                             targets, learning_rate)
    if not np.isfinite(loss):
        raise GradientError(f"non-finite loss {loss!r}; training diverged")
    return loss


def soft_update(target: NetParams, main: NetParams, tau: float) -> None:
    """Blend the target toward the main parameters: target <- tau*main + (1-tau)*target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if target.spec != main.spec:
        raise ValueError("parameter shapes do not match")
    for wt, wm in zip(target.weights, main.weights):
        wt[:] = tau * wm + (1.0 - tau) * wt
    for bt, bm in zip(target.biases, main.biases):
        bt[:] = tau * bm + (1.0 - tau) * bt


def save_params(params: NetParams, path) -> None:
    """Versioned .npz with the embedded spec; round-trips bit-exactly."""
    arrays = {
        "format_version": np.int64(PARAMS_FORMAT_VERSION),
        "input_dim": np.int64(params.spec.input_dim),
        "hidden": np.array(params.spec.hidden, dtype=np.int64),
        "output_dim": np.int64(params.spec.output_dim),
    }
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_params(path, expected_spec: NetSpec | None = None) -> NetParams:
    try:
        with np.load(path) as data:
            loaded = {k: data[k] for k in data.files}
    except Exception as exc:
        raise ParamsFileError(f"cannot read parameter file {path}: {exc}") from exc
    try:
        version = int(loaded["format_version"])
        spec = NetSpec(int(loaded["input_dim"]), tuple(loaded["hidden"].tolist()),
                       int(loaded["output_dim"]))
    except (KeyError, ValueError) as exc:
        raise ParamsFileError(f"parameter file {path} misses required fields: {exc}") from exc
    if version != PARAMS_FORMAT_VERSION:
        raise ParamsFileError(f"unsupported parameter format version {version}")
    if expected_spec is not None and spec != expected_spec:
        raise ParamsShapeError(f"file carries net {spec}, expected {expected_spec}")
    n_layers = len(spec.layer_dims) - 1
    try:
        weights = [loaded[f"w{i}"] for i in range(n_layers)]
        biases = [loaded[f"b{i}"] for i in range(n_layers)]
    except KeyError as exc:
        raise ParamsFileError(f"parameter file {path} misses layer arrays: {exc}") from exc
    try:
        return NetParams(spec, weights, biases)
    except ValueError as exc:
        raise ParamsShapeError(str(exc)) from exc
