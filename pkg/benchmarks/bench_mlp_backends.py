"""Compare the compiled and numpy kernel backends on the training hot loop.

Times the two operations the training loop hammers: batched forward
passes (decisions, bootstrap targets) and full SGD steps (forward +
backward + in-place update), on the two production network shapes.

Run:  python benchmarks/bench_mlp_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from aanetsim import nnet

SHAPES = {
    "dqn 36->[100,100]->10": nnet.NetSpec(36, (100, 100), 10),
    "dvn 36->[50,50]->1": nnet.NetSpec(36, (50, 50), 1),
}
BATCHES = (1, 32, 320)


def time_op(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats * 1e6  # us/call


def bench(repeats):
    rng = np.random.default_rng(0)
    rows = []
    for shape_name, spec in SHAPES.items():
        for batch in BATCHES:
            x = rng.normal(size=(batch, spec.input_dim))
            y = rng.normal(size=batch)
            actions = (None if spec.output_dim == 1
                       else rng.integers(0, spec.output_dim, batch))
            timings = {}
            for backend in nnet.available_backends():
                k = nnet.get_kernels(backend)
                params = nnet.init_params(spec, 1)
                timings[backend, "forward"] = time_op(
                    lambda: k.forward_batch(params.weights, params.biases, x), repeats)
                timings[backend, "sgd_step"] = time_op(
                    lambda: k.sgd_step(params.weights, params.biases, x, actions,
                                       y, 1e-4), repeats)
            rows.append((shape_name, batch, timings))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    backends = nnet.available_backends()
    print(f"available backends: {', '.join(backends)} (active: {nnet.BACKEND})")
    header = f"{'net':24s} {'batch':>5s} {'op':9s}" + "".join(
        f" {b + ' us':>12s}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for shape_name, batch, timings in bench(args.repeats):
        for op in ("forward", "sgd_step"):
            vals = [timings[b, op] for b in backends]
            line = f"{shape_name:24s} {batch:5d} {op:9s}" + "".join(
                f" {v:12.1f}" for v in vals)
            if len(vals) == 2:
                line += f" {vals[1] / vals[0]:7.2f}x"
            print(line)


if __name__ == "__main__":
    main()
