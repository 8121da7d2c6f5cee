import numpy as np
import pytest

from aanetsim import nnet
from aanetsim.nnet import (
    GradientError,
    NetParams,
    NetSpec,
    ParamsFileError,
    ParamsShapeError,
)

BACKENDS = nnet.available_backends()


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return nnet.get_kernels(request.param)


def random_batch(rng, spec, n):
    x = rng.normal(size=(n, spec.input_dim))
    y = rng.normal(size=n)
    if spec.output_dim == 1:
        actions = None
    else:
        actions = rng.integers(0, spec.output_dim, n)
    return x, y, actions


def batch_loss(kernels, params, x, actions, y):
    out = kernels.forward_batch(params.weights, params.biases, x)
    cols = np.zeros(len(y), dtype=np.int64) if actions is None else actions
    err = out[np.arange(len(y)), cols] - y
    return float(np.mean(err * err))


def extract_gradients(kernels, params, x, actions, y):
    """Analytic gradients via an lr=1 step: grad = before - after, exactly."""
    p = params.copy()
    kernels.sgd_step(p.weights, p.biases, x, actions, y, 1.0)
    gw = [w0 - w1 for w0, w1 in zip(params.weights, p.weights)]
    gb = [b0 - b1 for b0, b1 in zip(params.biases, p.biases)]
    return gw, gb


def min_hidden_preactivation(params, x):
    h = np.asarray(x, dtype=np.float64)
    closest = np.inf
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i < len(params.weights) - 1:
            closest = min(closest, float(np.abs(z).min()))
            h = np.maximum(z, 0.0)
        else:
            h = z
    return closest


def finite_difference_check(kernels, spec, seed, h=1e-6, tol=1e-5, floor=1e-3):
    # central differences are a valid derivative oracle only when no ReLU
    # pre-activation sits within the perturbation radius of its kink;
    # draws violating a conservative margin are redrawn. The relative-error
    # denominator floors at `floor`: coordinates whose gradient is below it
    # are held to the absolute bound floor*tol (1e-8), which still exceeds
    # the finite-difference noise but catches any real gradient error.
    rng = np.random.default_rng(seed)
    for _ in range(50):
        params = nnet.init_params(spec, rng.integers(2**32))
        x, y, actions = random_batch(rng, spec, 5)
        if min_hidden_preactivation(params, x) > 100 * h:
            break
    else:
        pytest.fail("could not draw a kink-free configuration")
    gw, gb = extract_gradients(kernels, params, x, actions, y)
    worst = 0.0
    for layer, grads in ((0, gw), (1, gb)):
        for i, g in enumerate(grads):
            arr = params.weights[i] if layer == 0 else params.biases[i]
            flat = arr.ravel()
            gflat = g.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                up = batch_loss(kernels, params, x, actions, y)
                flat[idx] = orig - h
                dn = batch_loss(kernels, params, x, actions, y)
                flat[idx] = orig
                fd = (up - dn) / (2 * h)
                rel = abs(gflat[idx] - fd) / max(abs(fd), abs(gflat[idx]), floor)
                worst = max(worst, rel)
    assert worst < tol, f"max relative gradient error {worst:.2e}"


# --- init ------------------------------------------------------------------------

def test_init_deterministic():
    spec = NetSpec(36, (100, 100), 10)
    a = nnet.init_params(spec, 3)
    b = nnet.init_params(spec, 3)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_init_no_hidden_layer_shapes():
    spec = NetSpec(4, (), 3)
    p = nnet.init_params(spec, 0)
    assert len(p.weights) == 1
    assert p.weights[0].shape == (4, 3)
    assert np.all(p.biases[0] == 0.0)


def test_init_weight_std_matches_theory():
    # uniform on [-a, a] with a = 1/sqrt(fan_in) has std a/sqrt(3)
    spec = NetSpec(100, (120,), 10)
    p = nnet.init_params(spec, 7)
    w = p.weights[0].ravel()
    assert w.size >= 10_000
    expected = 1.0 / np.sqrt(100) / np.sqrt(3)
    assert abs(w.std() - expected) < 0.1 * expected


# --- forward ---------------------------------------------------------------------

def test_forward_zero_net_is_zero():
    spec = NetSpec(3, (4,), 2)
    p = NetParams(spec, [np.zeros((3, 4)), np.zeros((4, 2))],
                  [np.zeros(4), np.zeros(2)])
    assert np.all(nnet.forward(p, [1.0, -2.0, 3.0]) == 0.0)


def test_forward_single_linear_layer_by_hand():
    spec = NetSpec(2, (), 2)
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([0.5, -0.5])
    p = NetParams(spec, [w.copy()], [b.copy()])
    out = nnet.forward(p, [2.0, -1.0])
    assert np.allclose(out, np.array([2.0 - 3.0 + 0.5, 4.0 - 4.0 - 0.5]), atol=1e-15)


def test_relu_clamps_negative_preactivation():
    # one hidden unit wired to push the input negative: contributes nothing
    spec = NetSpec(1, (1,), 1)
    p = NetParams(spec, [np.array([[-1.0]]), np.array([[5.0]])],
                  [np.zeros(1), np.zeros(1)])
    assert nnet.forward(p, [2.0])[0] == 0.0
    assert nnet.forward(p, [-2.0])[0] == 10.0


def test_forward_rejects_bad_input():
    p = nnet.init_params(NetSpec(3, (), 1), 0)
    with pytest.raises(ValueError):
        nnet.forward(p, [1.0, 2.0])
    with pytest.raises(ValueError):
        nnet.forward(p, [1.0, np.nan, 2.0])


# --- train_step ---------------------------------------------------------------------

def test_zero_learning_rate_keeps_params():
    spec = NetSpec(4, (8,), 3)
    p = nnet.init_params(spec, 1)
    before = [w.copy() for w in p.weights]
    rng = np.random.default_rng(0)
    x, y, a = random_batch(rng, spec, 6)
    nnet.train_step(p, x, y, a, learning_rate=0.0)
    for w0, w1 in zip(before, p.weights):
        assert np.array_equal(w0, w1)


def test_single_sample_closed_form_gradient():
    # scalar affine model: dL/dw = 2*(pred - y)*x, dL/db = 2*(pred - y)
    spec = NetSpec(1, (), 1)
    w0, b0, x0, y0, lr = 0.7, -0.2, 1.3, 2.0, 0.01
    p = NetParams(spec, [np.array([[w0]])], [np.array([b0])])
    loss = nnet.train_step(p, [[x0]], [y0], None, learning_rate=lr)
    pred = w0 * x0 + b0
    err = pred - y0
    assert loss == err * err
    assert p.weights[0][0, 0] == w0 - lr * (x0 * (2.0 * err))
    assert p.biases[0][0] == b0 - lr * (2.0 * err)


@pytest.mark.parametrize("spec", [NetSpec(36, (8, 8), 10), NetSpec(36, (8, 8), 1)])
def test_gradients_match_finite_differences(kernels, spec):
    finite_difference_check(kernels, spec, seed=0)


def test_loss_decreases_on_fixed_batch():
    spec = NetSpec(6, (16,), 1)
    p = nnet.init_params(spec, 5)
    rng = np.random.default_rng(5)
    x, y, _ = random_batch(rng, spec, 16)
    losses = [nnet.train_step(p, x, y, None, learning_rate=1e-3) for _ in range(100)]
    assert losses[-1] < losses[0]
    for a, b in zip(losses[10:], losses[11:]):
        assert b <= a + 1e-12


def test_train_step_validates_inputs():
    spec = NetSpec(3, (), 2)
    p = nnet.init_params(spec, 0)
    with pytest.raises(ValueError):
        nnet.train_step(p, np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        nnet.train_step(p, np.zeros((2, 3)), [np.nan, 1.0], [0, 1])
    with pytest.raises(ValueError):
        nnet.train_step(p, np.zeros((2, 3)), [1.0, 1.0], [0, 5])
    with pytest.raises(ValueError):
        nnet.train_step(p, np.zeros((2, 3)), [1.0, 1.0], None)  # multi-output


def test_divergence_raises_gradient_error():
    spec = NetSpec(1, (), 1)
    p = NetParams(spec, [np.array([[1.0]])], [np.array([0.0])])
    with pytest.raises(GradientError):
        for _ in range(400):
            nnet.train_step(p, [[1e4]], [1e300], None, learning_rate=1e6)


def test_training_determinism():
    spec = NetSpec(5, (7,), 2)
    results = []
    for _ in range(2):
        p = nnet.init_params(spec, 9)
        rng = np.random.default_rng(10)
        for _ in range(20):
            x, y, a = random_batch(rng, spec, 4)
            nnet.train_step(p, x, y, a, learning_rate=1e-3)
        results.append(p)
    for w0, w1 in zip(results[0].weights, results[1].weights):
        assert np.array_equal(w0, w1)


# --- soft_update ----------------------------------------------------------------------

def test_soft_update_tau_one_copies_main():
    spec = NetSpec(3, (4,), 2)
    target, main = nnet.init_params(spec, 0), nnet.init_params(spec, 1)
    nnet.soft_update(target, main, 1.0)
    for wt, wm in zip(target.weights, main.weights):
        assert np.array_equal(wt, wm)


def test_soft_update_tau_zero_keeps_target():
    spec = NetSpec(3, (4,), 2)
    target, main = nnet.init_params(spec, 0), nnet.init_params(spec, 1)
    before = [w.copy() for w in target.weights]
    nnet.soft_update(target, main, 0.0)
    for w0, w1 in zip(before, target.weights):
        assert np.array_equal(w0, w1)


def test_soft_update_scalar_example():
    spec = NetSpec(1, (), 1)
    target = NetParams(spec, [np.array([[1.0]])], [np.array([1.0])])
    main = NetParams(spec, [np.array([[2.0]])], [np.array([2.0])])
    nnet.soft_update(target, main, 0.001)
    assert abs(target.weights[0][0, 0] - 1.001) < 1e-12


def test_soft_update_contracts_toward_main(rng):
    spec = NetSpec(4, (6,), 2)
    target, main = nnet.init_params(spec, 2), nnet.init_params(spec, 3)
    dist = lambda: sum(float(np.abs(wt - wm).sum())
                       for wt, wm in zip(target.weights, main.weights))
    before = dist()
    nnet.soft_update(target, main, 0.05)
    assert dist() < before


# --- persistence -----------------------------------------------------------------------

def test_save_load_round_trip_bit_exact(tmp_path):
    spec = NetSpec(36, (50, 50), 1)
    p = nnet.init_params(spec, 13)
    path = tmp_path / "net.npz"
    nnet.save_params(p, path)
    q = nnet.load_params(path)
    assert q.spec == spec
    for w0, w1 in zip(p.weights, q.weights):
        assert np.array_equal(w0, w1)
    for b0, b1 in zip(p.biases, q.biases):
        assert np.array_equal(b0, b1)


def test_corrupted_file_raises(tmp_path):
    path = tmp_path / "net.npz"
    path.write_bytes(b"definitely not a zip archive")
    with pytest.raises(ParamsFileError):
        nnet.load_params(path)


def test_cross_spec_load_raises(tmp_path):
    p = nnet.init_params(NetSpec(36, (50, 50), 1), 0)
    path = tmp_path / "net.npz"
    nnet.save_params(p, path)
    with pytest.raises(ParamsShapeError):
        nnet.load_params(path, expected_spec=NetSpec(36, (100, 100), 10))


# --- backend agreement -------------------------------------------------------------------

@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
def test_backends_agree():
    spec = NetSpec(12, (20, 20), 4)
    rng = np.random.default_rng(17)
    base = nnet.init_params(spec, 17)
    x, y, actions = random_batch(rng, spec, 8)
    outs, losses, stepped = [], [], []
    for name in BACKENDS:
        k = nnet.get_kernels(name)
        p = base.copy()
        outs.append(k.forward_batch(p.weights, p.biases, x))
        losses.append(k.sgd_step(p.weights, p.biases, x, actions, y, 1e-2))
        stepped.append(p)
    assert np.allclose(outs[0], outs[1], rtol=1e-12, atol=1e-12)
    assert abs(losses[0] - losses[1]) < 1e-10 * max(1.0, abs(losses[0]))
    for w0, w1 in zip(stepped[0].weights, stepped[1].weights):
        assert np.allclose(w0, w1, rtol=1e-10, atol=1e-12)
