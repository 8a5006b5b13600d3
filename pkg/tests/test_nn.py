import numpy as np
import pytest

from pandalite.nn import (MLP, Adam, NonFiniteError, ShapeError, adam_step, load_arrays,
                          polyak_update, read_manifest, save_arrays)

# input sizes of every network the agents build: actor [obs, goal] and
# critic [obs, goal, action] for each task, SAC actor heads output 2 * action
AGENT_SHAPES = sorted({
    (obs + goal + extra, out, act)
    for obs, goal, action in [(6, 3, 3), (18, 3, 3), (19, 3, 4), (31, 6, 4)]
    for extra, out, act in [(0, action, "tanh"), (0, 2 * action, "linear"), (action, 1, "linear")]
})


def _half_square(net, x):
    y = net.forward(x)
    # activation pattern, used to skip perturbations that straddle a ReLU kink
    mask = tuple((a > 0).tobytes() for a in net._cache[0][1:])
    return 0.5 * np.sum(y ** 2), mask


def finite_difference_check(net, x, n_coords, rng, h=1e-6):
    """Worst relative error between backward() and central differences
    of 0.5 * sum(y^2), over sampled parameters and inputs."""
    y = net.forward(x)
    grads, grad_x = net.backward(y)
    flat_grad = np.concatenate([g.ravel() for g in grads])
    worst, checked = 0.0, 0

    def compare(fd_pair, analytic):
        nonlocal worst, checked
        (fp, mp), (fm, mm) = fd_pair
        if mp != mm:
            return
        fd = (fp - fm) / (2 * h)
        worst = max(worst, abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-6))
        checked += 1

    for c in rng.choice(net.flat.size, size=n_coords, replace=False):
        old = net.flat[c]
        net.flat[c] = old + h
        plus = _half_square(net, x)
        net.flat[c] = old - h
        minus = _half_square(net, x)
        net.flat[c] = old
        compare((plus, minus), flat_grad[c])
    for i in rng.choice(x.size, size=min(10, x.size), replace=False):
        idx = np.unravel_index(i, x.shape)
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        compare((_half_square(net, xp), _half_square(net, xm)), grad_x[idx])
    assert checked >= 0.9 * (n_coords + min(10, x.size))
    return worst


def test_identity_linear_layer():
    net = MLP([3, 3])
    net.params[0][...] = np.eye(3)
    net.params[1][...] = 0
    x = np.array([0.3, -1.2, 5.0])
    np.testing.assert_array_equal(net.forward(x), x)


def test_zero_weight_head_outputs_bias():
    net = MLP([4, 2])
    net.params[0][...] = 0
    net.params[1][...] = [1.5, -2.0]
    np.testing.assert_array_equal(net.forward(np.ones(4)), [1.5, -2.0])


def test_forward_deterministic_with_seed():
    x = np.linspace(-1, 1, 21)
    a = MLP([21, 256, 256, 256, 4], "tanh", np.random.default_rng(7)).forward(x)
    b = MLP([21, 256, 256, 256, 4], "tanh", np.random.default_rng(7)).forward(x)
    assert a.tobytes() == b.tobytes()


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        MLP([3, 4]).forward(np.zeros(5))


def test_linear_layer_gradient_closed_form():
    rng = np.random.default_rng(0)
    net = MLP([4, 3], rng=rng)
    x = rng.normal(size=4)
    net.forward(x)
    up = rng.normal(size=3)
    grads, gx = net.backward(up)
    np.testing.assert_allclose(grads[0], np.outer(x, up), rtol=1e-14)
    np.testing.assert_allclose(grads[1], up, rtol=1e-14)
    np.testing.assert_allclose(gx, net.params[0] @ up, rtol=1e-14)


def test_identity_half_square_gradient():
    net = MLP([3, 3])
    net.params[0][...] = np.eye(3)
    net.params[1][...] = 0
    x = np.array([0.5, -0.25, 2.0])
    y = net.forward(x)
    _, gx = net.backward(y)
    np.testing.assert_array_equal(gx, x)


def test_gradient_check_reach_critic():
    rng = np.random.default_rng(1)
    net = MLP([6, 256, 256, 256, 1], rng=rng)
    x = rng.normal(size=(5, 6))
    assert finite_difference_check(net, x, 100, rng) < 1e-4


@pytest.mark.parametrize("n_in,n_out,act", AGENT_SHAPES)
def test_gradient_check_agent_shapes(n_in, n_out, act):
    rng = np.random.default_rng(n_in * 100 + n_out)
    net = MLP([n_in, 256, 256, 256, n_out], act, rng=rng)
    x = rng.normal(size=(4, n_in))
    assert finite_difference_check(net, x, 100, rng) < 1e-4


def test_adam_first_step_closed_form():
    net = MLP([3, 2])
    before = net.flat.copy()
    opt = Adam(net.params, lr=0.001)
    adam_step(net, opt, [np.ones_like(p) for p in net.params])
    # m_hat = v_hat = 1 after bias correction
    np.testing.assert_allclose(net.flat - before, -0.001 / (1.0 + 1e-8), rtol=0, atol=1e-12)


def test_adam_zero_gradient():
    net = MLP([3, 2])
    before = net.flat.copy()
    opt = Adam(net.params)
    opt.step([np.zeros_like(p) for p in net.params])
    np.testing.assert_array_equal(net.flat, before)
    assert opt.t == 1


def _scalar_adam(theta, grads, lr=0.001, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
    return theta


def test_adam_two_steps_match_scalar_recursion():
    net = MLP([2, 1])
    start = net.flat.copy()
    opt = Adam(net.params)
    for _ in range(2):
        opt.step([np.full(p.shape, 0.3) for p in net.params])
    expected = [_scalar_adam(s, [0.3, 0.3]) for s in start]
    np.testing.assert_allclose(net.flat, expected, rtol=0, atol=1e-15)


def test_adam_list_path_matches_flat_path():
    rng = np.random.default_rng(2)
    params_a = [rng.normal(size=(3, 2)), rng.normal(size=2)]
    params_b = [p.copy() for p in params_a]
    net = MLP([3, 2])
    for p, q in zip(net.params, params_a):
        p[...] = q
    opt_list, opt_flat = Adam(params_b), Adam(net.params)
    assert opt_flat._flat is not None and opt_list._flat is None
    for _ in range(3):
        g = [rng.normal(size=p.shape) for p in params_a]
        opt_list.step(g)
        opt_flat.step(g)
    for a, b in zip(net.params, params_b):
        np.testing.assert_allclose(a, b, rtol=1e-13)


def test_adam_rejects_non_finite():
    net = MLP([3, 2])
    before = net.flat.copy()
    opt = Adam(net.params)
    g = [np.zeros_like(p) for p in net.params]
    g[0][0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        opt.step(g)
    np.testing.assert_array_equal(net.flat, before)


def test_polyak_examples():
    target, online = MLP([2, 2]), MLP([2, 2])
    target.flat[:] = 1.0
    online.flat[:] = 0.0
    polyak_update(target, online, 0.95)
    np.testing.assert_allclose(target.flat, 0.95, rtol=0, atol=1e-12)
    same = online.copy()
    polyak_update(same, online, 0.95)
    np.testing.assert_array_equal(same.flat, online.flat)


def test_polyak_geometric_convergence():
    rng = np.random.default_rng(3)
    target, online = MLP([3, 4], rng=rng), MLP([3, 4], rng=rng)
    residual = target.flat - online.flat
    for n in range(1, 6):
        polyak_update(target, online, 0.95)
        np.testing.assert_allclose(target.flat - online.flat, residual * 0.95 ** n, atol=1e-14)


def test_polyak_shape_mismatch():
    with pytest.raises(ShapeError):
        polyak_update(MLP([2, 3]), MLP([3, 3]))


def test_checkpoint_roundtrip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1.5]), "c": np.float64(2.0)}
    save_arrays(tmp_path / "x.plnn", arrays, {"tag": "t"})
    loaded, meta = load_arrays(tmp_path / "x.plnn")
    assert meta == {"tag": "t"}
    for k in arrays:
        np.testing.assert_array_equal(loaded[k], arrays[k])
    manifest = read_manifest(tmp_path / "x.plnn")
    assert manifest["version"] == 1
    assert [e["name"] for e in manifest["arrays"]] == ["a", "b", "c"]
    raw = (tmp_path / "x.plnn").read_bytes()
    assert raw[:4] == b"PLNN"
    # payload is little-endian float64 at the tail
    np.testing.assert_array_equal(np.frombuffer(raw[-8 * 8:], dtype="<f8"),
                                  [0, 1, 2, 3, 4, 5, 1.5, 2.0])


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_arrays(tmp_path / "bad")
