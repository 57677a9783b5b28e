import numpy as np
import pytest

from app import config
from app.qnet import (
    AdamState,
    NetParams,
    NetSpec,
    QNetError,
    adam_step,
    backward,
    forward,
    forward_trace,
    init_params,
    load_params,
    save_params,
)


def random_net(rng, input_dim=None, trunk=None, history_dim=None, n_actions=4):
    spec = NetSpec(
        input_dim=input_dim or int(rng.integers(1, 6)),
        trunk_dims=trunk if trunk is not None else tuple(int(d) for d in rng.integers(1, 6, size=rng.integers(0, 3))),
        history_dim=history_dim if history_dim is not None else int(rng.integers(0, 4)),
        n_actions=n_actions,
    )
    params = init_params(spec, rng)
    # non-zero biases so every branch of the rectifier is exercised
    biases = tuple(rng.normal(0, 0.5, size=b.shape) for b in params.biases)
    return NetParams(spec=spec, weights=params.weights, biases=biases)


def zeros_like(params):
    return NetParams.from_arrays(params.spec, [np.zeros_like(a) for a in params.arrays()])


def half_sq_td(params, x, action, target):
    q = forward(params, x)
    return 0.5 * (q[action] - target) ** 2


def test_zero_network_outputs_zero():
    spec = NetSpec.for_features(8)
    params = zeros_like(init_params(spec, np.random.default_rng(0)))
    x = np.random.default_rng(1).normal(size=spec.state_dim)
    assert np.array_equal(forward(params, x), np.zeros(4))


def test_duplicated_head_columns_give_equal_q():
    rng = np.random.default_rng(2)
    params = init_params(NetSpec.for_features(4, (8,)), rng)
    w = params.weights[-1].copy()
    b = params.biases[-1].copy()
    w[:, 1] = w[:, 0]
    b[1] = b[0]
    dup = NetParams(spec=params.spec, weights=params.weights[:-1] + (w,), biases=params.biases[:-1] + (b,))
    for _ in range(20):
        q = forward(dup, rng.normal(size=params.spec.state_dim))
        assert q[0] == q[1]


def test_hand_sized_network():
    # 2 inputs -> 2 ReLU units -> 4 outputs, no history
    spec = NetSpec(input_dim=2, trunk_dims=(2,), history_dim=0, n_actions=4)
    w0 = np.array([[1.0, -1.0], [2.0, 0.5]])
    b0 = np.array([0.0, 0.25])
    w1 = np.array([[1.0, 0.0, -1.0, 2.0], [0.0, 1.0, 3.0, -0.5]])
    b1 = np.array([0.5, 0.0, 0.0, 1.0])
    params = NetParams(spec=spec, weights=(w0, w1), biases=(b0, b1))
    # hidden pre-activation: [1*1 + 2*1, -1*1 + 0.5*1 + 0.25] = [3, -0.25] -> relu [3, 0]
    q = forward(params, np.array([1.0, 1.0]))
    assert q == pytest.approx([3.5, 0.0, -3.0, 7.0])


def test_batch_forward_matches_single():
    rng = np.random.default_rng(3)
    params = init_params(NetSpec.for_features(3), rng)
    xs = rng.normal(size=(5, params.spec.state_dim))
    batch = forward(params, xs)
    for i in range(5):
        assert np.allclose(batch[i], forward(params, xs[i]), rtol=0, atol=1e-12)


def test_dimension_mismatch_is_rejected():
    params = init_params(NetSpec.for_features(8), np.random.default_rng(0))
    with pytest.raises(QNetError):
        forward(params, np.zeros(10))


def test_bad_shapes_are_rejected_at_construction():
    spec = NetSpec(input_dim=2, trunk_dims=(3,), history_dim=1)
    with pytest.raises(QNetError):
        NetParams(spec=spec, weights=(np.zeros((2, 3)), np.zeros((3, 4))), biases=(np.zeros(3), np.zeros(4)))
    with pytest.raises(QNetError):
        NetSpec(input_dim=0)


def test_forward_does_not_mutate_params():
    rng = np.random.default_rng(4)
    params = init_params(NetSpec.for_features(4), rng)
    before = [a.copy() for a in params.arrays()]
    forward(params, rng.normal(size=(7, params.spec.state_dim)))
    assert all(np.array_equal(a, b) for a, b in zip(before, params.arrays()))


def test_history_enters_only_the_final_layer():
    rng = np.random.default_rng(5)
    params = init_params(NetSpec.for_features(4, (6, 5)), rng)
    x = rng.normal(size=params.spec.state_dim)
    y = x.copy()
    y[params.spec.input_dim:] += rng.normal(size=params.spec.history_dim)
    tx, ty = forward_trace(params, x), forward_trace(params, y)
    for a, b in zip(tx.pre_activations, ty.pre_activations):
        assert np.array_equal(a, b)
    assert not np.array_equal(tx.q, ty.q)


def test_zero_td_error_gives_zero_gradients():
    rng = np.random.default_rng(6)
    params = random_net(rng, input_dim=4, trunk=(5, 3), history_dim=2)
    grads = backward(params, rng.normal(size=params.spec.state_dim), 2, 0.0)
    assert all(not g.any() for g in grads.arrays())


def test_unused_output_rows_get_no_gradient():
    rng = np.random.default_rng(7)
    params = random_net(rng, input_dim=3, trunk=(4,), history_dim=2)
    grads = backward(params, rng.normal(size=params.spec.state_dim), 1, 0.7)
    head_w, head_b = grads.weights[-1], grads.biases[-1]
    for a in (0, 2, 3):
        assert not head_w[:, a].any()
        assert head_b[a] == 0.0
    assert head_b[1] == pytest.approx(0.7)


def test_gradients_match_central_differences():
    rng = np.random.default_rng(8)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        params = random_net(rng)
        x = rng.normal(size=params.spec.state_dim)
        action = int(rng.integers(params.spec.n_actions))
        target = rng.normal()
        td = forward(params, x)[action] - target
        grads = backward(params, x, action, td).arrays()
        arrays = params.arrays()
        for k, arr in enumerate(arrays):
            for idx in np.ndindex(arr.shape):
                plus = [a.copy() for a in arrays]
                minus = [a.copy() for a in arrays]
                plus[k][idx] += h
                minus[k][idx] -= h
                numeric = (
                    half_sq_td(NetParams.from_arrays(params.spec, plus), x, action, target)
                    - half_sq_td(NetParams.from_arrays(params.spec, minus), x, action, target)
                ) / (2 * h)
                analytic = grads[k][idx]
                scale = max(abs(numeric), abs(analytic), 1e-6)
                worst = max(worst, abs(numeric - analytic) / scale)
    assert worst < 1e-4


def test_batch_gradient_is_mean_of_singles():
    rng = np.random.default_rng(9)
    params = random_net(rng, input_dim=3, trunk=(4,), history_dim=1)
    xs = rng.normal(size=(3, params.spec.state_dim))
    actions = np.array([0, 3, 1])
    tds = np.array([0.5, -1.0, 2.0])
    batch = backward(params, xs, actions, tds).arrays()
    singles = [backward(params, xs[i], actions[i], tds[i]).arrays() for i in range(3)]
    for k in range(len(batch)):
        assert np.allclose(batch[k], sum(s[k] for s in singles) / 3, atol=1e-12)


def test_adam_zero_gradient_keeps_params():
    rng = np.random.default_rng(10)
    params = init_params(NetSpec.for_features(2, (3,)), rng)
    opt = AdamState.for_params(params)
    updated = adam_step(params, zeros_like(params), opt)
    assert opt.step == 1
    assert all(np.array_equal(a, b) for a, b in zip(params.arrays(), updated.arrays()))


def test_adam_first_step_moves_by_learning_rate():
    spec = NetSpec(input_dim=1, trunk_dims=(), history_dim=0, n_actions=1)
    params = NetParams(spec=spec, weights=(np.array([[0.0]]),), biases=(np.array([0.0]),))
    grads = NetParams(spec=spec, weights=(np.array([[1.0]]),), biases=(np.array([0.0]),))
    opt = AdamState.for_params(params, learning_rate=5e-4)
    updated = adam_step(params, grads, opt)
    assert updated.weights[0][0, 0] == pytest.approx(-5e-4, rel=1e-6)


def test_adam_is_deterministic():
    rng = np.random.default_rng(11)
    params = init_params(NetSpec.for_features(2, (3,)), rng)
    grads = NetParams.from_arrays(params.spec, [rng.normal(size=a.shape) for a in params.arrays()])
    a, b = params.copy(), params.copy()
    opt_a, opt_b = AdamState.for_params(a), AdamState.for_params(b)
    for _ in range(3):
        a = adam_step(a, grads, opt_a)
        b = adam_step(b, grads, opt_b)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))


def test_checkpoint_preserves_params_and_metadata(tmp_path):
    params = init_params(NetSpec.for_features(8), np.random.default_rng(12))
    path = save_params(params, tmp_path / "net.bin", metadata={"lambda": 0.6, "seed": 7})
    loaded, meta = load_params(path)
    assert loaded.spec == params.spec
    assert meta == {"lambda": 0.6, "seed": 7}
    assert all(np.array_equal(a, b) for a, b in zip(params.arrays(), loaded.arrays()))
    assert path.read_bytes()[:4] == config.CHECKPOINT_MAGIC


def test_checkpoint_bytes_are_reproducible(tmp_path):
    params = init_params(NetSpec.for_features(4), np.random.default_rng(13))
    a = save_params(params, tmp_path / "a.bin", {"seed": 1}).read_bytes()
    b = save_params(params, tmp_path / "b.bin", {"seed": 1}).read_bytes()
    assert a == b


def test_corrupt_checkpoints_are_rejected(tmp_path):
    params = init_params(NetSpec.for_features(2, (3,)), np.random.default_rng(14))
    data = save_params(params, tmp_path / "ok.bin").read_bytes()
    bad_magic = tmp_path / "magic.bin"
    bad_magic.write_bytes(b"XXXX" + data[4:])
    truncated = tmp_path / "short.bin"
    truncated.write_bytes(data[:-8])
    for path in (bad_magic, truncated):
        with pytest.raises(QNetError):
            load_params(path)
    with pytest.raises(FileNotFoundError):
        load_params(tmp_path / "missing.bin")
