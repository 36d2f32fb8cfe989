import math

import numpy as np
import pytest

from labelemb import neural


def scalar_gru(xs, W, U, b):
    """Loop-over-units GRU, written from the gate equations independently."""
    d_in, h = W.shape[0], U.shape[0]
    state = [0.0] * h
    outs = []
    sig = lambda a: 1.0 / (1.0 + math.exp(-a))
    for x in xs:
        pre = [sum(x[i] * W[i, j] for i in range(d_in)) + b[j] for j in range(3 * h)]
        z = [sig(pre[j] + sum(state[i] * U[i, j] for i in range(h))) for j in range(h)]
        r = [sig(pre[h + j] + sum(state[i] * U[i, h + j] for i in range(h))) for j in range(h)]
        c = [math.tanh(pre[2 * h + j] + sum(r[i] * state[i] * U[i, 2 * h + j] for i in range(h)))
             for j in range(h)]
        state = [z[j] * state[j] + (1 - z[j]) * c[j] for j in range(h)]
        outs.append(list(state))
    return np.array(outs)


def random_bigru(rng, d_in, h):
    params = {}
    params.update(neural.init_gru(rng, d_in, h, "gru.fwd"))
    params.update(neural.init_gru(rng, d_in, h, "gru.bwd"))
    for name in params:
        if name.endswith(".b"):
            params[name] = rng.normal(0, 0.3, size=params[name].shape)
    return params


def test_gru_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    params = random_bigru(rng, 3, 2)
    x = rng.normal(size=(3, 3))
    out, _ = neural.bigru_forward(x, params)
    fwd = scalar_gru(x, params["gru.fwd.W"], params["gru.fwd.U"], params["gru.fwd.b"])
    bwd = scalar_gru(x[::-1], params["gru.bwd.W"], params["gru.bwd.U"], params["gru.bwd.b"])[::-1]
    np.testing.assert_allclose(out, np.hstack([fwd, bwd]), atol=1e-12)


def test_single_step_has_no_recurrence():
    rng = np.random.default_rng(1)
    params = random_bigru(rng, 4, 3)
    x = rng.normal(size=(1, 4))
    out, _ = neural.bigru_forward(x, params)
    for half, prefix in ((out[0, :3], "gru.fwd"), (out[0, 3:], "gru.bwd")):
        pre = x[0] @ params[f"{prefix}.W"] + params[f"{prefix}.b"]
        z = 1 / (1 + np.exp(-pre[:3]))
        np.testing.assert_allclose(half, (1 - z) * np.tanh(pre[6:]), atol=1e-14)


def test_zero_weights_give_zero_output():
    params = {k: np.zeros_like(v) for k, v in random_bigru(np.random.default_rng(2), 3, 2).items()}
    out, _ = neural.bigru_forward(np.random.default_rng(3).normal(size=(5, 3)), params)
    assert not out.any()


def test_reversal_symmetry():
    rng = np.random.default_rng(4)
    params = random_bigru(rng, 3, 4)
    for part in "WUb":
        params[f"gru.bwd.{part}"] = params[f"gru.fwd.{part}"]
    x = rng.normal(size=(6, 3))
    out, _ = neural.bigru_forward(x, params)
    rev, _ = neural.bigru_forward(x[::-1].copy(), params)
    np.testing.assert_allclose(out[:, 4:], rev[::-1, :4], atol=1e-13)


def test_padding_does_not_change_real_positions():
    rng = np.random.default_rng(5)
    params = random_bigru(rng, 3, 2)
    x = rng.normal(size=(4, 3))
    alone, _ = neural.bigru_forward(x, params)
    batch = np.concatenate([x, rng.normal(size=(3, 3))])[None]
    padded, _ = neural.bigru_forward(batch, params, lengths=np.array([4]))
    np.testing.assert_allclose(padded[0, :4], alone, atol=1e-13)


def test_identity_dense_layer():
    x = np.array([1.5, -2.0, 0.25])
    out, _ = neural.dense_forward(x, np.eye(3), np.zeros(3))
    np.testing.assert_array_equal(out, x)


def test_relu_clips_negative():
    out, _ = neural.dense_forward(np.array([1.0]), np.array([[-2.0]]), np.array([0.5]), "relu")
    assert out[0] == 0.0


def test_dense_hand_example():
    # [1, 2] @ [[1, 2], [3, 4]] + [0.5, -1] = [7.5, 9]
    out, _ = neural.dense_forward(np.array([1.0, 2.0]), np.array([[1.0, 2.0], [3.0, 4.0]]),
                                  np.array([0.5, -1.0]))
    np.testing.assert_array_equal(out, [7.5, 9.0])


def test_quadratic_loss_closed_form():
    rng = np.random.default_rng(6)
    x, W, b, target = rng.normal(size=(5, 3)), rng.normal(size=(3, 2)), rng.normal(size=2), rng.normal(size=(5, 2))
    y, tape = neural.dense_forward(x, W, b)
    delta = y - target  # d/dy of 0.5 * ||y - target||^2
    _, dW, db = neural.dense_backward(delta, tape, W)
    np.testing.assert_allclose(dW, x.T @ delta, atol=1e-12)
    np.testing.assert_allclose(db, delta.sum(axis=0), atol=1e-12)


def test_constant_loss_gives_zero_gradients():
    rng = np.random.default_rng(7)
    params = random_bigru(rng, 3, 2)
    x = rng.normal(size=(1, 4, 3))
    _, tape = neural.bigru_forward(x, params)
    d_x, grads = neural.bigru_backward(np.zeros((1, 4, 4)), tape, params)
    assert not d_x.any() and not any(g.any() for g in grads.values())


@pytest.mark.parametrize("activation", ["none", "relu", "tanh"])
def test_dense_gradient_check(activation):
    rng = np.random.default_rng(8)
    params = {"x": rng.normal(size=(2, 3, 4)), "W": rng.normal(size=(4, 3)), "b": rng.normal(size=3)}
    G = rng.normal(size=(2, 3, 3))

    def loss():
        return float(np.sum(G * neural.dense_forward(params["x"], params["W"], params["b"], activation)[0]))

    _, tape = neural.dense_forward(params["x"], params["W"], params["b"], activation)
    dx, dW, db = neural.dense_backward(G, tape, params["W"])
    report = neural.grad_check(loss, params, {"x": dx, "W": dW, "b": db})
    assert report.passed, report.lines()


@pytest.mark.parametrize("with_masks", [False, True])
def test_bigru_gradient_check(with_masks):
    rng = np.random.default_rng(9)
    params = random_bigru(rng, 3, 3)
    params["x"] = rng.normal(size=(2, 5, 3))
    lengths = np.array([5, 3])
    masks = neural.recurrent_masks(rng, 2, 3, 0.4) if with_masks else (None, None)
    G = rng.normal(size=(2, 5, 6))
    G[1, 3:] = 0.0

    def loss():
        out, _ = neural.bigru_forward(params["x"], params, lengths=lengths, masks=masks)
        return float(np.sum(G * out))

    out, tape = neural.bigru_forward(params["x"], params, lengths=lengths, masks=masks)
    d_x, grads = neural.bigru_backward(G, tape, params)
    grads["x"] = d_x
    report = neural.grad_check(loss, params, grads)
    assert report.passed, report.lines()


def test_masks_fixed_per_utterance_and_inverted():
    rng = np.random.default_rng(10)
    fwd, bwd = neural.recurrent_masks(rng, 200, 50, 0.5)
    assert set(np.unique(fwd)) <= {0.0, 2.0}
    assert abs(fwd.mean() - 1.0) < 0.05
    assert neural.recurrent_masks(rng, 2, 3, 0.0) == (None, None)


def test_forward_is_deterministic():
    params = random_bigru(np.random.default_rng(11), 3, 2)
    x = np.random.default_rng(12).normal(size=(4, 3))
    a, _ = neural.bigru_forward(x, params)
    b, _ = neural.bigru_forward(x, params)
    assert np.array_equal(a, b)


def test_grad_check_flags_wrong_gradient():
    params = {"w": np.array([1.0, -2.0])}
    report = neural.grad_check(lambda: float(np.sum(params["w"] ** 2)), params,
                               {"w": np.array([2.0, -4.0]) * 1.01})
    assert report.failed == ["w"]


def test_relative_error_floor():
    assert neural.relative_error(np.array(3e-8), np.array(3.1e-8))[()] < 1e-3
    assert neural.relative_error(np.array(1.0), np.array(1.0002))[()] > 1e-5


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    tensors = {"a": rng.normal(size=(3, 4)), "b.c": rng.normal(size=5)}
    neural.save_tensors(tmp_path / "m.npz", tensors, {"mode": "le-window"})
    back, meta = neural.load_tensors(tmp_path / "m.npz")
    assert meta == {"mode": "le-window"}
    for k, v in tensors.items():
        assert np.array_equal(back[k], v)


def test_checkpoint_version_mismatch(tmp_path):
    path = tmp_path / "m.npz"
    np.savez(path, __version__=np.array([99]))
    with pytest.raises(ValueError, match="version"):
        neural.load_tensors(path)
