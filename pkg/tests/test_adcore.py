import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from eulerts import adcore as ad
from gradcheck import OP_KINDS, check_op


@pytest.mark.parametrize("kind", OP_KINDS)
def test_gradients_match_finite_differences(kind):
    for seed in range(5):
        assert check_op(kind, seed) < 1e-4


def test_every_registered_op_is_gradchecked():
    covered = {k.split("_")[0] if k.startswith(("matmul", "slice")) else k for k in OP_KINDS}
    assert set(ad.OPS) <= covered


def test_no_recording_outside_tape():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    tape = ad.Tape()
    y = ad.tanh(x)
    assert len(tape) == 0 and not y.requires_grad
    with tape:
        ad.tanh(x)
    assert len(tape) == 1


def test_constant_inputs_are_not_recorded():
    tape = ad.Tape()
    with tape:
        ad.add(ad.Tensor(np.ones(2)), 1.0)
    assert len(tape) == 0


def test_backward_twice_raises():
    x = ad.Tensor(np.ones(2), requires_grad=True)
    tape = ad.Tape()
    with tape:
        y = ad.sum_(ad.square(x))
    tape.backward(y)
    with pytest.raises(ad.TapeError):
        tape.backward(y)
    tape.reset()
    with tape:
        y = ad.sum_(ad.square(x))
    np.testing.assert_allclose(tape.backward(y)[x], 2 * np.ones(2))


def test_non_scalar_root_rejected():
    x = ad.Tensor(np.ones(2), requires_grad=True)
    tape = ad.Tape()
    with tape:
        y = ad.square(x)
    with pytest.raises(ad.TapeError):
        tape.backward(y)


def test_unrelated_tensor_gets_zero_gradient():
    x = ad.Tensor(np.ones(2), requires_grad=True)
    z = ad.Tensor(np.ones((3, 1)), requires_grad=True)
    tape = ad.Tape()
    with tape:
        y = ad.sum_(x)
    grads = tape.backward(y)
    np.testing.assert_array_equal(grads[z], np.zeros((3, 1)))
    assert z not in grads


def test_gradient_accumulates_over_reuse():
    x = ad.Tensor(np.array([2.0]), requires_grad=True)
    tape = ad.Tape()
    with tape:
        y = ad.sum_(ad.add(ad.mul(x, x), x))
    np.testing.assert_allclose(tape.backward(y)[x], [5.0])


@pytest.mark.parametrize("fn, args", [
    (ad.matmul, (np.ones((2, 3)), np.ones((2, 3)))),
    (ad.add, (np.ones((2, 3)), np.ones((4,)))),
    (ad.trace, (np.ones((2, 3)),)),
    (ad.transpose, (np.ones(3),)),
    (ad.reshape, (np.ones(6), (4, 2))),
    (lambda a, b: ad.concat([a, b], axis=1), (np.ones((2, 2)), np.ones((3, 2)))),
    (lambda a, b: ad.stack([a, b]), (np.ones(2), np.ones(3))),
    (lambda a: ad.slice_(a, 5), (np.ones(3),)),
])
def test_shape_errors(fn, args):
    with pytest.raises(ad.ShapeError):
        fn(*[ad.Tensor(a) if isinstance(a, np.ndarray) else a for a in args])


def test_sqrt_gradient_at_zero_is_finite():
    x = ad.Tensor(np.zeros(2), requires_grad=True)
    tape = ad.Tape()
    with tape:
        y = ad.sum_(ad.sqrt(x))
    assert np.all(np.isfinite(tape.backward(y)[x]))


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=4),
                  elements=st.floats(-3, 3)))
def test_broadcast_gradient_shape_matches_input(arr):
    b = ad.Tensor(arr[..., :1].copy(), requires_grad=True)
    a = ad.Tensor(arr, requires_grad=True)
    tape = ad.Tape()
    with tape:
        y = ad.sum_(ad.mul(a, b))
    grads = tape.backward(y)
    assert grads[b].shape == b.shape
    np.testing.assert_allclose(grads[b][..., 0], arr.sum(axis=-1), atol=1e-12)


def test_mlp_apply_matches_taped_forward():
    g = np.random.default_rng(3)
    for act in ad.ACTIVATIONS:
        net = ad.Mlp.init(3, 2, [5, 4], g, act)
        x = g.normal(size=(7, 3))
        np.testing.assert_array_equal(ad.mlp_apply(net, x), net(x).value)


def test_mlp_rejects_wrong_width():
    net = ad.Mlp.init(3, 1, [4], np.random.default_rng(0))
    with pytest.raises(ad.ShapeError):
        net(np.ones((2, 4)))
    with pytest.raises(ad.ShapeError):
        ad.mlp_input_grad(ad.Mlp.init(3, 2, [4], np.random.default_rng(0)), np.ones((2, 3)))


def test_mlp_input_grad_of_affine_net_is_weight():
    w = np.array([[1.5], [-2.0]])
    net = ad.Mlp.affine(w, [0.3])
    out, grad = ad.mlp_input_grad(net, np.ones((4, 2)))
    np.testing.assert_allclose(grad.value, np.tile(w[:, 0], (4, 1)))
    np.testing.assert_allclose(out.value, np.full((4, 1), -0.2))


def test_adam_first_steps_match_hand_computation():
    # bias-corrected Adam: the first step moves every coordinate by lr * sign(g)
    p = ad.Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    opt = ad.Adam([p], lr=0.1)
    g1 = np.array([0.3, -4.0, 1e-3])
    opt.step([g1])
    np.testing.assert_allclose(p.value, [0.9, -1.9, 0.4], atol=1e-5)
    g2 = np.array([-0.3, -4.0, 2e-3])
    opt.step([g2])
    m = 0.9 * 0.1 * g1 + 0.1 * g2
    v = 0.999 * 0.001 * g1 ** 2 + 0.001 * g2 ** 2
    step = 0.1 * (m / (1 - 0.9 ** 2)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    np.testing.assert_allclose(p.value, np.array([0.9, -1.9, 0.4]) - step, atol=1e-5)


def test_adam_minimizes_quadratic():
    p = ad.Tensor(np.array([3.0, -1.0]), requires_grad=True)
    opt = ad.Adam([p], lr=0.05)
    for _ in range(2000):
        tape = ad.Tape()
        with tape:
            loss = ad.sum_(ad.square(ad.sub(p, [1.0, 2.0])))
        opt.zero_grad()
        tape.backward(loss)
        opt.step()
    np.testing.assert_allclose(p.value, [1.0, 2.0], atol=1e-3)


def test_adam_rejects_non_finite_gradient():
    p = ad.Tensor(np.zeros(2), requires_grad=True)
    opt = ad.Adam([p])
    opt.step([np.ones(2)])
    with pytest.raises(ad.NonFiniteGradientError, match="optimizer iteration 2"):
        opt.step([np.array([np.nan, 0.0])])
    np.testing.assert_array_equal(opt.state.step, 1)


def test_param_container_round_trip_and_corruption():
    g = np.random.default_rng(1)
    named = [("a.w", g.normal(size=(3, 2))), ("b", g.normal(size=(4,)))]
    buf = ad.pack_params(named)
    back, end = ad.unpack_params(buf)
    assert end == len(buf)
    for (n1, v1), (n2, v2) in zip(named, back):
        assert n1 == n2
        np.testing.assert_array_equal(v1, v2)
    with pytest.raises(ad.ContainerError):
        ad.unpack_params(buf[:-3])
    with pytest.raises(ad.ContainerError):
        ad.unpack_params(b"garbage" + buf)
