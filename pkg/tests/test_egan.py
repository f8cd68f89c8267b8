import numpy as np
import pytest

from eulerts import adcore as ad
from eulerts.egan import (
    Critic,
    GanConfig,
    critic_step,
    gradient_penalty,
    marginal_inputs,
    temporal_inputs,
    train_edgan,
    train_ewgan,
    w1_dual_estimate,
)
from eulerts.eulergen import ou_generator
from eulerts.sdesim import OuParams, TimeGrid, simulate_ou
from eulerts.sources import SimulatorSource

SHORT = TimeGrid(0.0, 0.25, 5)


def _linear_critic(w, time_input=False):
    return Critic(ad.Mlp.affine(np.asarray(w, dtype=float)[:, None], [0.0]), time_input)


@pytest.mark.parametrize("w, want", [([0.6, 0.8], 0.0), ([2.0, 0.0], 1.0), ([0.0, 3.0], 4.0)])
def test_penalty_of_linear_critic_is_closed_form(w, want):
    g = np.random.default_rng(0)
    real, gen = g.normal(size=(50, 2)), g.normal(size=(50, 2))
    assert gradient_penalty(_linear_critic(w), real, gen, seed=1).item() == pytest.approx(want, abs=1e-12)


def test_penalty_ignores_time_column():
    crit = _linear_critic([100.0, 0.6, 0.8], time_input=True)
    g = np.random.default_rng(0)
    real = marginal_inputs(g.normal(size=(20, 2)), 0.5)
    gen = marginal_inputs(g.normal(size=(20, 2)), 0.5)
    assert gradient_penalty(crit, real, gen, seed=0).item() == pytest.approx(0.0, abs=1e-12)


def test_dual_estimate_of_linear_critic_is_mean_gap():
    g = np.random.default_rng(1)
    real, gen = g.normal(1.0, size=(40, 2)), g.normal(size=(40, 2))
    w = np.array([0.3, -0.5])
    got = w1_dual_estimate(_linear_critic(w), real, gen).item()
    assert got == pytest.approx(float((real.mean(0) - gen.mean(0)) @ w), rel=1e-12)
    with pytest.raises(ad.ShapeError):
        w1_dual_estimate(_linear_critic(w), real, gen[:-1])


def test_penalty_gradient_reaches_critic_parameters():
    crit = Critic.temporal(1, 3, seed=0, hidden=[5])
    g = np.random.default_rng(2)
    real, gen = g.normal(size=(16, 3)), g.normal(size=(16, 3))
    tape = ad.Tape()
    with tape:
        pen = gradient_penalty(crit, real, gen, seed=4)
    grads = tape.backward(pen)
    *hidden, out_bias = crit.parameters()
    assert all(np.any(grads[p] != 0) for p in hidden)
    # the output bias does not move the input gradient
    assert np.all(grads[out_bias] == 0)


def test_critic_step_increases_dual_estimate():
    crit = Critic.temporal(1, 3, seed=0, hidden=[8])
    opt = ad.Adam(crit.parameters(), 1e-2)
    g = np.random.default_rng(3)
    real, gen = g.normal(1.0, size=(64, 3)), g.normal(size=(64, 3))
    first = critic_step(crit, opt, real, gen, 0.0, seed=0)
    for i in range(30):
        last = critic_step(crit, opt, real, gen, 0.0, seed=i)
    assert last > first


def test_temporal_and_marginal_inputs():
    v = np.arange(2 * 4 * 3, dtype=float).reshape(2, 4, 3)
    flat = temporal_inputs(v)
    assert flat.shape == (2, 9)
    np.testing.assert_array_equal(flat[0, :3], v[0, 1])
    tensors = [ad.Tensor(v[:, i]) for i in range(4)]
    np.testing.assert_array_equal(temporal_inputs(tensors).value, flat)
    m = marginal_inputs(v[:, 2], 0.25)
    np.testing.assert_array_equal(m[:, 0], 0.25)
    assert isinstance(marginal_inputs(tensors[2], 0.25), ad.Tensor)


def test_config_validation():
    with pytest.raises(ValueError):
        GanConfig(n_critic=0)
    with pytest.raises(ValueError):
        GanConfig(gp_coef=-1.0)
    with pytest.raises(ValueError):
        GanConfig(batch=1)


@pytest.mark.parametrize("train", [train_ewgan, train_edgan])
def test_short_runs_are_bit_reproducible(train):
    src = SimulatorSource(OuParams(), SHORT)
    cfg = GanConfig(iterations=3, batch=32, n_critic=2, seed=1, hidden=(6,))
    a, b = train(src, cfg), train(src, cfg)
    assert a.gen_losses == b.gen_losses and a.critic_losses == b.critic_losses
    for p, q in zip(a.generator.parameters(), b.generator.parameters()):
        np.testing.assert_array_equal(p.value, q.value)
    assert set(a.extra_nets()) == ({"critic"} if train is train_ewgan else {"critic", "marginal_critic"})
    assert a.generator.metadata["iterations"] == 3


def test_generator_can_be_passed_in():
    src = SimulatorSource(OuParams(), SHORT)
    gen = ou_generator(OuParams(theta=3.0), SHORT)
    res = train_ewgan(src, GanConfig(iterations=2, batch=16, n_critic=1), generator=gen)
    assert res.generator is gen
    assert res.generator.metadata["model"] == "affine"
