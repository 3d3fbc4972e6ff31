import json

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from ccmole.cc.ccsd import AmplitudeSet, mp2_amplitudes
from ccmole.checks import pair_symmetry_check, rotation_check, sign_check
from ccmole.fixtures import training_sample
from ccmole.model.config import DESK, TINY, TrainConfig
from ccmole.model.mole import MoleModel
from ccmole.model.system import BasisLayout
from ccmole.training import (
    OptimizerState,
    TrainingSample,
    epoch_order,
    finite_difference_gradient,
    gradient,
    gradient_relative_error,
    load_checkpoint,
    loss,
    loss_and_gradient,
    mean_absolute_error,
    optimizer_step,
    random_parameters,
    save_checkpoint,
    train,
)

TINY_LAYOUT = BasisLayout(TINY.basis)


@pytest.fixture(scope="module")
def tiny_sample():
    return training_sample(11, n_mo=5, n_occ=2, coupling=0.2, elements=["O", "H", "H"], layout=TINY_LAYOUT)


def amps(rng, o=2, v=3):
    return AmplitudeSet(rng.normal(size=(o, v)), rng.normal(size=(o, o, v, v)))


# -- loss ----------------------------------------------------------------------------


def test_loss_examples(rng):
    t = amps(rng)
    assert loss(t, t) == 0.0
    zero = AmplitudeSet.zeros(2, 3)
    one = AmplitudeSet.zeros(2, 3)
    one.t2[1, 0, 2, 1] = 0.3
    assert loss(one, zero) == pytest.approx(0.09, abs=1e-17)
    u = amps(rng)
    assert loss(t, u) == loss(u, t) > 0
    assert mean_absolute_error(one, zero) == pytest.approx(0.3 / (6 + 36))
    with pytest.raises(ValueError):
        loss(t, AmplitudeSet.zeros(2, 4))


def test_sample_shapes_are_checked(tiny_sample):
    with pytest.raises(ValueError):
        TrainingSample(tiny_sample.system, tiny_sample.integrals, AmplitudeSet.zeros(1, 4))


# -- gradients -------------------------------------------------------------------------


def test_zero_model_with_mp2_target_has_zero_gradient(tiny_sample):
    model = MoleModel(TINY).zero_()
    target = mp2_amplitudes(tiny_sample.integrals)
    sample = TrainingSample(tiny_sample.system, tiny_sample.integrals, target)
    value, g = loss_and_gradient(model, sample)
    assert value == 0.0
    assert not np.any(g)


def test_parameter_without_path_has_zero_gradient():
    # hydrogen-only system: the d-shell embedding weights never see input
    sample = training_sample(3, n_mo=4, n_occ=1, coupling=0.2, elements=["H", "H", "H"])
    model = MoleModel(DESK, seed=0)
    g = gradient(model, sample)
    entry = next(e for e in model.index_map() if e["name"] == "embed.weights.2e")
    block = g[entry["offset"] : entry["offset"] + int(np.prod(entry["shape"]))]
    assert not np.any(block)
    assert np.any(g)


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_matches_central_differences(tiny_sample, seed):
    model = MoleModel(TINY, seed=seed)
    model.set_flat(random_parameters(model, seed))
    g = gradient(model, tiny_sample)
    n = finite_difference_gradient(model, tiny_sample, h=1e-4)
    assert gradient_relative_error(g, n) <= 1e-5


def test_relative_error_definition():
    assert gradient_relative_error(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0
    assert gradient_relative_error(np.array([1.1]), np.array([1.0])) == pytest.approx(0.1 / 1.1)
    # components far below the gradient scale are judged against the floor
    assert gradient_relative_error(np.array([1.0, 1e-12]), np.array([1.0, 0.0])) < 1e-8


def test_nonfinite_loss_is_reported(tiny_sample):
    model = MoleModel(TINY, seed=0)
    x = model.get_flat()
    x[:] = 1e200
    model.set_flat(x)
    with pytest.raises(ArithmeticError):
        gradient(model, tiny_sample)


# -- optimizer -------------------------------------------------------------------------


def make_state(n, lr=1e-2, decay_step=24, gamma=0.5):
    return OptimizerState.from_config(TrainConfig(lr=lr, decay_step=decay_step, gamma=gamma), n)


def test_adam_matches_torch():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=7)
    target = rng.normal(size=7)
    p = torch.tensor(x0, requires_grad=True)
    opt = torch.optim.Adam([p], lr=1e-2, betas=(0.9, 0.999), eps=1e-8)
    state, x = make_state(7), x0.copy()
    for _ in range(25):
        opt.zero_grad()
        ((p - torch.tensor(target)) ** 4).sum().backward()
        opt.step()
        x = optimizer_step(state, x, 4 * (x - target) ** 3, 1e-2)
    np.testing.assert_allclose(x, p.detach().numpy(), rtol=0, atol=1e-14)


def test_zero_gradient_leaves_params():
    state, x = make_state(3), np.arange(3.0)
    y = optimizer_step(state, x, np.zeros(3), 1e-2)
    np.testing.assert_array_equal(x, y)
    assert state.step == 1


def test_quadratic_decreases():
    state, x = make_state(5), np.full(5, 2.0)
    f = [float(x @ x)]
    for _ in range(100):
        x = optimizer_step(state, x, 2 * x, 1e-2)
        f.append(float(x @ x))
    assert f[-1] < f[0]
    assert all(b <= a for a, b in zip(f, f[1:]))


def test_step_decay_schedule():
    state = make_state(1, lr=1e-2, decay_step=3, gamma=0.5)
    assert [state.learning_rate(e) for e in range(7)] == [1e-2] * 3 + [5e-3] * 3 + [2.5e-3]


def test_optimizer_length_check():
    with pytest.raises(ValueError):
        optimizer_step(make_state(3), np.zeros(3), np.zeros(4), 1e-2)


@given(st.integers(0, 1000), st.integers(0, 50), st.integers(1, 20))
def test_epoch_order_is_a_seeded_permutation(seed, epoch, n):
    a = epoch_order(seed, epoch, n)
    assert sorted(a.tolist()) == list(range(n))
    np.testing.assert_array_equal(a, epoch_order(seed, epoch, n))


# -- training loop ------------------------------------------------------------------------


def test_empty_dataset_is_rejected():
    with pytest.raises(ValueError):
        train([], TINY, TrainConfig(steps=1))


def test_training_is_deterministic(tiny_sample):
    cfg = TrainConfig(steps=15)
    a = train([tiny_sample], TINY, cfg, seed=4)
    b = train([tiny_sample], TINY, cfg, seed=4)
    np.testing.assert_array_equal(a.params, b.params)
    assert a.loss_history == b.loss_history


def test_resume_is_bit_exact(tmp_path, tiny_sample):
    samples = [tiny_sample, training_sample(12, 5, 2, 0.2, ["O", "H"], TINY_LAYOUT)]
    full = train(samples, TINY, TrainConfig(steps=20, decay_step=3), seed=2)
    path = tmp_path / "ck.json"
    train(samples, TINY, TrainConfig(steps=9, decay_step=3), seed=2, checkpoint_path=path)
    resumed = train(samples, TINY, TrainConfig(steps=20, decay_step=3), resume=load_checkpoint(path))
    np.testing.assert_array_equal(resumed.params, full.params)
    assert resumed.loss_history == full.loss_history
    np.testing.assert_array_equal(resumed.optimizer.v, full.optimizer.v)


def test_log_and_checkpoint_cadence(tmp_path, tiny_sample):
    log, ck = tmp_path / "log.jsonl", tmp_path / "ck.json"
    seen = []
    train([tiny_sample], TINY, TrainConfig(steps=6, checkpoint_every=2), log_path=log, checkpoint_path=ck, on_step=lambda s, v: seen.append(s))
    records = [json.loads(line) for line in log.read_text().splitlines()]
    assert [r["step"] for r in records] == list(range(6)) == seen
    assert set(records[0]) == {"step", "loss", "lr", "wall_ms"}
    assert all(r["wall_ms"] >= 0 for r in records)
    back = load_checkpoint(ck)
    assert len(back.loss_history) == 6 and back.model_config == TINY
    assert not (tmp_path / "ck.json.tmp").exists()


def test_checkpoint_format_is_checked(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "nope"}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.json")


def test_checkpoint_roundtrip_preserves_model(tmp_path, tiny_sample):
    ck = train([tiny_sample], TINY, TrainConfig(steps=3))
    save_checkpoint(ck, tmp_path / "c.json")
    back = load_checkpoint(tmp_path / "c.json")
    np.testing.assert_array_equal(back.params, ck.params)
    np.testing.assert_array_equal(back.model().get_flat(), ck.params)


def test_small_learning_rate_loss_is_nearly_monotone(tiny_sample):
    ck = train([tiny_sample], TINY, TrainConfig(lr=1e-3, decay_step=10_000, steps=150), seed=1)
    h = np.array(ck.loss_history)
    for start in range(0, len(h) - 50, 25):
        window = h[start : start + 50]
        assert int(np.sum(np.diff(window) > 0)) <= 3


def test_training_keeps_symmetries(tiny_sample):
    ck = train([tiny_sample], TINY, TrainConfig(steps=30), seed=0)
    model = ck.model()
    args = (model, tiny_sample.system, tiny_sample.integrals)
    assert rotation_check(*args, trials=2).passed
    assert sign_check(*args, trials=2).residual == 0.0
    assert pair_symmetry_check(*args).residual == 0.0
