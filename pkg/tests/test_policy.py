from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from app.config import TrainConfig
from app.exceptions import CheckpointError, DimensionError
from app.models import (
    GreedyPolicy,
    RolloutBatch,
    build_policy,
    clipped_surrogate,
    gae,
    get_policy_manager,
    load_checkpoint,
    obs_to_tensor,
    ppo_update,
    sample_action,
    save_checkpoint,
    train,
)
from app.models.gradcheck import build_reduced_net, grad_check, output_loss, reduced_arch
from app.sim.camera import SegmentedImage
from app.sim.env import StepOutcome, Terminal


@pytest.fixture
def small_net():
    return build_reduced_net(seed=3)


def _random_obs(rng: np.random.Generator, n: int = 1, h: int = 8, w: int = 8) -> np.ndarray:
    return rng.integers(0, 256, size=(n, h, w, 3), dtype=np.uint8)


class _FixedLengthEnv:
    """四步一回合、观测随机的训练环境"""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.n = 0

    def _obs(self) -> SegmentedImage:
        return SegmentedImage(_random_obs(self.rng)[0])

    def reset(self) -> SegmentedImage:
        self.n = 0
        return self._obs()

    def step(self, action) -> StepOutcome:
        self.n += 1
        terminal = Terminal.SUCCESS if self.n == 4 else Terminal.RUNNING
        return StepOutcome(self._obs(), 0.1 + 0.1 * action.a_x, terminal, 0.0)


def test_forward_is_deterministic(settings):
    net = build_policy(settings.policy.arch, seed=5)
    obs = obs_to_tensor(SegmentedImage(np.full((40, 80, 3), 128, dtype=np.uint8)))
    assert obs.shape == (1, 3, 40, 80)
    mean_a, value_a = net(obs)
    mean_b, value_b = net(obs)
    assert mean_a.shape == (1, 2)
    assert value_a.shape == (1,)
    assert torch.equal(mean_a, mean_b) and torch.equal(value_a, value_b)


def test_same_seed_same_weights(settings):
    a = build_policy(settings.policy.arch, seed=11)
    b = build_policy(settings.policy.arch, seed=11)
    for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb)


def test_zero_heads_give_zero_outputs(small_net):
    small_net.zero_heads()
    mean, value = small_net(obs_to_tensor(_random_obs(np.random.default_rng(0), 4)))
    assert torch.all(mean == 0) and torch.all(value == 0)


def test_wrong_input_shape_raises(small_net):
    with pytest.raises(DimensionError):
        small_net(torch.zeros(1, 3, 9, 8))


def test_greedy_policy_clamps_mean(small_net):
    with torch.no_grad():
        small_net.actor.weight.zero_()
        small_net.actor.bias.copy_(torch.tensor([3.0, -0.25]))
    action = GreedyPolicy(small_net).act(SegmentedImage(np.zeros((8, 8, 3), dtype=np.uint8)))
    assert action.a_x == 1.0
    assert action.a_y == pytest.approx(-0.25)


def test_sample_action_with_tiny_std_returns_mean():
    rng = np.random.default_rng(0)
    action, raw, _ = sample_action(np.array([0.3, -0.2]), np.full(2, math.log(1e-9)), rng)
    assert action.a_x == pytest.approx(0.3, abs=1e-6)
    assert action.a_y == pytest.approx(-0.2, abs=1e-6)
    assert raw.shape == (2,)


def test_sample_action_clamps_to_unit_box():
    action, raw, _ = sample_action(np.array([5.0, 5.0]), np.full(2, math.log(1e-9)), np.random.default_rng(0))
    assert (action.a_x, action.a_y) == (1.0, 1.0)
    assert raw[0] == pytest.approx(5.0)


def test_sample_action_is_seeded():
    a = sample_action(np.zeros(2), np.zeros(2), np.random.default_rng(42))
    b = sample_action(np.zeros(2), np.zeros(2), np.random.default_rng(42))
    assert a[0] == b[0]
    assert a[2] == b[2]


def test_entropy_depends_only_on_log_std(small_net):
    before = float(small_net.entropy())
    with torch.no_grad():
        small_net.actor.weight.add_(1.0)
    assert float(small_net.entropy()) == before
    with torch.no_grad():
        small_net.log_std.add_(0.5)
    assert float(small_net.entropy()) == pytest.approx(before + 1.0)


def test_gae_single_terminal_step():
    adv, ret = gae(np.array([1.0]), np.array([0.5]), np.array([True]), 0.99, 0.95, last_value=10.0)
    assert adv[0] == pytest.approx(0.5)
    assert ret[0] == pytest.approx(1.0)


def test_gae_undiscounted_accumulates_rewards():
    adv, ret = gae(np.array([1.0, 1.0]), np.zeros(2), np.array([False, False]), 1.0, 1.0, last_value=0.0)
    assert np.allclose(adv, [2.0, 1.0])
    assert np.allclose(ret, [2.0, 1.0])


def test_gae_does_not_bootstrap_across_episodes():
    adv, _ = gae(np.array([0.0, 0.0]), np.array([0.0, 5.0]), np.array([True, False]), 1.0, 1.0, last_value=0.0)
    assert adv[0] == pytest.approx(0.0)
    assert adv[1] == pytest.approx(-5.0)


def test_clipped_surrogate_examples():
    assert float(clipped_surrogate(torch.tensor(1.5), torch.tensor(1.0), 0.2)) == pytest.approx(1.2)
    assert float(clipped_surrogate(torch.tensor(0.5), torch.tensor(-1.0), 0.2)) == pytest.approx(-0.8)
    assert float(clipped_surrogate(torch.tensor(1.1), torch.tensor(2.0), 0.2)) == pytest.approx(2.2)


def test_ppo_update_with_zero_advantage_keeps_parameters(small_net):
    rng = np.random.default_rng(1)
    n = 16
    batch = RolloutBatch(
        observations=_random_obs(rng, n),
        actions=rng.normal(size=(n, 2)).astype(np.float32),
        log_probs=np.zeros(n, dtype=np.float32),
        rewards=np.zeros(n),
        values=np.zeros(n),
        terminals=np.zeros(n, dtype=bool),
        advantages=np.zeros(n),
        returns=np.zeros(n),
    )
    cfg = TrainConfig(minibatch_size=8, epochs_per_update=2, vf_coef=0.0, ent_coef=0.0)
    before = {k: v.clone() for k, v in small_net.state_dict().items()}
    optimizer = torch.optim.Adam(small_net.parameters(), lr=1e-3)
    stats = ppo_update(small_net, optimizer, batch, cfg, torch.Generator().manual_seed(0))
    for name, tensor in small_net.state_dict().items():
        assert torch.equal(tensor, before[name]), name
    assert stats["policy_loss"] == pytest.approx(0.0, abs=1e-6)


def test_ppo_update_requires_advantages(small_net):
    batch = RolloutBatch(
        observations=_random_obs(np.random.default_rng(0), 2),
        actions=np.zeros((2, 2), dtype=np.float32),
        log_probs=np.zeros(2, dtype=np.float32),
        rewards=np.zeros(2),
        values=np.zeros(2),
        terminals=np.zeros(2, dtype=bool),
    )
    with pytest.raises(ValueError):
        ppo_update(small_net, torch.optim.Adam(small_net.parameters()), batch, TrainConfig(), torch.Generator())


def test_train_with_zero_steps_is_noop(small_net):
    before = {k: v.clone() for k, v in small_net.state_dict().items()}
    assert train(lambda: _FixedLengthEnv(), small_net, TrainConfig(total_steps=0)) == []
    for name, tensor in small_net.state_dict().items():
        assert torch.equal(tensor, before[name])


def test_train_produces_curve(small_net):
    cfg = TrainConfig(total_steps=32, rollout_horizon=16, minibatch_size=8, epochs_per_update=2, seed=2)
    seen = []
    curve = train(lambda: _FixedLengthEnv(1), small_net, cfg, on_update=seen.append)
    assert [p.env_steps for p in curve] == [16, 32]
    assert seen == curve
    assert all(p.episodes == 4 for p in curve)
    assert all(p.success_rate == 1.0 for p in curve)


def test_gradcheck_linear_head_is_exact(small_net):
    obs = obs_to_tensor(_random_obs(np.random.default_rng(4), 2))
    err = grad_check(
        small_net, obs, loss=lambda net, x: net(x)[0].sum(), params=["actor.weight", "actor.bias"]
    )
    assert err <= 1e-6


def test_gradcheck_reduced_network():
    net = build_reduced_net(seed=0)
    assert net.n_flatten == 16
    obs = torch.rand(2, 3, 8, 8, generator=torch.Generator().manual_seed(0))
    assert grad_check(net, obs, loss=output_loss) <= 1e-4


def test_gradcheck_detects_wrong_gradient(small_net):
    obs = obs_to_tensor(_random_obs(np.random.default_rng(5), 2))
    err = grad_check(small_net, obs, params=["critic.bias"], perturb=lambda name, g: g * 1.1)
    assert err > 1e-2


def test_checkpoint_roundtrip(tmp_path, small_net):
    path = save_checkpoint(small_net, tmp_path / "ckpt" / "policy.ckpt")
    loaded = load_checkpoint(path)
    assert loaded.arch == reduced_arch()
    obs = obs_to_tensor(_random_obs(np.random.default_rng(6), 3))
    with torch.no_grad():
        assert torch.equal(small_net(obs)[0], loaded(obs)[0])
        assert torch.equal(small_net(obs)[1], loaded(obs)[1])


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path, small_net):
    path = save_checkpoint(small_net, tmp_path / "policy.ckpt")
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_missing(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_policy_manager_caches_nets(tmp_path, small_net):
    path = save_checkpoint(small_net, tmp_path / "policy.ckpt")
    manager = get_policy_manager()
    try:
        assert manager is get_policy_manager()
        assert manager.get_net(path) is manager.get_net(path)
        assert manager.is_loaded(path)
    finally:
        manager.unload_all()
    assert not manager.is_loaded(path)
