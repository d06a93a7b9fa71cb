import numpy as np
import pytest

from merl.nn_core import RngStream, forward_batch, param_count
from merl.pg_learners import (
    CentralLearner,
    DdpgLearner,
    MinMaxScaler,
    PgTeam,
    SharedCritic,
    Td3Hyper,
    actor_objective_gradient,
    actor_update,
    critic_update,
    mixed_reward,
    smoothed_target_actions,
    soft_update_targets,
    td3_target,
)
from merl.policy import flatten, head_actions_batch

OBS, ACT = 3, 2


def make_critic(lr=0.01, hidden=(8,), seed=0):
    return SharedCritic(OBS, ACT, hidden, lr, RngStream(seed))


def make_pg(lr=0.01, n_agents=2, seed=1):
    return PgTeam.create(OBS, ACT, n_agents, (8, 6), lr, RngStream(seed))


def set_constant(critic, value, which=("q1", "q2", "q1_target", "q2_target")):
    """Zero all weights and drive the output bias, making Q(s,a) == value."""
    for name in which:
        params = np.zeros(param_count(critic.spec))
        params[-1] = value
        setattr(critic, name, params)


def batch_of(n, rewards=0.0, dones=0.0, seed=5):
    rng = RngStream(seed)
    return (
        rng.gen.normal(size=(n, OBS)),
        rng.uniform(-1, 1, (n, ACT)),
        np.full(n, rewards, dtype=float),
        rng.gen.normal(size=(n, OBS)),
        np.full(n, dones, dtype=float),
    )


def test_td3_target_constant_critics():
    critic = make_critic()
    set_constant(critic, 2.0, which=("q1_target",))
    set_constant(critic, 3.0, which=("q2_target",))
    pg = make_pg()
    hyper = Td3Hyper(gamma=0.95, policy_noise=0.0)
    y = td3_target(critic, pg, 0, batch_of(6, rewards=0.5), hyper, RngStream(0))
    np.testing.assert_allclose(y, 2.4, atol=1e-12)  # 0.5 + 0.95 * min(2, 3)


def test_td3_target_gamma_zero():
    critic = make_critic()
    pg = make_pg()
    batch = batch_of(4, rewards=1.25)
    y = td3_target(critic, pg, 0, batch, Td3Hyper(gamma=0.0), RngStream(0))
    np.testing.assert_array_equal(y, batch[2])


def test_td3_target_zero_networks():
    critic = make_critic()
    set_constant(critic, 0.0)
    pg = make_pg()
    for h in pg.target.heads:
        h[:] = 0.0
    pg.target.trunk[:] = 0.0
    y = td3_target(critic, pg, 1, batch_of(3, rewards=1.0), Td3Hyper(gamma=0.95, policy_noise=0.0), RngStream(0))
    np.testing.assert_allclose(y, 1.0, atol=1e-15)


def test_td3_target_terminal_masking():
    critic = make_critic()
    set_constant(critic, 2.0)
    pg = make_pg()
    hyper = Td3Hyper(gamma=0.95, policy_noise=0.0)
    batch = batch_of(4, rewards=0.5, dones=1.0)
    np.testing.assert_allclose(td3_target(critic, pg, 0, batch, hyper, RngStream(0)), 0.5)
    strict = Td3Hyper(gamma=0.95, policy_noise=0.0, mask_terminal_bootstrap=False)
    np.testing.assert_allclose(td3_target(critic, pg, 0, batch, strict, RngStream(0)), 2.4)


def test_twin_min_never_exceeds_single_critic_targets():
    rng = RngStream(42)
    hyper = Td3Hyper(gamma=0.95, policy_noise=0.0)
    for trial in range(25):
        critic = make_critic(seed=trial)
        pg = make_pg(seed=trial + 100)
        batch = batch_of(40, rewards=0.0, seed=trial)
        y = td3_target(critic, pg, 0, batch, hyper, rng)
        a2 = head_actions_batch(pg.target, 0, batch[3])
        for params in (critic.q1_target, critic.q2_target):
            single = batch[2] + hyper.gamma * critic.q_values(params, batch[3], np.clip(a2, -1, 1))
            assert np.all(y <= single + 1e-12)


def test_smoothing_noise_clipped():
    pg = make_pg()
    hyper = Td3Hyper(policy_noise=5.0, noise_clip=0.5)
    states = RngStream(3).gen.normal(size=(200, OBS))
    base = np.clip(head_actions_batch(pg.target, 0, states), -1, 1)
    smoothed = smoothed_target_actions(pg.target, 0, states, hyper, RngStream(4))
    assert np.abs(smoothed - base).max() <= 0.5 + 1e-12
    assert np.abs(smoothed).max() <= 1.0


def test_critic_update_zero_residual_is_noop():
    critic = make_critic()
    critic.q2 = critic.q1.copy()
    s, a, _, _, _ = batch_of(8)
    y = critic.q_values(critic.q1, s, a)
    before = critic.q1.copy()
    loss = critic_update(critic, [(s, a, y)])
    assert loss == pytest.approx(0.0, abs=1e-24)
    np.testing.assert_array_equal(critic.q1, before)


def test_critic_update_single_transition_hand_loss():
    critic = make_critic()
    set_constant(critic, 1.5, which=("q1",))
    set_constant(critic, 0.5, which=("q2",))
    s = np.zeros((1, OBS))
    a = np.zeros((1, ACT))
    y = np.array([2.4])
    # loss sums both critics' mse: (2.4-1.5)^2 + (2.4-0.5)^2
    loss = critic_update(critic, [(s, a, y)])
    assert loss == pytest.approx(0.9**2 + 1.9**2, abs=1e-12)


def test_critic_update_loss_decreases_on_fixed_batch():
    critic = make_critic(lr=0.01)
    s, a, _, _, _ = batch_of(32)
    y = RngStream(7).gen.normal(size=32)
    losses = [critic_update(critic, [(s, a, y)]) for _ in range(100)]
    assert losses[-1] < losses[0] * 0.5


def test_critic_update_empty_batches_noop():
    critic = make_critic()
    before = critic.q1.copy()
    loss = critic_update(critic, [])
    assert np.isnan(loss)
    np.testing.assert_array_equal(critic.q1, before)


def test_actor_gradient_matches_finite_differences():
    critic = make_critic(seed=9)
    pg = make_pg(seed=10)
    states = RngStream(11).gen.normal(size=(4, OBS))
    head_grad, trunk_grad, _ = actor_objective_gradient(pg, critic, 0, states)

    def objective(trunk, head):
        feat = forward_batch(pg.team.trunk_spec, trunk, states)
        acts = forward_batch(pg.team.head_spec, head, feat)
        q = critic.q_values(critic.q1, states, acts)
        return float(q.mean())

    h = 1e-5
    for grad, base, name in ((head_grad, pg.team.heads[0], "head"), (trunk_grad, pg.team.trunk, "trunk")):
        fd = np.zeros_like(base)
        for i in range(base.size):
            hi, lo = base.copy(), base.copy()
            hi[i] += h
            lo[i] -= h
            if name == "head":
                fd[i] = (objective(pg.team.trunk, hi) - objective(pg.team.trunk, lo)) / (2 * h)
            else:
                fd[i] = (objective(hi, pg.team.heads[0]) - objective(lo, pg.team.heads[0])) / (2 * h)
        err = np.abs(grad - fd) / np.maximum.reduce([np.abs(grad), np.abs(fd), np.full_like(fd, 1e-4)])
        assert err.max() < 1e-4, name


def test_actor_update_zero_lr_noop():
    critic = make_critic()
    pg = make_pg(lr=0.0)
    before = flatten(pg.team).copy()
    actor_update(pg, critic, 0, RngStream(0).gen.normal(size=(8, OBS)))
    np.testing.assert_array_equal(flatten(pg.team), before)
    assert pg.actor_updates == 1


def test_actor_updates_climb_peaked_critic():
    # critic with an analytic optimum at a = 0:
    # Q(s, a) = sum_i tanh(1 + a_i) + tanh(1 - a_i), peaked at a_i = 0
    critic = make_critic(hidden=(2 * ACT,))
    params = np.zeros(param_count(critic.spec))
    fan_in = OBS + ACT
    w1 = np.zeros((2 * ACT, fan_in))
    for i in range(ACT):
        w1[2 * i, OBS + i] = 1.0
        w1[2 * i + 1, OBS + i] = -1.0
    b1 = np.ones(2 * ACT)
    w2 = np.ones((1, 2 * ACT))
    params[: w1.size] = w1.ravel()
    params[w1.size : w1.size + b1.size] = b1
    params[w1.size + b1.size : w1.size + b1.size + w2.size] = w2.ravel()
    critic.q1 = params
    pg = make_pg(lr=0.01, seed=13)
    states = RngStream(14).gen.normal(size=(16, OBS))
    initial = np.abs(head_actions_batch(pg.team, 0, states)).mean()
    for _ in range(300):
        actor_update(pg, critic, 0, states)
    final = np.abs(head_actions_batch(pg.team, 0, states)).mean()
    assert final < 0.02
    assert final < initial


def test_soft_update_targets_moves_toward_online():
    critic = make_critic()
    pg = make_pg()
    q1t_before = critic.q1_target.copy()
    pg.team.trunk += 1.0
    critic.q1 += 1.0
    soft_update_targets(pg, critic, tau=0.5)
    np.testing.assert_allclose(critic.q1_target, q1t_before + 0.5, atol=1e-12)
    soft_update_targets(pg, critic, tau=1.0)
    np.testing.assert_array_equal(critic.q1_target, critic.q1)
    np.testing.assert_array_equal(pg.target.trunk, pg.team.trunk)


def test_ddpg_update_runs_and_zero_lr_noop():
    hyper = Td3Hyper(gamma=0.9, actor_lr=0.0, critic_lr=0.0, policy_noise=0.0, batch_size=8)
    learner = DdpgLearner(OBS, ACT, (8, 6), hyper, RngStream(0))
    before_actor = flatten(learner.pg.team).copy()
    before_q1 = learner.critic.q1.copy()
    batch = batch_of(8, rewards=0.3)
    loss = learner.update(batch)
    assert np.isfinite(loss)
    np.testing.assert_array_equal(flatten(learner.pg.team), before_actor)
    np.testing.assert_array_equal(learner.critic.q1, before_q1)
    # actor steps on every update (no delay)
    assert learner.pg.critic_updates == 1
    assert learner.pg.actor_updates == 1


def test_ddpg_constant_critic_target_arithmetic():
    hyper = Td3Hyper(gamma=0.95, actor_lr=0.0, critic_lr=0.0, policy_noise=0.0)
    learner = DdpgLearner(OBS, ACT, (8,), hyper, RngStream(1))
    set_constant(learner.critic, 2.0, which=("q1_target",))
    set_constant(learner.critic, 0.0, which=("q1",))
    s = np.zeros((1, OBS))
    a = np.zeros((1, ACT))
    batch = (s, a, np.array([0.5]), s, np.zeros(1))
    # y = 0.5 + 0.95*2 = 2.4 against Q = 0: loss = 2.4^2
    loss = learner.update(batch)
    assert loss == pytest.approx(2.4**2, abs=1e-12)


def test_central_learner_input_dims_and_single_agent_degeneration():
    hyper = Td3Hyper(batch_size=4)
    multi = CentralLearner(OBS, ACT, 3, (8, 6), (8,), hyper, RngStream(0))
    assert multi.critic.spec.input_dim == 3 * OBS + 3 * ACT
    single = CentralLearner(OBS, ACT, 1, (8, 6), (8,), hyper, RngStream(0))
    assert single.critic.spec.input_dim == OBS + ACT


def test_central_learner_rejects_misaligned_batch():
    hyper = Td3Hyper(batch_size=4)
    learner = CentralLearner(OBS, ACT, 2, (8, 6), (8,), hyper, RngStream(0))
    bad = (np.zeros((4, OBS)), np.zeros((4, 2 * ACT)), np.zeros(4), np.zeros((4, OBS)), np.zeros(4))
    with pytest.raises(ValueError):
        learner.update(bad, RngStream(1))


def test_central_learner_update_and_delayed_actor_schedule():
    hyper = Td3Hyper(gamma=0.9, actor_lr=0.001, critic_lr=0.001, policy_update_freq=2, batch_size=8)
    learner = CentralLearner(OBS, ACT, 2, (8, 6), (8,), hyper, RngStream(0))
    rng = RngStream(5)
    b = 8
    batch = (
        rng.gen.normal(size=(b, 2 * OBS)),
        rng.uniform(-1, 1, (b, 2 * ACT)),
        rng.gen.normal(size=b),
        rng.gen.normal(size=(b, 2 * OBS)),
        np.zeros(b),
    )
    for step in range(4):
        loss = learner.update(batch, rng)
        assert np.isfinite(loss)
    assert learner.pg.critic_updates == 4
    # actor fires every 2nd critic update, once per agent
    assert learner.pg.actor_updates == 2 * 2


def test_central_critic_loss_decreases_on_fixed_targets():
    hyper = Td3Hyper(critic_lr=0.01, batch_size=16)
    learner = CentralLearner(OBS, ACT, 2, (8, 6), (8, 8), hyper, RngStream(3))
    rng = RngStream(6)
    s = rng.gen.normal(size=(16, 2 * OBS))
    a = rng.uniform(-1, 1, (16, 2 * ACT))
    y = rng.gen.normal(size=16)
    losses = [critic_update(learner.critic, [(s, a, y)]) for _ in range(100)]
    assert losses[-1] < losses[0] * 0.5


def test_min_max_scaler_and_mixed_reward():
    ls, ts = MinMaxScaler(), MinMaxScaler()
    # first sample: degenerate range scales to 0
    assert mixed_reward(5.0, 1.0, 10.0, ls, ts) == 0.0
    # local range [3,5], team range [0,1]
    r = mixed_reward(3.0, 0.0, 10.0, ls, ts)
    assert r == 0.0
    r = mixed_reward(5.0, 1.0, 10.0, ls, ts)
    assert r == pytest.approx(1.0 + 10.0)
    r = mixed_reward(4.0, 0.5, 10.0, ls, ts)
    assert r == pytest.approx(0.5 + 5.0)
