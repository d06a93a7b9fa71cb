import numpy as np
import pytest

from merl.nn_core import RngStream, param_count
from merl.policy import act, act_team, flatten, head_actions_batch, make_team, team_specs, unflatten


@pytest.fixture
def team():
    return make_team(obs_dim=6, action_dim=2, n_agents=3, hidden_dims=(10, 8), rng=RngStream(0))


def test_trunk_head_split_shapes():
    trunk, head = team_specs(6, 2, (10, 8))
    assert trunk.input_dim == 6 and trunk.output_dim == 10 and trunk.hidden_dims == ()
    assert head.input_dim == 10 and head.hidden_dims == (8,) and head.output_dim == 2
    assert head.output_activation == "tanh"


def test_zero_weight_team_zero_action(team):
    team.trunk[:] = 0.0
    for h in team.heads:
        h[:] = 0.0
    obs = np.ones(6)
    assert np.all(act(team, 0, obs) == 0.0)


def test_action_bounds_and_noise_clamp(team):
    obs = np.full(6, 3.0)
    a = act(team, 1, obs)
    assert np.all(np.abs(a) <= 1.0)
    # zero-weight team + large noise: action is pure clamped noise
    team.trunk[:] = 0.0
    for h in team.heads:
        h[:] = 0.0
    rng = RngStream(123)
    noisy = act(team, 0, obs, noise=(rng, 5.0))
    assert np.all(np.abs(noisy) <= 1.0)
    draw = RngStream(123).normal(5.0, 2)
    np.testing.assert_array_equal(noisy, np.clip(draw, -1, 1))


def test_head_isolation(team):
    obs = np.linspace(-1, 1, 6)
    before = act(team, 0, obs)
    team.heads[2][:] = 99.0  # vandalize another head
    np.testing.assert_array_equal(act(team, 0, obs), before)


def test_identical_heads_identical_actions(team):
    obs = np.linspace(-0.5, 0.5, 6)
    team.heads[1] = team.heads[0].copy()
    np.testing.assert_array_equal(act(team, 0, obs), act(team, 1, obs))
    assert not np.array_equal(act(team, 0, obs), act(team, 2, obs))


def test_act_team_maps_heads(team):
    jobs = [np.full(6, 0.1 * (k + 1)) for k in range(3)]
    ja = act_team(team, jobs)
    for k in range(3):
        np.testing.assert_array_equal(ja[k], act(team, k, jobs[k]))
    with pytest.raises(ValueError):
        act_team(team, jobs[:2])
    with pytest.raises(IndexError):
        act(team, 3, jobs[0])


def test_permuting_heads_permutes_actions(team):
    obs = np.linspace(0, 1, 6)
    jobs = [obs, obs, obs]
    before = act_team(team, jobs)
    team.heads = [team.heads[2], team.heads[0], team.heads[1]]
    after = act_team(team, jobs)
    np.testing.assert_array_equal(after[0], before[2])
    np.testing.assert_array_equal(after[1], before[0])
    np.testing.assert_array_equal(after[2], before[1])


def test_flatten_roundtrip_bit_equal(team):
    flat = flatten(team)
    expected = param_count(team.trunk_spec) + 3 * param_count(team.head_spec)
    assert flat.size == expected
    rebuilt = unflatten(team, flat)
    np.testing.assert_array_equal(rebuilt.trunk, team.trunk)
    for a, b in zip(rebuilt.heads, team.heads):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        unflatten(team, flat[:-1])


def test_clone_shares_no_storage(team):
    copy = team.clone()
    copy.trunk[0] += 1.0
    copy.heads[0][0] += 1.0
    assert team.trunk[0] != copy.trunk[0]
    assert team.heads[0][0] != copy.heads[0][0]


def test_flatten_order_stable(team):
    # trunk first, then heads in index order
    flat = flatten(team)
    nt = param_count(team.trunk_spec)
    nh = param_count(team.head_spec)
    np.testing.assert_array_equal(flat[:nt], team.trunk)
    np.testing.assert_array_equal(flat[nt : nt + nh], team.heads[0])
    np.testing.assert_array_equal(flat[nt + 2 * nh :], team.heads[2])


def test_head_actions_batch_matches_act(team):
    obs = RngStream(4).gen.normal(size=(5, 6))
    batch = head_actions_batch(team, 1, obs)
    for i in range(5):
        np.testing.assert_allclose(batch[i], act(team, 1, obs[i]), rtol=0, atol=1e-14)
