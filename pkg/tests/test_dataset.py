import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from octrl.dataset import Dataset, TransitionRecord, finite_difference, load_dataset, sample_iid, sample_random_policy, save_dataset
from octrl.envs import builtin, em_step
from octrl.errors import InputError, LoadError


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return path


def test_dataset_validation():
    with pytest.raises(InputError):
        Dataset(np.zeros((0, 1)), np.zeros((0, 1)), np.zeros((0, 1)))
    with pytest.raises(InputError):
        Dataset(np.zeros((2, 1)), np.zeros((3, 1)), np.zeros((2, 1)))
    with pytest.raises(InputError):
        Dataset(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(InputError):
        Dataset([[np.nan]], [[0.0]], [[0.0]])
    with pytest.raises(InputError):
        Dataset([[0.0]], [[0.0]], [[0.0]], state_rewards=[1.0, 2.0])


def test_dataset_is_immutable_and_promotes_vectors():
    ds = Dataset([0.0, 1.0], [0.5, 0.5], [1.0, 2.0])
    assert (ds.n, ds.n_s, ds.n_a) == (2, 1, 1)
    with pytest.raises(ValueError):
        ds.states[0, 0] = 3.0


def test_finite_difference_examples():
    rec = TransitionRecord(state=np.array([1.0, 2.0]), action=np.array([0.0]), next_state=np.array([1.0, 2.0]), dt=0.1)
    np.testing.assert_array_equal(finite_difference(rec), [0.0, 0.0])
    rec = TransitionRecord(np.array([0.0, 0.0]), np.array([0.0]), np.array([0.02, -0.01]), 0.01)
    np.testing.assert_allclose(finite_difference(rec), [2.0, -1.0], rtol=1e-12)
    for dt in (0.0, -1.0):
        with pytest.raises(InputError):
            finite_difference(TransitionRecord(np.zeros(1), np.zeros(1), np.zeros(1), dt))


def test_finite_difference_of_pendulum_step():
    env = builtin("pendulum")
    x = np.array([np.cos(0.3), np.sin(0.3), -0.7])
    xn = em_step(env, x, [1.2], 0.05)
    d = finite_difference(TransitionRecord(x, np.array([1.2]), xn, 0.05))
    np.testing.assert_array_equal(d, (xn - x) / 0.05)


def test_load_single_jsonl_record(tmp_path):
    p = write_lines(tmp_path / "d.jsonl", ['{"state":[0],"action":[0],"deriv":[0]}'])
    ds = load_dataset(p)
    assert ds.n == 1 and ds.state_rewards is None


def test_load_converts_transitions(tmp_path):
    p = write_lines(tmp_path / "d.jsonl", ['{"state":[0],"action":[1],"next_state":[0.1],"dt":0.1,"reward":-1}'])
    ds = load_dataset(p)
    assert ds.derivs[0, 0] == pytest.approx(1.0, rel=1e-15)
    assert ds.state_rewards[0] == -1.0


def test_load_csv_with_three_rows(tmp_path):
    p = write_lines(tmp_path / "d.csv", ["state_0,action_0,deriv_0", "0,1,2", "1,2,3", "2,3,4"])
    ds = load_dataset(p)
    assert ds.n == 3
    np.testing.assert_array_equal(ds.derivs[:, 0], [2, 3, 4])


def test_load_csv_transitions(tmp_path):
    p = write_lines(tmp_path / "d.csv", ["state_0,action_0,next_state_0,dt", "0,1,0.5,0.5"])
    assert load_dataset(p).derivs[0, 0] == 1.0


@pytest.mark.parametrize(
    "lines,needle",
    [
        (['{"state":[0],"action":[0],"deriv":[0]}', "not json"], "line 2"),
        (['{"state":[0],"action":[0],"deriv":[0]}', '{"state":[0,1],"action":[0],"deriv":[0,1]}'], "line 2"),
        (['{"state":[0],"action":[0],"deriv":[NaN]}'], "line 1"),
        (['{"state":[0],"action":[0]}'], "line 1"),
        (['{"state":[0],"action":[0],"next_state":[1],"dt":0}'], "line 1"),
        (['{"state":[0],"action":[0],"deriv":[0]}', "", '{"state":[0],"action":[0],"deriv":["x"]}'], "line 3"),
    ],
)
def test_load_errors_name_the_line(tmp_path, lines, needle):
    p = write_lines(tmp_path / "bad.jsonl", lines)
    with pytest.raises(LoadError, match=needle):
        load_dataset(p)


def test_load_empty_file_fails(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    with pytest.raises(LoadError):
        load_dataset(p)


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(InputError):
        load_dataset(tmp_path / "d.parquet")


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (5, 2), elements=st.floats(-1e6, 1e6, allow_subnormal=False)),
    arrays(np.float64, (5, 1), elements=st.floats(-1e6, 1e6, allow_subnormal=False)),
    st.sampled_from(["jsonl", "csv"]),
    st.booleans(),
)
def test_save_load_round_trip_is_exact(tmp_path_factory, X, A, fmt, with_r):
    ds = Dataset(X, A, X[::-1] * 0.5, state_rewards=X[:, 0] if with_r else None)
    p = save_dataset(ds, tmp_path_factory.mktemp("rt") / f"d.{fmt}")
    assert load_dataset(p) == ds


def test_sample_iid_zero_width_box_is_exact_drift():
    env = builtin("nonlinear", epsilon=0.0)
    ds = sample_iid(env, ([0.0], [0.0]), ([0.0], [0.0]), 1)
    np.testing.assert_array_equal(ds.derivs, env.drift(np.zeros((1, 1))))


def test_sample_iid_rejects_bad_inputs():
    env = builtin("ou")
    with pytest.raises(InputError):
        sample_iid(env, ([1.0], [0.0]), ([0.0], [1.0]), 5)
    with pytest.raises(InputError):
        sample_iid(env, ([0.0], [1.0]), ([0.0], [1.0]), 0)
    with pytest.raises(InputError):
        sample_iid(env, ([0.0], [1.0]), ([0.0], [1.0]), 5, h=0.0)


def test_sample_iid_noise_is_centred_on_the_drift():
    env = builtin("ou")
    N, h = 10_000, 1e-3
    ds = sample_iid(env, env.state_box, env.action_box, N, h=h, rng_seed=11)
    resid = ds.derivs[:, 0] - (-ds.states[:, 0] + ds.actions[:, 0])
    assert abs(resid.mean()) <= 3 * np.sqrt(2 * env.epsilon / h) / np.sqrt(N)
    assert resid.std() == pytest.approx(np.sqrt(2 * env.epsilon / h), rel=0.05)


def test_sample_iid_is_seed_deterministic():
    env = builtin("ou")
    a = sample_iid(env, env.state_box, env.action_box, 50, rng_seed=3)
    assert a == sample_iid(env, env.state_box, env.action_box, 50, rng_seed=3)
    assert a != sample_iid(env, env.state_box, env.action_box, 50, rng_seed=4)


@pytest.mark.parametrize("name", ["ou", "nonlinear", "pendulum"])
def test_exact_drift_option_reproduces_the_drift(name):
    env = builtin(name, epsilon=0.0)
    ds = sample_iid(env, env.state_box, env.action_box, 30, rng_seed=1, exact_drift=True)
    np.testing.assert_allclose(ds.derivs, env.drift_and_control(ds.states, ds.actions), rtol=0, atol=1e-15)
    np.testing.assert_array_equal(ds.state_rewards, env.state_reward(ds.states))


def test_random_policy_sampler():
    env = builtin("pendulum")
    ds = sample_random_policy(env, 300, rng_seed=2)
    assert ds.n == 300 and ds.n_s == 3
    assert np.all(np.abs(ds.actions) <= 2.0)
    np.testing.assert_allclose(ds.states[:, 0] ** 2 + ds.states[:, 1] ** 2, 1.0, atol=1e-12)
    assert ds == sample_random_policy(env, 300, rng_seed=2)
    with pytest.raises(InputError):
        sample_random_policy(env, 500, episodes=1)
