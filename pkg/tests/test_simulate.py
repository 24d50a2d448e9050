import numpy as np
import pytest

from longfair.errors import InvariantViolation
from longfair.markov import kernel_power, stationary_distribution, total_variation
from longfair.models import group_kernels, load_dynamics_preset
from longfair.simulate import (
    CSV_HEADER,
    Trajectory,
    detect_convergence,
    multi_start_convergence,
    random_initial_distributions,
    read_csv,
    simulate,
    step_distances,
    write_csv,
)
from longfair.models import GenerativeModel, PRESET_NAMES

from conftest import SEEDS, constant_dynamics_model

TOY = np.array([[0.9, 0.1], [0.5, 0.5]])


def test_three_steps_by_hand():
    model = constant_dynamics_model(TOY)
    traj = simulate(model, np.full((2, 2), 0.5), [[1, 0], [0, 1]], T=3)
    np.testing.assert_allclose(traj.mus[1:, 0], [[0.9, 0.1], [0.86, 0.14], [0.844, 0.156]], atol=1e-15)
    np.testing.assert_allclose(traj.mus[1, 1], [0.5, 0.5], atol=1e-15)
    assert traj.T == 3
    assert len(traj.metrics["utility"]) == 4


def test_simulate_rejects_bad_input():
    model = constant_dynamics_model(TOY)
    with pytest.raises(InvariantViolation):
        simulate(model, np.full((2, 2), 0.5), [[1, 0], [0, 1]], T=0)
    with pytest.raises(ValueError):
        simulate(model, np.full((2, 2), 0.5), [[0.7, 0], [0, 1]], T=2)


def test_detect_convergence_hand():
    # step distance is 0.3 * 0.4**t; last above 1e-3 is t=6
    K = np.array([[0.7, 0.3], [0.3, 0.7]])
    traj = simulate(constant_dynamics_model(K), np.full((2, 2), 0.5), [[1, 0], [1, 0]], T=20)
    np.testing.assert_allclose(step_distances(traj)[:3], [0.3, 0.12, 0.048])
    assert detect_convergence(traj, 1e-3) == 7
    short = simulate(constant_dynamics_model(K), np.full((2, 2), 0.5), [[1, 0], [1, 0]], T=5)
    assert detect_convergence(short, 1e-3) is None
    with pytest.raises(ValueError):
        detect_convergence(traj, 0)


def test_random_initial_distributions():
    a = random_initial_distributions(4, 10, 4)
    np.testing.assert_array_equal(a, random_initial_distributions(4, 10, 4))
    assert a.shape == (10, 2, 4)
    np.testing.assert_allclose(a.sum(axis=2), 1.0)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("preset", PRESET_NAMES)
def test_fixed_policy_limits_agree(seed, preset, model):
    m = GenerativeModel(gamma=model.gamma, ell=model.ell, dynamics=load_dynamics_preset(preset))
    rng = np.random.default_rng(seed)
    pi = rng.uniform(0.05, 0.95, (2, 4))
    starts = random_initial_distributions(seed, 10, 4)
    rep = multi_start_convergence(m, pi, starts, T=200)
    assert rep.converged
    assert rep.max_pairwise_tv <= 1e-8
    assert rep.max_stationary_tv <= 1e-8


def test_reducible_policy_not_converged():
    model = constant_dynamics_model(np.eye(2))
    rep = multi_start_convergence(model, np.full((2, 2), 0.5), [[[1, 0], [1, 0]], [[0, 1], [0, 1]]], T=10)
    assert rep.stationary is None and not rep.converged
    assert rep.max_pairwise_tv == pytest.approx(1.0)


@pytest.mark.parametrize("seed", SEEDS)
def test_trajectory_matches_matrix_power(seed, model, mu0):
    pi = np.random.default_rng(seed).random((2, 4))
    traj = simulate(model, pi, mu0, T=300)
    K = group_kernels(model, pi)
    for s in (0, 1):
        np.testing.assert_allclose(traj.mus[300, s], mu0[s] @ kernel_power(K[s], 300), atol=1e-12)
        assert total_variation(traj.mus[-1, s], stationary_distribution(K[s])) < 1e-10
    np.testing.assert_allclose(traj.mus.sum(axis=2), 1.0, atol=1e-12)


def test_csv_roundtrip(tmp_path, model, mu0):
    traj = simulate(model, np.full((2, 4), 0.5), mu0, T=3)
    traj.policy_kind, traj.seed, traj.lam = "long-eop", 1, 0
    path = tmp_path / "t.csv"
    write_csv(path, [traj])
    rows = read_csv(path)
    assert list(rows[0]) == CSV_HEADER
    assert len(rows) == 4 * 2 * 4
    assert float(rows[-1]["mu"]) == pytest.approx(traj.mus[3, 1, 3])
    cum = traj.cumulative["cum_utility"]
    assert float(rows[-1]["cum_utility"]) == pytest.approx(cum[-1])
    assert cum[-1] == pytest.approx(traj.metrics["utility"].sum())


def test_trajectory_without_metrics_rows():
    traj = Trajectory(mus=np.full((2, 2, 2), 0.5))
    rows = list(traj.rows())
    assert len(rows) == 8 and rows[0][4] == ""
