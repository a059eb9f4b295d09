import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_minimal_system
from srgkit.errors import DimensionError, SchemaError, SingularConsistency
from srgkit.gains_data import build_data_matrices, gain_annulus_data, shift_data
from srgkit.gains_ss import max_gain, min_gain
from srgkit.lti import OperatorKind, simulate
from srgkit.models import lowpass, unstable_mimo
from srgkit.robust import (
    NoiseModel,
    ball_noise_model,
    build_consistency_set,
    build_extended_known,
    difference_coefficients,
    load_noise_model,
    robust_gain_annulus,
    robust_gain_lmi,
    robust_max_gain,
    robust_min_gain,
    sample_ball_noise,
    simulate_noisy,
)

TRUNC, L2 = OperatorKind.TRUNCATED_LIMIT, OperatorKind.L2


def noisy_data(ss, N, v_bar, seed, l=None):
    l = ss.n if l is None else l
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((N, ss.m))
    v = sample_ball_noise(ss.m, N, v_bar, seed + 1)
    return build_data_matrices(simulate_noisy(ss, u, v, l=l), l)


def assembled_matrix(dm, noise):
    Z = np.vstack([dm.Xi, dm.U])
    outer = np.block([[Z, np.zeros((Z.shape[0], dm.m))], [dm.Y, np.eye(dm.m)]])
    inner = np.block([[noise.Q, noise.S @ noise.Bv.T], [noise.Bv @ noise.S.T, noise.Bv @ noise.R @ noise.Bv.T]])
    return outer @ inner @ outer.T


def test_extended_known_smallest_instance():
    ek = build_extended_known(1, 1)
    np.testing.assert_array_equal(ek.At, [[0.0, 0.0]])
    np.testing.assert_array_equal(ek.Bt, [[1.0]])


def test_extended_known_advances_windows():
    ek = build_extended_known(2, 1)
    u = np.arange(10.0)
    y = 100 + np.arange(10.0)
    for k in range(2, 9):
        xi = np.array([u[k - 2], u[k - 1], y[k - 2], y[k - 1]])
        np.testing.assert_array_equal(ek.advance(xi, [u[k]]), [u[k - 1], u[k], y[k - 1]])


@pytest.mark.parametrize("l,m", [(1, 1), (2, 1), (3, 2), (2, 3)])
def test_extended_known_rows_are_unit_selections(l, m):
    ek = build_extended_known(l, m)
    rows = np.hstack([ek.At, ek.Bt])
    assert rows.shape == (2 * m * l - m, 2 * m * l + m)
    assert np.all(np.sum(rows == 1, axis=1) == 1) and np.all(np.sum(rows != 0, axis=1) == 1)


def test_extended_known_rejects_zero_lag():
    with pytest.raises(DimensionError):
        build_extended_known(0, 1)


def test_ball_noise_model_parameters():
    nm = ball_noise_model(0.05, 100, 2, 1)
    np.testing.assert_allclose(nm.R, [[0.0025 * 98]])
    np.testing.assert_array_equal(nm.Q, -np.eye(98))
    assert not nm.S.any() and nm.Bv.tolist() == [[1.0]]
    with pytest.raises(ValueError):
        ball_noise_model(0.0, 100, 2, 1)


def test_ball_noise_membership():
    nm = ball_noise_model(0.05, 100, 2, 2)
    V = sample_ball_noise(2, 98, 0.05, seed=3).T
    assert nm.contains(V)
    assert not nm.contains(3 * np.ones((2, 98)) * 0.05)


def test_ball_noise_boundary_saturates():
    nm = ball_noise_model(0.05, 50, 1, 1)
    V = np.full((1, 49), 0.05)
    F = nm.quadratic_form(V)
    assert nm.contains(V)
    assert np.trace(F) == pytest.approx(0.0, abs=1e-14)


def test_sampler_basics():
    assert not sample_ball_noise(2, 10, 0.0, seed=1).any()
    x = sample_ball_noise(3, 500, 0.2, seed=1)
    assert x.shape == (500, 3) and np.linalg.norm(x, axis=1).max() <= 0.2
    np.testing.assert_array_equal(x, sample_ball_noise(3, 500, 0.2, seed=1))
    with pytest.raises(ValueError):
        sample_ball_noise(1, 3, -1.0)


def test_sampler_mean_radius():
    v_bar = 0.05
    r = np.linalg.norm(sample_ball_noise(2, 100_000, v_bar, seed=0), axis=1)
    assert r.mean() == pytest.approx(2 * v_bar / 3, rel=1e-2)


def test_noise_model_validation():
    with pytest.raises(ValueError, match="negative definite"):
        NoiseModel(np.eye(2), np.zeros((2, 1)), np.eye(1), np.eye(1))
    with pytest.raises(ValueError, match="symmetric"):
        NoiseModel([[-1.0, 0.5], [0.0, -1.0]], np.zeros((2, 1)), np.eye(1), np.eye(1))
    with pytest.raises(DimensionError):
        NoiseModel(-np.eye(2), np.zeros((3, 1)), np.eye(1), np.eye(1))


def test_noise_model_json(tmp_path):
    path = tmp_path / "noise.json"
    path.write_text(json.dumps({"ball": {"v_bar": 0.1}}))
    nm = load_noise_model(path, N=20, l=2, m=1)
    assert nm.digest() == ball_noise_model(0.1, 20, 2, 1).digest()
    with pytest.raises(SchemaError):
        load_noise_model(path)
    path.write_text(json.dumps(nm.to_dict()))
    assert load_noise_model(path).digest() == nm.digest()
    path.write_text(json.dumps({"Q": [[-1.0]]}))
    with pytest.raises(SchemaError, match="missing"):
        load_noise_model(path)
    path.write_text("{")
    with pytest.raises(SchemaError, match="line"):
        load_noise_model(path)
    assert nm.digest() != ball_noise_model(0.2, 20, 2, 1).digest()


def test_difference_coefficients_reproduce_noise_free_data():
    ss = unstable_mimo()
    l = 4
    traj = simulate(ss, np.random.default_rng(1).standard_normal((40, 2)))
    Ct, Dt = difference_coefficients(ss, l)
    dm = build_data_matrices(traj, l)
    np.testing.assert_allclose(Ct @ dm.Xi + Dt @ dm.U, dm.Y, atol=1e-9 * np.abs(dm.Y).max())


def test_simulate_noisy_without_noise_is_simulate():
    ss = lowpass()
    u = np.random.default_rng(2).standard_normal((50, 1))
    a = simulate_noisy(ss, u, np.zeros((50, 1)))
    np.testing.assert_allclose(a.y, simulate(ss, u).y, atol=1e-12)


def test_simulate_noisy_noise_only_follows_recursion():
    ss = lowpass()
    v = sample_ball_noise(1, 30, 0.05, seed=4)
    traj = simulate_noisy(ss, np.zeros((30, 1)), v)
    np.testing.assert_allclose(traj.y[:2], v[:2])
    Ct, _ = difference_coefficients(ss, 2)
    dm = build_data_matrices(traj, 2)
    np.testing.assert_allclose(dm.Y - Ct @ dm.Xi, v[2:].T, atol=1e-15)


def test_simulate_noisy_dimension_checks():
    with pytest.raises(DimensionError):
        simulate_noisy(lowpass(), np.zeros((5, 1)), np.zeros((4, 1)))
    with pytest.raises(DimensionError):
        simulate_noisy(lowpass(), np.zeros((5, 2)), np.zeros((5, 1)))


@pytest.fixture(scope="module")
def lowpass_fixture():
    dm = noisy_data(lowpass(), 60, 0.3, seed=0)
    return dm, ball_noise_model(0.3, 60, 2, 1)


def test_consistency_set_inverts_assembled_matrix(lowpass_fixture):
    dm, nm = lowpass_fixture
    cs = build_consistency_set(dm, nm)
    M = assembled_matrix(dm, nm)
    assert np.abs(cs.matrix @ M - np.eye(M.shape[0])).max() <= 1e-8
    assert np.linalg.eigvalsh(cs.Qbar)[-1] < 0


def test_consistency_form_is_the_noise_quadratic_form(lowpass_fixture):
    dm, nm = lowpass_fixture
    cs = build_consistency_set(dm, nm)
    Z = np.vstack([dm.Xi, dm.U])
    rng = np.random.default_rng(0)
    for _ in range(5):
        Omega = cs.center + 0.1 * rng.standard_normal(cs.center.shape)
        F = nm.quadratic_form(dm.Y - Omega @ Z)
        np.testing.assert_allclose(cs.form(Omega[:, :4], Omega[:, 4:]), F, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("make,v_bar", [(lowpass, 0.05), (lowpass, 1e-6), (unstable_mimo, 0.01), (unstable_mimo, 1e-4)])
def test_true_coefficients_are_consistent(make, v_bar):
    ss = make()
    dm = noisy_data(ss, 200, v_bar, seed=7)
    cs = build_consistency_set(dm, ball_noise_model(v_bar, 200, ss.n, ss.m))
    assert cs.contains(*difference_coefficients(ss, ss.n))


def test_constant_input_without_noise_is_singular():
    ss = lowpass()
    traj = simulate(ss, np.ones((40, 1)))
    dm = build_data_matrices(traj, 2)
    with pytest.raises(SingularConsistency):
        build_consistency_set(dm, ball_noise_model(0.05, 40, 2, 1))


def test_unstable_data_with_tiny_noise_is_reported_singular():
    # the unstable mode makes late samples dwarf early ones; without enough
    # noise the weighted data matrix is not reliably invertible
    dm = noisy_data(unstable_mimo(), 200, 1e-6, seed=7)
    with pytest.raises(SingularConsistency, match="condition number"):
        build_consistency_set(dm, ball_noise_model(1e-6, 200, 4, 2))


def test_too_few_columns_is_singular():
    dm = noisy_data(unstable_mimo(), 12, 0.05, seed=1)
    with pytest.raises(SingularConsistency):
        build_consistency_set(dm, ball_noise_model(0.05, 12, 4, 2))


def test_noise_model_size_must_match_data(lowpass_fixture):
    dm, _ = lowpass_fixture
    with pytest.raises(DimensionError):
        build_consistency_set(dm, ball_noise_model(0.3, 61, 2, 1))


@pytest.mark.parametrize("alpha", [-0.8, 0.35])
def test_shifted_set_matches_rebuilt_set(lowpass_fixture, alpha):
    dm, nm = lowpass_fixture
    a = build_consistency_set(dm, nm).shifted(alpha)
    b = build_consistency_set(shift_data(dm, alpha), nm)
    np.testing.assert_allclose(a.center, b.center, atol=1e-9)
    np.testing.assert_allclose(a.Qbar, b.Qbar, rtol=1e-9, atol=1e-9 * np.abs(b.Qbar).max())
    np.testing.assert_allclose(a.Rhat, b.Rhat, rtol=1e-9)


def test_robust_lmi_rejects_unknown_side(lowpass_fixture):
    cs = build_consistency_set(*lowpass_fixture)
    with pytest.raises(ValueError):
        robust_gain_lmi(cs, L2, "sideways")


def test_noise_limit_recovers_nominal_gains():
    ss = lowpass()
    dm = noisy_data(ss, 200, 1e-6, seed=7)
    nm = ball_noise_model(1e-6, 200, 2, 1)
    assert robust_max_gain(dm, nm) == pytest.approx(max_gain(ss), abs=1e-2)
    assert robust_min_gain(dm, nm) == pytest.approx(min_gain(ss), abs=1e-2)


@pytest.fixture(scope="module")
def lowpass_200():
    ss = lowpass()
    nominal = build_data_matrices(simulate(ss, np.random.default_rng(7).standard_normal((200, 1))), 2)
    return ss, nominal


@pytest.mark.parametrize("alpha", [0.0, 0.2])
def test_robust_annulus_contains_nominal(lowpass_200, alpha):
    ss, nominal = lowpass_200
    dm = noisy_data(ss, 200, 0.05, seed=7)
    nm = ball_noise_model(0.05, 200, 2, 1)
    rob = robust_gain_annulus(dm, nm, alpha)
    nom = gain_annulus_data(nominal, alpha)
    assert rob.gamma >= nom.gamma - 1e-6
    assert rob.zeta <= nom.zeta + 1e-6


def test_unstable_truncated_robust_gain_is_infinite():
    ss = unstable_mimo()
    dm = noisy_data(ss, 200, 0.01, seed=2)
    assert robust_max_gain(dm, ball_noise_model(0.01, 200, 4, 2), TRUNC) == np.inf


@settings(max_examples=3, deadline=None)
@given(st.integers(0, 1000))
def test_larger_noise_bound_gives_looser_gains(seed):
    ss = random_minimal_system(np.random.default_rng(seed), 2, 1)
    dm = noisy_data(ss, 120, 0.01, seed=seed)
    gammas, zetas = [], []
    for v_bar in (0.01, 0.03, 0.1):
        nm = ball_noise_model(v_bar, 120, 2, 1)
        gammas.append(robust_max_gain(dm, nm))
        zetas.append(robust_min_gain(dm, nm))
    tol = 1e-5
    assert all(b >= a * (1 - tol) for a, b in zip(gammas, gammas[1:]))
    assert all(b <= a * (1 + tol) + 1e-9 for a, b in zip(zetas, zetas[1:]))
