import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_minimal_system, static
from srgkit.errors import DimensionError, NotObservableError, SchemaError, SingularFeedthrough, UnitCirclePole
from srgkit.lti import (
    OperatorKind,
    StateSpace,
    Trajectory,
    freq_response,
    hankel,
    inverse_system,
    is_persistently_exciting,
    lag,
    load_state_space,
    load_trajectory,
    observability_matrix,
    pe_order,
    save_state_space,
    save_trajectory,
    shift_output,
    simulate,
)
from srgkit.models import highpass, lowpass, unstable_mimo

SCALAR = StateSpace([[0.5]], [[1.0]], [[1.0]], [[0.0]])


def test_simulate_markov_parameters():
    y = simulate(SCALAR, [1.0, 0.0, 0.0]).y.ravel()
    np.testing.assert_allclose(y, [0.0, 1.0, 0.5])


def test_simulate_lowpass_impulse_starts_with_d_then_cb():
    y = simulate(lowpass(), [1.0, 0.0, 0.0, 0.0]).y.ravel()
    np.testing.assert_allclose(y[:2], [0.10, 0.29], atol=1e-15)


def test_simulate_zero_input_gives_zero_output():
    traj = simulate(unstable_mimo(), np.zeros((20, 2)))
    assert not traj.y.any()


def test_simulate_rejects_wrong_width():
    with pytest.raises(DimensionError):
        simulate(lowpass(), np.zeros((5, 2)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_simulate_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    ss = random_minimal_system(rng, 3, 2)
    u1, u2 = rng.standard_normal((2, 30, 2))
    y = simulate(ss, a * u1 + b * u2).y
    expected = a * simulate(ss, u1).y + b * simulate(ss, u2).y
    np.testing.assert_allclose(y, expected, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(expected).max()))


def test_statespace_dimension_checks():
    with pytest.raises(DimensionError):
        StateSpace([[1.0]], [[1.0, 0.0]], [[1.0]], [[0.0]])
    with pytest.raises(DimensionError):
        StateSpace([[1.0]], [[1.0]], [[1.0]], [[0.0, 1.0], [1.0, 0.0]])


def test_static_gain_is_legal():
    ss = static(2.0)
    assert ss.n == 0 and lag(ss) == 0
    np.testing.assert_allclose(simulate(ss, [1.0, -1.0]).y.ravel(), [2.0, -2.0])


def test_lag_full_state_measurement_is_one():
    ss = StateSpace(np.diag([0.1, 0.2]), np.eye(2), np.eye(2), np.zeros((2, 2)))
    assert lag(ss) == 1


def _rank_sweep(ss):
    for depth in range(1, ss.n + 1):
        O = np.vstack([ss.C @ np.linalg.matrix_power(ss.A, i) for i in range(depth)])
        if np.linalg.matrix_rank(O) == ss.n:
            return depth
    return None


@pytest.mark.parametrize("make", [lowpass, highpass, unstable_mimo])
def test_lag_matches_independent_rank_sweep(make):
    ss = make()
    assert lag(ss) == _rank_sweep(ss)


def test_lag_of_filters_is_two():
    assert lag(lowpass()) == 2


def test_lag_unobservable():
    ss = StateSpace(np.diag([0.5, 0.3]), [[1.0], [1.0]], [[1.0, 0.0]], [[0.0]])
    with pytest.raises(NotObservableError):
        lag(ss)


def test_observability_matrix_blocks():
    ss = lowpass()
    O = observability_matrix(ss, 2)
    np.testing.assert_allclose(O, np.vstack([ss.C, ss.C @ ss.A]))


def test_hankel_examples():
    np.testing.assert_array_equal(hankel([1, 2, 3, 4], 2), [[1, 2, 3], [2, 3, 4]])
    np.testing.assert_array_equal(hankel([1, 2, 3, 4], 1), [[1, 2, 3, 4]])
    u = np.array([[1, 2], [3, 4], [5, 6]])
    H = hankel(u, 2)
    assert H.shape == (4, 2)
    np.testing.assert_array_equal(H, [[1, 3], [2, 4], [3, 5], [4, 6]])


def test_hankel_depth_errors():
    with pytest.raises(DimensionError):
        hankel([1, 2, 3], 4)
    with pytest.raises(DimensionError):
        hankel([1, 2, 3], 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.integers(1, 5))
def test_hankel_first_block_row_is_the_signal(values, L):
    L = min(L, len(values))
    H = hankel(values, L)
    np.testing.assert_array_equal(H[0], values[:len(values) - L + 1])


def test_persistency_of_excitation_examples():
    assert not is_persistently_exciting([1, 0, 0, 0, 0], 2)
    assert is_persistently_exciting([1, 2, 3, 4], 2)
    u = np.random.default_rng(11).uniform(-1, 1, (50, 2))
    assert is_persistently_exciting(u, 7)


def test_pe_order_of_impulse_is_one():
    assert pe_order([1, 0, 0, 0, 0]) == 1


def test_shift_output():
    ss = lowpass()
    assert shift_output(ss, 0.0) is ss
    assert shift_output(static(2.0), 2.0).D[0, 0] == 0.0
    np.testing.assert_allclose(shift_output(ss, 0.10).D, [[0.0]], atol=1e-15)


def test_freq_response_of_shift_is_exact():
    ss = unstable_mimo()
    th = np.linspace(0, np.pi, 17)
    a = 0.37
    np.testing.assert_array_equal(freq_response(shift_output(ss, a), th), freq_response(ss, th) - a * np.eye(2))


def test_inverse_system_scalar_example():
    inv = inverse_system(StateSpace([[0.5]], [[1.0]], [[1.0]], [[2.0]]))
    np.testing.assert_allclose([inv.A[0, 0], inv.B[0, 0], inv.C[0, 0], inv.D[0, 0]], [0.0, 0.5, -0.5, 0.5])


def test_inverse_system_identity_feedthrough():
    A = np.diag([0.3, -0.2])
    B = np.array([[1.0, 0.0], [0.5, 1.0]])
    inv = inverse_system(StateSpace(A, B, np.zeros((2, 2)), np.eye(2)))
    np.testing.assert_allclose(inv.A, A)
    np.testing.assert_allclose(inv.B, B)
    np.testing.assert_allclose(inv.C, 0.0)
    np.testing.assert_allclose(inv.D, np.eye(2))


def test_inverse_round_trip_recovers_input():
    rng = np.random.default_rng(5)
    ss = random_minimal_system(rng, 3, 1)
    u = rng.standard_normal((40, 1))
    y = simulate(ss, u).y
    np.testing.assert_allclose(simulate(inverse_system(ss), y).y, u, atol=1e-10 * max(1, np.abs(u).max()))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_double_inverse_is_identity(seed):
    ss = random_minimal_system(np.random.default_rng(seed), 2, 2)
    if np.linalg.cond(ss.D) > 1e4:
        return
    back = inverse_system(inverse_system(ss))
    for X, Y in zip((back.A, back.B, back.C, back.D), (ss.A, ss.B, ss.C, ss.D)):
        np.testing.assert_allclose(X, Y, atol=1e-10 * max(1.0, np.abs(Y).max()) * np.linalg.cond(ss.D))


def test_inverse_system_singular_feedthrough():
    with pytest.raises(SingularFeedthrough):
        inverse_system(unstable_mimo())


def test_freq_response_examples():
    assert freq_response(static(2.0), 0.7)[0, 0] == 2.0
    ss = lowpass()
    G0 = (ss.C @ np.linalg.solve(np.eye(2) - ss.A, ss.B) + ss.D)[0, 0]
    assert freq_response(ss, 0.0)[0, 0].real == pytest.approx(G0, rel=1e-12)
    assert abs(freq_response(ss, 0.0)[0, 0]) == pytest.approx(1.0231, abs=1e-4)
    assert abs(freq_response(highpass(), np.pi)[0, 0]) == pytest.approx(1.0017, abs=1e-4)


def test_freq_response_unit_circle_pole():
    with pytest.raises(UnitCirclePole):
        freq_response(StateSpace([[1.0]], [[1.0]], [[1.0]], [[0.0]]), np.linspace(0, np.pi, 5))


def test_operator_kind_parse():
    assert OperatorKind.parse("trunc") is OperatorKind.TRUNCATED_LIMIT
    assert OperatorKind.parse("L2") is OperatorKind.L2
    assert OperatorKind.TRUNCATED_LIMIT.requires_psd and not OperatorKind.L2.requires_psd
    with pytest.raises(ValueError):
        OperatorKind.parse("hinf")


def test_trajectory_shape_checks():
    with pytest.raises(DimensionError):
        Trajectory(np.zeros((3, 1)), np.zeros((4, 1)))


def test_state_space_json_round_trip(tmp_path):
    ss = unstable_mimo()
    path = tmp_path / "m.json"
    save_state_space(ss, path)
    back = load_state_space(path)
    np.testing.assert_array_equal(back.A, ss.A)
    np.testing.assert_array_equal(back.D, ss.D)


def test_state_space_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"A": [[1]], "B": [[1]]}')
    with pytest.raises(SchemaError):
        load_state_space(bad)
    bad.write_text('{"A": [[1]]')
    with pytest.raises(SchemaError, match="line"):
        load_state_space(bad)


@pytest.mark.parametrize("suffix", [".json", ".csv"])
def test_trajectory_round_trip(tmp_path, suffix):
    traj = simulate(unstable_mimo(), np.random.default_rng(0).standard_normal((12, 2)))
    path = tmp_path / f"t{suffix}"
    save_trajectory(traj, path)
    back = load_trajectory(path)
    np.testing.assert_array_equal(back.u, traj.u)
    np.testing.assert_array_equal(back.y, traj.y)


def test_trajectory_csv_errors(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("u_1,y_1\n1,2\n3\n")
    with pytest.raises(SchemaError, match="line 3"):
        load_trajectory(path)
    path.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError, match="header"):
        load_trajectory(path)


def test_trajectory_json_needs_both_fields(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"u": [[1.0]]}))
    with pytest.raises(SchemaError):
        load_trajectory(path)
