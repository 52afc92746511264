from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagmpc.mpc import MpcConfig, Status
from lagmpc.plant import BoxSet
from lagmpc.sampling import (ConstraintSet, bounding_box, first_primes, generate_dataset,
                             halton_point, halton_sample_states, radical_inverse,
                             radical_inverse_exact)


def digits_oracle(p, n):
    """Radical inverse by writing n in base p as a string and mirroring it."""
    if n == 0:
        return Fraction(0)
    ds = []
    while n:
        ds.append(n % p)
        n //= p
    return sum(Fraction(d, p ** (k + 1)) for k, d in enumerate(ds))


def test_radical_inverse_examples():
    assert radical_inverse(2, 0) == 0
    assert radical_inverse(2, 3) == 0.75
    assert radical_inverse(3, 5) == pytest.approx(7 / 9, abs=1e-15)


@given(st.sampled_from([2, 3, 5, 7, 11, 13]), st.integers(0, 10**9))
def test_radical_inverse_matches_digit_oracle(p, n):
    assert radical_inverse_exact(p, n) == digits_oracle(p, n)
    assert 0 <= radical_inverse(p, n) < 1


def test_radical_inverse_rejects_bad_args():
    with pytest.raises(ValueError):
        radical_inverse(4, 3)
    with pytest.raises(ValueError):
        radical_inverse(2, -1)


def test_first_primes():
    assert first_primes(6) == [2, 3, 5, 7, 11, 13]


def test_halton_point_examples():
    np.testing.assert_allclose(halton_point(2, 1), [0.5, 1 / 3])
    np.testing.assert_allclose(halton_point(2, 2), [0.25, 2 / 3])
    np.testing.assert_allclose(halton_point(1, 4), [0.125])


def test_bounding_box():
    X = BoxSet([0.01, -20], [2, 0])
    assert bounding_box(X) is X
    ball = ConstraintSet(lambda x: x @ x <= 1, BoxSet([-1, -1], [1, 1]))
    np.testing.assert_array_equal(bounding_box(ball).lower, [-1, -1])
    with pytest.raises(ValueError):
        bounding_box(BoxSet([0.0, 0.0], [0.0, 1.0]))


def test_samples_unit_square():
    np.testing.assert_allclose(halton_sample_states(BoxSet([0, 0], [1, 1]), 2),
                               [[0.5, 1 / 3], [0.25, 2 / 3]])


def test_samples_affine_map():
    (x,) = halton_sample_states(BoxSet([0.01, -20], [2, 0]), 1)
    np.testing.assert_allclose(x, [1.005, -13.333333], atol=1e-6)


def test_rejection_keeps_only_members():
    X = ConstraintSet(lambda x: x[0] + x[1] <= 0, BoxSet([-1, -1], [1, 1]))
    stats = {}
    pts = halton_sample_states(X, 100, stats=stats)
    assert len(pts) == 100
    assert all(p[0] + p[1] <= 0 for p in pts)
    assert stats["tried"] - stats["rejected"] == 100
    assert stats["rejected"] > 0


def test_samples_are_distinct_and_ordered():
    X = ConstraintSet(lambda x: x @ x <= 1, BoxSet([-1, -1], [1, 1]))
    a = halton_sample_states(X, 300)
    assert len({tuple(p) for p in a}) == 300
    # a longer request extends the shorter one
    b = halton_sample_states(X, 400)
    np.testing.assert_array_equal(a, b[:300])


def test_zero_measure_set_hits_cap():
    X = ConstraintSet(lambda x: False, BoxSet([0, 0], [1, 1]))
    with pytest.raises(RuntimeError):
        halton_sample_states(X, 5, max_index=1000)


def test_low_discrepancy_coverage():
    pts = np.array(halton_sample_states(BoxSet([0, 0], [1, 1]), 1024))
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=8, range=[[0, 1], [0, 1]])
    assert counts.min() >= 12 and counts.max() <= 20


@pytest.fixture(scope="module")
def small_dataset(cfg, plant, basis):
    states = halton_sample_states(cfg.X, 12)
    return states, generate_dataset(cfg, plant, states, basis=basis)


def test_dataset_equilibrium(cfg, plant, basis):
    ds = generate_dataset(cfg, plant, [cfg.x_ss], basis=basis)
    assert len(ds) == 1
    assert ds.u_star[0] == pytest.approx(0.4, abs=1e-4)
    assert np.linalg.norm(ds.eta_star[0]) <= 1e-4


def test_dataset_drops_infeasible(cfg, plant):
    states = [np.array([1.0, -5.0]), np.array([2.0, -20.0]), np.array([0.5, -10.0])]
    ds = generate_dataset(cfg, plant, states)
    assert len(ds) == 2
    assert ds.counts[Status.INFEASIBLE.value] == 1
    np.testing.assert_array_equal(ds.x, [states[0], states[2]])
    assert ds.eta_star is None and not ds.laguerre


def test_dataset_records_are_certified(small_dataset, cfg, plant):
    _, ds = small_dataset
    assert ds.n_requested == 12 and len(ds) <= 12
    for x, U in zip(ds.x, ds.U_star):
        xs = plant.rollout(x, U)
        assert cfg.X.max_violation(xs[1:]) <= cfg.constr_tol
    assert all(s == "Converged" for s in ds.status)
    np.testing.assert_array_equal(ds.u_star, ds.U_star[:, 0])


def test_dataset_parallel_matches_serial(small_dataset, cfg, plant, basis):
    states, serial = small_dataset
    par = generate_dataset(cfg, plant, states, basis=basis, workers=2, chunksize=3)
    np.testing.assert_array_equal(par.x, serial.x)
    np.testing.assert_array_equal(par.U_star, serial.U_star)
    np.testing.assert_array_equal(par.eta_star, serial.eta_star)


def test_dataset_rejects_outside_states(cfg, plant):
    with pytest.raises(ValueError):
        generate_dataset(cfg, plant, [np.array([5.0, 0.0])])


def test_dataset_subset(small_dataset):
    _, ds = small_dataset
    sub = ds.subset([0, 2])
    assert len(sub) == 2
    np.testing.assert_array_equal(sub.x[1], ds.x[2])
