import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from oracles import crump_scan
from ppta import rng
from ppta.comparators import (
    EstimationError,
    MethodSpec,
    bootstrap_interval,
    crump_trim,
    crump_weights,
    estimate,
    iptw_weights,
    overlap_weights,
    parse_method,
    weighted_difference,
)
from ppta.data import Dataset
from ppta.propensity import fit_propensity_mle
from ppta.simulation import generate_dataset

score_lists = st.lists(st.floats(1e-4, 1 - 1e-4), min_size=2, max_size=60)


def test_iptw_half_scores():
    w = iptw_weights(np.full(6, 0.5), [1, 0, 1, 0, 1, 0])
    np.testing.assert_array_equal(w.weights, 2.0)


def test_iptw_cap():
    w = iptw_weights([0.005, 0.5], [1, 0], cap=50)
    assert w.weights[0] == 50 and w.truncation_cap == 50
    assert iptw_weights([0.005], [1]).weights[0] == pytest.approx(200)


def test_iptw_values():
    w = iptw_weights([0.8, 0.8], [1, 0])
    np.testing.assert_allclose(w.weights, [1.25, 5.0])


def test_overlap_values():
    np.testing.assert_array_equal(overlap_weights(np.full(4, 0.5), [1, 0, 1, 0]).weights, 0.5)
    np.testing.assert_allclose(overlap_weights([0.9, 0.9], [1, 0]).weights, [0.1, 0.9])


def test_crump_homogeneous_keeps_all():
    alpha, kept = crump_trim(np.full(5, 0.5))
    assert kept.all()
    assert alpha == pytest.approx(0.5)  # 1/lam = 1/4


def test_crump_drops_extreme_unit():
    e = np.array([0.5, 0.5, 0.5, 0.999])
    _, kept = crump_trim(e)
    assert kept.tolist() == [True, True, True, False]
    assert np.array_equal(kept, crump_scan(e))


@settings(max_examples=200, deadline=None)
@given(score_lists)
def test_crump_matches_threshold_scan(scores):
    e = np.array(scores)
    _, kept = crump_trim(e)
    assert np.array_equal(kept, crump_scan(e))


@settings(max_examples=200, deadline=None)
@given(score_lists)
def test_crump_kept_is_score_interval(scores):
    e = np.array(scores)
    alpha, kept = crump_trim(e)
    assert 0 < alpha <= 0.5
    tol = 1e-9
    inside = (e >= alpha + tol) & (e <= 1 - alpha - tol)
    outside = (e < alpha - tol) | (e > 1 - alpha + tol)
    assert kept[inside].all()
    assert not kept[outside].any()


def test_crump_superset_property_fails_in_general():
    # moving a score towards 0.5 can lower the mean of 1/(e(1-e)) enough
    # to drop a unit that was previously kept
    def score(h):
        return 0.5 - np.sqrt(0.25 - 1 / h)

    before = np.array([score(4), score(10), score(19)])
    after = np.array([score(4), score(4), score(19)])
    assert crump_trim(before)[1].all()
    assert not crump_trim(after)[1][2]


def test_crump_weights_zero_outside():
    e = np.array([0.5, 0.4, 0.6, 0.999, 0.001, 0.55])
    a = np.array([1, 0, 1, 1, 0, 0])
    w = crump_weights(e, a)
    assert np.all((w.weights == 0) == ~w.kept)


def test_equal_scores_give_plain_difference():
    gen = np.random.default_rng(0)
    a = np.array([1, 0] * 10)
    y = gen.normal(size=20)
    d = Dataset(np.zeros((20, 1)), a, y)
    plain = y[a == 1].mean() - y[a == 0].mean()
    e = np.full(20, 0.5)
    for w in (iptw_weights(e, a), iptw_weights(e, a, cap=1.5), overlap_weights(e, a), crump_weights(e, a)):
        assert weighted_difference(d, w) == pytest.approx(plain, abs=1e-12)


def test_iptw_hand_computation():
    d = Dataset(np.zeros((4, 1)), [1, 0, 1, 0], [3, 1, 2, 0])
    w = iptw_weights([0.8, 0.8, 0.2, 0.2], d.treatment)
    # treated: (1.25*3 + 5*2)/6.25 = 2.2 ; control: (5*1 + 1.25*0)/6.25 = 0.8
    assert weighted_difference(d, w) == pytest.approx(1.4, abs=1e-12)


def test_overlap_hand_computation():
    d = Dataset(np.zeros((4, 1)), [1, 1, 0, 0], [4, 2, 1, 0])
    w = overlap_weights([0.9, 0.5, 0.3, 0.5], d.treatment)
    expected = (0.1 * 4 + 0.5 * 2) / 0.6 - (0.3 * 1 + 0.5 * 0) / 0.8
    assert weighted_difference(d, w) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(1.9583, abs=1e-4)


def test_zero_weight_arm_named():
    d = Dataset(np.zeros((4, 1)), [1, 1, 0, 0], [1, 2, 3, 4])
    with pytest.raises(EstimationError, match="control"):
        weighted_difference(d, np.array([1.0, 1.0, 0.0, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 10_000))
def test_scale_invariance(c, seed):
    d = random_dataset(seed, n=30)
    w = np.random.default_rng(seed).random(30) + 0.01
    assert weighted_difference(d, c * w) == pytest.approx(weighted_difference(d, w), rel=1e-10, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(score_lists, st.floats(1.0, 500.0), st.floats(1.0, 500.0))
def test_truncation_monotone(scores, c1, c2):
    lo, hi = sorted((c1, c2))
    e = np.array(scores)
    a = (np.arange(e.size) % 2).astype(int)
    full = iptw_weights(e, a).weights
    d_lo = np.max(np.abs(full - iptw_weights(e, a, cap=lo).weights))
    d_hi = np.max(np.abs(full - iptw_weights(e, a, cap=hi).weights))
    assert d_hi <= d_lo
    assert np.all(iptw_weights(e, a, cap=lo).weights <= lo)


@pytest.mark.parametrize("seed", range(5))
def test_overlap_exact_balance_at_mle(seed):
    d = random_dataset(seed, n=300, p=4, strength=1.5)
    fit = fit_propensity_mle(d)
    assert fit.converged
    w = overlap_weights(fit.scores, d.treatment).weights
    a = d.treatment == 1
    mt = w[a] @ d.covariates[a] / w[a].sum()
    mc = w[~a] @ d.covariates[~a] / w[~a].sum()
    assert np.max(np.abs(mt - mc)) < 1e-6


def test_parse_method_labels():
    assert parse_method("iptw-trunc:50") == MethodSpec("iptw_trunc", 50.0)
    assert parse_method("iptw_trunc10").cap == 10
    assert parse_method("IPTW").name == "iptw"
    assert parse_method("iptw-trunc:50").label == "iptw_trunc50"
    assert parse_method("iptw-trunc:50").cli_label == "iptw-trunc:50"
    for bad in ("ipw", "iptw-trunc:0", "iptw-trunc:x"):
        with pytest.raises(ValueError):
            parse_method(bad)


def test_bootstrap_constant_outcome():
    d = random_dataset(1, n=80)
    d = d.with_outcome(np.full(80, 2.0))
    lo, hi = bootstrap_interval(d, parse_method("overlap"), reps=200, gen=np.random.default_rng(0))
    assert abs(lo) < 1e-10 and abs(hi) < 1e-10


def test_bootstrap_requires_100_reps():
    with pytest.raises(ValueError):
        bootstrap_interval(random_dataset(1), parse_method("iptw"), reps=50)


@pytest.mark.parametrize("method", ["iptw", "iptw-trunc:10", "crump", "overlap"])
def test_bootstrap_interval_contains_point(method):
    d, _ = generate_dataset(500, 5, 1.0, rng.stream(77, rng.DATA, 0, 0))
    spec = parse_method(method)
    point, _ = estimate(d, spec)
    lo, hi = bootstrap_interval(d, spec, reps=200, gen=np.random.default_rng(1))
    assert lo <= point <= hi


def test_bootstrap_is_seeded():
    d = random_dataset(5, n=100)
    spec = parse_method("crump")
    r1 = bootstrap_interval(d, spec, reps=100, seed=4)
    r2 = bootstrap_interval(d, spec, reps=100, seed=4)
    assert r1 == r2


@pytest.mark.slow
def test_bootstrap_coverage_b0():
    covered = 0
    reps = 200
    spec = parse_method("overlap")
    for r in range(reps):
        d, _ = generate_dataset(500, 5, 0.0, rng.stream(900, rng.DATA, 0, r))
        lo, hi = bootstrap_interval(d, spec, reps=200, gen=rng.stream(900, rng.BOOTSTRAP, r))
        covered += lo <= 0.2 <= hi
    assert covered / reps >= 0.88
