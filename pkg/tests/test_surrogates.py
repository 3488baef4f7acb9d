"""Tests for surrogate gradients and their top-k unbiased estimators.

Expectations over the randomized ranking are computed exactly: with
probability 1 - gamma the deterministic order is shown, otherwise every one
of the m! orders is equally likely.
"""

from __future__ import annotations
import math

import numpy as np
import pytest

from topkrank.core import ConfigError, ContractError, Permutation, RelevanceVector, TopKFeedback
from topkrank.core import argsort_desc, enumerate_permutations, make_rng
from topkrank.surrogates import (
    Propensities,
    SurrogateId,
    SurrogateKind,
    decomposability_counterexamples,
    estimate_gradient,
    gradient,
    operator_norm_1_to_2,
    propensity_top1,
    propensity_top2,
    second_moment_bound,
    value,
)

M, D = 5, 4
ESTIMATED = [
    SurrogateId(kind=SurrogateKind.SQUARED),
    SurrogateId(kind=SurrogateKind.KL),
    SurrogateId(kind=SurrogateKind.SMOOTH_DCG, epsilon=0.5),
    SurrogateId(kind=SurrogateKind.RANKSVM),
]

def _instance(seed: int):
    """Unit feature rows, a unit weight vector and graded relevance."""
    rng = make_rng(seed)
    X = rng.standard_normal((M, D))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    w = rng.standard_normal(D)
    w /= np.linalg.norm(w)
    R = RelevanceVector(np.array([1, 0, 1, 1, 0]))
    return X, w, R

def _moments(sid: SurrogateId, X, s, R, gamma: float):
    """Exact first and second moment of the estimator over the randomized ranking."""
    sigma = argsort_desc(s, make_rng(0))
    pr = Propensities.from_order(gamma, sigma.rank_to_item)
    k = sid.required_k(M)

    def z_of(perm: Permutation) -> np.ndarray:
        return estimate_gradient(sid, s, TopKFeedback.observe(perm, R, k), pr, X)

    perms = enumerate_permutations(M)
    z_det = z_of(sigma)
    zs = [z_of(p) for p in perms]
    mean = (1.0 - gamma) * z_det + gamma * np.mean(zs, axis=0)
    second = (1.0 - gamma) * float(z_det @ z_det) + gamma * float(np.mean([z @ z for z in zs]))
    return mean, second

# ---------------------------
# Values and gradients
# ---------------------------
def test_surrogate_values():
    R = np.array([1.0, 0.0, 2.0])
    assert value(SurrogateId(kind=SurrogateKind.SQUARED), R, R) == 0.0
    assert value(SurrogateId(kind=SurrogateKind.KL), R, R) == pytest.approx(0.0, abs=1e-12)
    assert value(SurrogateId(kind=SurrogateKind.KL), R + 0.1, R) > 0.0
    smooth = SurrogateId(kind=SurrogateKind.SMOOTH_DCG, epsilon=0.5)
    assert value(smooth, np.array([1.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(math.e**2 / (math.e**2 + 1.0))

def test_gradient_known_values():
    sq = SurrogateId(kind=SurrogateKind.SQUARED)
    np.testing.assert_allclose(gradient(sq, np.array([1.0, 0.0]), np.array([0.0, 0.0])), [2.0, 0.0])
    svm = SurrogateId(kind=SurrogateKind.RANKSVM)
    R = RelevanceVector.from_bits("10")
    np.testing.assert_allclose(gradient(svm, np.array([0.0, 0.0]), R), [-1.0, 1.0])
    np.testing.assert_allclose(gradient(svm, np.array([2.0, 0.0]), R), [0.0, 0.0])

@pytest.mark.parametrize("sid", ESTIMATED + [SurrogateId(kind=SurrogateKind.LISTNET)], ids=str)
def test_gradients_match_finite_differences(sid):
    rng = make_rng(21)
    h = 1e-6
    for _ in range(20):
        s = rng.standard_normal(M)
        R = rng.integers(0, 3, size=M).astype(np.float64)
        numeric = np.array(
            [(value(sid, s + h * e, R) - value(sid, s - h * e, R)) / (2 * h) for e in np.eye(M)]
        )
        np.testing.assert_allclose(gradient(sid, s, R), numeric, rtol=1e-5, atol=1e-6)

# ---------------------------
# Propensities and estimators
# ---------------------------
def test_propensities():
    pr = Propensities(gamma=0.1, m=5, top1=3, top2=1)
    assert propensity_top1(pr, 3) == pytest.approx(0.92)
    assert propensity_top1(pr, 0) == pytest.approx(0.02)
    assert propensity_top2(pr, 3, 1) == pytest.approx(0.905)
    assert propensity_top2(pr, 1, 3) == pytest.approx(0.005)
    with pytest.raises(ConfigError):
        Propensities(gamma=0.5, m=5, top1=0)

def test_squared_estimator_arithmetic():
    # gamma = 0.2, m = 2: the top item is shown first with probability 0.9.
    pr = Propensities(gamma=0.2, m=2, top1=0, top2=1)
    s = np.array([0.2, 0.1])
    fb = TopKFeedback(perm=Permutation([0, 1]), k=1, revealed=np.array([1]))
    z = estimate_gradient(SurrogateId(kind=SurrogateKind.SQUARED), s, fb, pr, np.eye(2))
    np.testing.assert_allclose(z, [2.0 * (0.2 - 1.0 / 0.9), 0.2], atol=1e-12)

def test_estimator_contracts():
    s = np.zeros(3)
    pr = Propensities(gamma=0.1, m=3, top1=0, top2=1)
    fb1 = TopKFeedback.observe(Permutation.identity(3), RelevanceVector.from_bits("101"), 1)
    with pytest.raises(ContractError):
        estimate_gradient(SurrogateId(kind=SurrogateKind.RANKSVM), s, fb1, pr, np.eye(3))
    with pytest.raises(ContractError):
        estimate_gradient(SurrogateId(kind=SurrogateKind.LISTNET), s, fb1, pr, np.eye(3))

def test_full_depth_feedback_returns_exact_gradient():
    X, w, R = _instance(3)
    s = X @ w
    sid = SurrogateId(kind=SurrogateKind.KL)
    pr = Propensities(gamma=0.1, m=M, top1=0, top2=1)
    fb = TopKFeedback.observe(Permutation.identity(M), R, M)
    np.testing.assert_allclose(estimate_gradient(sid, s, fb, pr, X), X.T @ gradient(sid, s, R), atol=1e-12)

@pytest.mark.parametrize("gamma", [0.1, 0.3])
@pytest.mark.parametrize("sid", ESTIMATED, ids=str)
def test_estimators_are_unbiased(sid, gamma):
    X, w, R = _instance(7)
    s = X @ w
    mean, _ = _moments(sid, X, s, R, gamma)
    np.testing.assert_allclose(mean, X.T @ gradient(sid, s, R), rtol=1e-9, atol=1e-10)

def _random_config(seed: int):
    """Random unit feature rows, scores inside the unit ball, graded relevance and gamma."""
    rng = make_rng(seed, stream=1)
    X = rng.standard_normal((M, D))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    w = rng.standard_normal(D)
    w *= rng.uniform(0.1, 1.0) / np.linalg.norm(w)
    R = RelevanceVector(rng.integers(0, 3, size=M), max_grade=2)
    return X, X @ w, R, float(rng.uniform(0.05, 0.45))

@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("sid", ESTIMATED, ids=str)
def test_estimators_are_unbiased_on_random_configs(sid, seed):
    X, s, R, gamma = _random_config(seed)
    mean, _ = _moments(sid, X, s, R, gamma)
    np.testing.assert_allclose(mean, X.T @ gradient(sid, s, R), rtol=1e-9, atol=1e-10)

@pytest.mark.parametrize("sid", ESTIMATED[:2], ids=str)
def test_sampled_estimator_mean_within_standard_errors(sid):
    X, w, R = _instance(9)
    s = X @ w
    gamma = 0.3
    sigma = argsort_desc(s, make_rng(0))
    pr = Propensities.from_order(gamma, sigma.rank_to_item)
    rng = make_rng(13)
    draws = []
    for _ in range(5000):
        perm = argsort_desc(rng.uniform(0.0, 1.0, M), rng) if rng.random() < gamma else sigma
        draws.append(estimate_gradient(sid, s, TopKFeedback.observe(perm, R, 1), pr, X))
    draws = np.array(draws)
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - X.T @ gradient(sid, s, R)) <= 4.0 * se + 1e-12)

@pytest.mark.parametrize("gamma", [0.1, 0.3])
@pytest.mark.parametrize("sid", ESTIMATED, ids=str)
def test_second_moment_within_bound(sid, gamma):
    X, w, R = _instance(17)
    _, second = _moments(sid, X, X @ w, R, gamma)
    assert second <= second_moment_bound(sid, M, r_d=1.0, u=1.0, r_max=1.0, gamma=gamma)

def test_second_moment_bound_guards():
    with pytest.raises(ConfigError):
        second_moment_bound(SurrogateId(kind=SurrogateKind.KL), 5, 1.0, 1.0, 1.0, gamma=0.0)
    with pytest.raises(ContractError):
        second_moment_bound(SurrogateId(kind=SurrogateKind.LISTNET), 5, 1.0, 1.0, 1.0, gamma=0.1)

def test_operator_norm():
    assert operator_norm_1_to_2(np.array([[3.0, 4.0], [0.0, 1.0]])) == 5.0
    assert operator_norm_1_to_2(np.eye(3)) == 1.0

def test_operator_norm_matches_sampled_supremum():
    rng = make_rng(31)
    X = rng.standard_normal((5, 3))
    # Cubed Cauchy draws are often close to one-hot, where the supremum is attained.
    V = rng.standard_cauchy((10_000, 5)) ** 3
    ratios = np.linalg.norm(V @ X, axis=1) / np.abs(V).sum(axis=1)
    exact = operator_norm_1_to_2(X)
    assert ratios.max() <= exact * (1.0 + 1e-12)
    assert ratios.max() >= 0.99 * exact

def test_kl_surrogate_is_convex_along_segments():
    rng = make_rng(32)
    sid = SurrogateId(kind=SurrogateKind.KL)
    for _ in range(100):
        a, b = rng.normal(scale=2.0, size=(2, M))
        R = rng.integers(0, 4, size=M).astype(np.float64)
        mid = value(sid, (a + b) / 2.0, R)
        assert mid <= (value(sid, a, R) + value(sid, b, R)) / 2.0 + 1e-9

# ---------------------------
# Identifiers and decomposability
# ---------------------------
def test_surrogate_id_parse():
    assert SurrogateId.parse("SmoothDCG").kind == SurrogateKind.SMOOTH_DCG
    assert SurrogateId.parse("rank-svm").kind == SurrogateKind.RANKSVM
    with pytest.raises(ConfigError):
        SurrogateId.parse("lambdarank")

def test_required_depth():
    assert SurrogateId(kind=SurrogateKind.KL).required_k(10) == 1
    assert SurrogateId(kind=SurrogateKind.RANKSVM).required_k(10) == 2
    assert SurrogateId(kind=SurrogateKind.LISTNET).required_k(10) == 10
    assert not SurrogateId(kind=SurrogateKind.SMOOTH_DCG).convex
    assert SurrogateId(kind=SurrogateKind.SMOOTH_DCG).maximize

def test_decomposability_counterexamples():
    report = decomposability_counterexamples()
    assert report.ranksvm_deltas == (0.0, 2.0)
    assert not report.ranksvm_decomposable
    assert abs(report.listnet_mixed_partial) > 1e-3
    assert abs(report.squared_max_mixed_partial) < 1e-6
