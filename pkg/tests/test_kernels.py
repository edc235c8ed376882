"""Backend agreement: the numba kernels and the numpy fallback must compute
the same quantities (up to reduction-order rounding), and the env flag must
actually switch backends."""

import os
import subprocess
import sys

import numpy as np
import pytest

from reducr import kernels
from reducr.numerics import cross_entropy, log_softmax, make_rng

IMPLS = kernels.implementations()
HAS_NUMBA = IMPLS["numba"] is not None


def _random_linear(rng, n=40, d=7, C=5):
    X = rng.standard_normal((n, d))
    W = rng.standard_normal((d, C))
    b = rng.standard_normal(C)
    y = rng.integers(0, C, size=n)
    wts = rng.uniform(0, 2, size=n)
    return X, W, b, y, wts


def _random_mlp(rng, n=40, d=7, h=6, C=5):
    X = rng.standard_normal((n, d))
    W1 = rng.standard_normal((d, h))
    b1 = rng.standard_normal(h)
    W2 = rng.standard_normal((h, C))
    b2 = rng.standard_normal(C)
    y = rng.integers(0, C, size=n)
    wts = rng.uniform(0, 2, size=n)
    return X, W1, b1, W2, b2, y, wts


def test_linear_ce_matches_scalar_composition():
    rng = make_rng(10)
    X, W, b, y, _ = _random_linear(rng)
    losses, preds = kernels.linear_ce(X, W, b, y)
    logits = X @ W + b
    for i in range(len(y)):
        expected = cross_entropy(log_softmax(logits[i]), int(y[i]))
        assert losses[i] == pytest.approx(expected, rel=1e-12)
        assert preds[i] == np.argmax(logits[i])


@pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")
class TestBackendAgreement:
    def test_linear_ce(self):
        rng = make_rng(11)
        args = _random_linear(rng)[:4]
        ln, pn = IMPLS["numpy"]["linear_ce"](*args)
        lb, pb = IMPLS["numba"]["linear_ce"](*args)
        np.testing.assert_allclose(ln, lb, rtol=1e-12)
        np.testing.assert_array_equal(pn, pb)

    def test_linear_grad(self):
        rng = make_rng(12)
        args = _random_linear(rng)
        outs_np = IMPLS["numpy"]["linear_grad"](*args)
        outs_nb = IMPLS["numba"]["linear_grad"](*args)
        for a, b in zip(outs_np, outs_nb):
            np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)

    def test_mlp_ce(self):
        rng = make_rng(13)
        args = _random_mlp(rng)[:6]
        ln, pn = IMPLS["numpy"]["mlp_ce"](*args)
        lb, pb = IMPLS["numba"]["mlp_ce"](*args)
        np.testing.assert_allclose(ln, lb, rtol=1e-12)
        np.testing.assert_array_equal(pn, pb)

    def test_mlp_grad(self):
        rng = make_rng(14)
        args = _random_mlp(rng)
        outs_np = IMPLS["numpy"]["mlp_grad"](*args)
        outs_nb = IMPLS["numba"]["mlp_grad"](*args)
        for a, b in zip(outs_np, outs_nb):
            np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)

    @pytest.mark.parametrize("clip", [True, False])
    def test_weighted_excess_scores(self, clip):
        rng = make_rng(15)
        tl = rng.uniform(0, 3, size=30)
        el = rng.uniform(0, 3, size=(4, 30))
        w = rng.dirichlet(np.ones(4))
        a = IMPLS["numpy"]["weighted_excess_scores"](tl, el, w, clip)
        b = IMPLS["numba"]["weighted_excess_scores"](tl, el, w, clip)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_min_payoff_scores(self):
        rng = make_rng(16)
        tl = rng.uniform(0, 3, size=30)
        el = rng.uniform(0, 3, size=(4, 30))
        h = rng.uniform(0, 2, size=4)
        a = IMPLS["numpy"]["min_payoff_scores"](tl, el, h)
        b = IMPLS["numba"]["min_payoff_scores"](tl, el, h)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_class_sums(self):
        rng = make_rng(17)
        labels = rng.integers(0, 6, size=100)
        preds = rng.integers(0, 6, size=100)
        losses = rng.uniform(0, 2, size=100)
        a = IMPLS["numpy"]["class_sums"](losses, preds, labels, 6)
        b = IMPLS["numba"]["class_sums"](losses, preds, labels, 6)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
        np.testing.assert_array_equal(a[1], b[1])
        np.testing.assert_array_equal(a[2], b[2])


def test_hand_computed_weighted_scores():
    tl = np.array([2.0, 0.3, 1.0])
    el = np.array([[0.5, 0.9, 1.0], [2.5, 0.1, 0.2]])
    w = np.array([0.25, 0.75])
    clipped = kernels.weighted_excess_scores(tl, el, w, True)
    np.testing.assert_allclose(clipped, [0.25 * 1.5, 0.75 * 0.2, 0.75 * 0.8])
    raw = kernels.weighted_excess_scores(tl, el, w, False)
    np.testing.assert_allclose(
        raw,
        [0.25 * 1.5 - 0.75 * 0.5, -0.25 * 0.6 + 0.75 * 0.2, 0.75 * 0.8],
        atol=1e-15,
    )


def test_hand_computed_min_payoff():
    tl = np.array([2.0, 0.5])
    el = np.array([[0.5, 0.1], [1.0, 0.9]])
    h = np.array([0.7, 0.2])
    out = kernels.min_payoff_scores(tl, el, h)
    np.testing.assert_allclose(out, [min(2.0 - 0.5 - 0.7, 2.0 - 1.0 - 0.2),
                                     min(0.5 - 0.1 - 0.7, 0.5 - 0.9 - 0.2)])


@pytest.mark.parametrize("flag,expected", [("numpy", "numpy"), ("auto", "numba")])
def test_env_flag_selects_backend(flag, expected):
    if expected == "numba" and not HAS_NUMBA:
        pytest.skip("numba unavailable")
    env = dict(os.environ, REDUCR_BACKEND=flag)
    out = subprocess.run(
        [sys.executable, "-c", "import reducr.kernels as k; print(k.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == expected
