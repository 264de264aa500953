import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrolab.loss import (
    DegenerateFit,
    LossSpec,
    ModeFit,
    estimate_mode_sigma,
    fit_for,
    loss_and_grad,
    standard_loss,
    weighted,
    weighted_loss,
    weighted_loss_gradient,
    z_factor,
)


def numeric_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


def test_beta_and_z_constants():
    fit = ModeFit(0.3, 1.0)
    assert fit.beta == pytest.approx(0.3989422804, abs=1e-10)
    assert float(z_factor(1.3, fit)) == pytest.approx(0.2419707245, abs=1e-10)
    assert float(z_factor(0.3, fit)) == pytest.approx(fit.beta, abs=1e-15)


def test_mode_from_histogram():
    fit = estimate_mode_sigma([0.1, 0.5, 0.5, 0.9], bins=10)
    assert fit.mu == pytest.approx(0.55, abs=1e-12)
    assert fit.sigma == pytest.approx(np.std([0.1, 0.5, 0.5, 0.9], ddof=1))


def test_mode_tie_takes_lowest_bin():
    assert estimate_mode_sigma([0.05, 0.95], bins=10).mu == pytest.approx(0.05)


def test_degenerate_fit():
    with pytest.raises(DegenerateFit):
        estimate_mode_sigma([0.4, 0.4, 0.4])
    with pytest.raises(DegenerateFit):
        estimate_mode_sigma([0.4])


def test_weighted_values_at_mode():
    fit = ModeFit(0.5, 0.2)
    e = 0.3
    # prediction at the mode: ratio 1, so the factor is 1 without floor, 2 with
    plain = weighted(floor_one=False)
    floored = weighted(floor_one=True)
    assert weighted_loss([0.5], [0.5 + e], plain, fit) == pytest.approx(e * e)
    assert weighted_loss([0.5], [0.5 + e], floored, fit) == pytest.approx(2 * e * e)


def test_huber_values():
    assert standard_loss([0.0], [0.5], "huber")[0] == pytest.approx(0.125)
    assert standard_loss([0.0], [2.0], "huber")[0] == pytest.approx(1.5)


def test_mse_mae():
    assert standard_loss([1.0, 2.0], [0.0, 0.0], "mse")[0] == pytest.approx(2.5)
    assert standard_loss([1.0, -2.0], [0.0, 0.0], "mae")[0] == pytest.approx(1.5)


FLAG_COMBOS = list(itertools.product([True, False], repeat=4))


@pytest.mark.parametrize("squared,take_mean,floor_one,batch_beta", FLAG_COMBOS)
def test_weighted_gradient_matches_finite_differences(squared, take_mean, floor_one, batch_beta):
    rng = np.random.default_rng(hash((squared, take_mean, floor_one, batch_beta)) % 2**32)
    spec = weighted(alpha=1.7, squared=squared, take_mean=take_mean, floor_one=floor_one, batch_beta=batch_beta)
    fit = ModeFit(0.45, 0.18)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 6))
        p = rng.uniform(-0.2, 1.2, n)
        t = rng.uniform(0, 1, n)
        if batch_beta and n > 1:
            # keep the argmax unique so the loss is smooth at p
            z = z_factor(p, fit)
            if np.sort(z)[-1] - np.sort(z)[-2] < 1e-3:
                continue
        got = weighted_loss_gradient(p, t, spec, fit)
        ref = numeric_grad(lambda q: weighted_loss(q, t, spec, fit), p)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    assert worst < 1e-6


@pytest.mark.parametrize("kind", ["mse", "huber", "mae"])
def test_standard_gradients(kind):
    rng = np.random.default_rng(1)
    for _ in range(50):
        p, t = rng.uniform(-3, 3, 4), rng.uniform(-3, 3, 4)
        if kind != "mse" and np.any(np.abs(np.abs(p - t) - (1.0 if kind == "huber" else 0.0)) < 1e-3):
            continue
        got = standard_loss(p, t, kind)[1]
        ref = numeric_grad(lambda q: standard_loss(q, t, kind)[0], p)
        assert np.max(np.abs(got - ref)) < 1e-6


def test_tail_gradient_reduces_to_floor():
    fit = ModeFit(0.5, 0.05)
    spec = weighted(alpha=1.0, floor_one=True)
    p, t = np.array([2.0]), np.array([1.5])
    # far in the tail Z is ~0, leaving the unit-floor squared error gradient
    g = weighted_loss_gradient(p, t, spec, fit)
    assert g[0] == pytest.approx(2 * (p[0] - t[0]), rel=1e-9)


def test_small_alpha_tends_to_squared_error():
    fit = ModeFit(0.5, 0.2)
    p, t = np.array([0.1, 0.5, 0.8]), np.array([0.3, 0.2, 0.9])
    mse = float(np.mean((p - t) ** 2))
    assert weighted_loss(p, t, weighted(alpha=1e-8, floor_one=True), fit) == pytest.approx(mse, rel=1e-12)
    assert weighted_loss(p, t, weighted(alpha=1e-8, floor_one=False), fit) < 1e-15


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 2), st.floats(0, 1)), min_size=1, max_size=8), st.randoms())
def test_permutation_invariance(pairs, rnd):
    fit = ModeFit(0.4, 0.25)
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    p, t = map(np.array, zip(*pairs))
    ps, ts = map(np.array, zip(*shuffled))
    for spec in (weighted(), weighted(batch_beta=True), weighted(take_mean=False, squared=False)):
        assert math.isclose(weighted_loss(p, t, spec, fit), weighted_loss(ps, ts, spec, fit), rel_tol=1e-12, abs_tol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 2), st.floats(0, 1))
def test_weighted_nonnegative_and_zero_at_truth(p, t):
    fit = ModeFit(0.5, 0.2)
    assert weighted_loss([p], [t], weighted(), fit) >= 0
    assert weighted_loss([t], [t], weighted(), fit) == 0


def test_fit_for_spec_overrides():
    labels = np.linspace(0, 1, 11)
    assert fit_for(LossSpec("huber"), labels) is None
    assert fit_for(weighted(mu=0.3, sigma=0.1), labels) == ModeFit(0.3, 0.1)
    assert fit_for(weighted(mu=0.3), labels).sigma == pytest.approx(np.std(labels, ddof=1))


def test_loss_and_grad_requires_fit():
    with pytest.raises(ValueError):
        loss_and_grad(weighted(), [0.1], [0.2])


def test_spec_validation():
    with pytest.raises(ValueError):
        LossSpec("l3")
    with pytest.raises(ValueError):
        LossSpec("weighted", alpha=0)
