import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taxocomplete import autodiff as ad
from taxocomplete.autodiff import Tensor, grad_check
from taxocomplete.errors import TargetOutsideTask
from taxocomplete.loss import (
    LossConfig,
    batch_loss,
    clamp_count,
    smoothed_loss,
    smoothing_weight,
    tat_loss,
)
from taxocomplete.model import STOP, NextLabelDistribution


def dist(labels, probs):
    probs = np.asarray(probs, dtype=np.float64)
    return NextLabelDistribution(0, tuple(labels), probs, Tensor(probs))


def direct(probs, target, width, eps, adaptive=True, form="complement"):
    """Loss evaluated term by term with math.log."""
    a = eps * width / (1 + width) if adaptive else eps
    total = (1 - a) * math.log(probs[target])
    for j, p in enumerate(probs):
        if j != target:
            total += a * (math.log(1 - p) if form == "complement" else math.log(p))
    return -total


def test_confidence_coefficient():
    assert 1 - smoothing_weight(3, LossConfig(0.01)) == pytest.approx(0.9925, abs=1e-15)
    assert smoothing_weight(3, LossConfig(0.01, adaptive=False)) == 0.01


def test_reference_case_conventional_form():
    d = dist(["A", "B"], [0.8, 0.2])
    cfg = LossConfig(0.01, smoothing_form="conventional")
    got = tat_loss(d, "A", 1, cfg).item()
    assert abs(got - (-(0.995 * math.log(0.8) + 0.005 * math.log(0.2)))) < 1e-12
    assert abs(got - 0.23008) < 5e-6


def test_reference_case_default_form():
    d = dist(["A", "B"], [0.8, 0.2])
    got = tat_loss(d, "A", 1, LossConfig(0.01)).item()
    expected = -(0.995 * math.log(0.8) + 0.005 * math.log(1 - 0.2))
    assert abs(got - expected) < 1e-12
    assert abs(got - (-math.log(0.8))) < 1e-12  # here 1 - P(B) = P(A)


def test_zero_epsilon_is_cross_entropy():
    d = dist([1, 2, STOP], [0.5, 0.3, 0.2])
    for form in ("complement", "conventional"):
        got = tat_loss(d, 2, 4, LossConfig(0.0, smoothing_form=form)).item()
        assert got == pytest.approx(-math.log(0.3), abs=1e-14)


def test_target_outside_task():
    with pytest.raises(TargetOutsideTask):
        tat_loss(dist([1, 2, STOP], [0.5, 0.3, 0.2]), 7, 2)


def test_batch_mean_rules():
    d1 = dist([1, 2, STOP], [0.5, 0.3, 0.2])
    d2 = dist([1, 2, STOP], [0.1, 0.6, 0.3])
    cfg = LossConfig()
    l1, l2 = tat_loss(d1, 1, 2, cfg), tat_loss(d2, STOP, 2, cfg)
    assert batch_loss([l1]).item() == l1.item()
    assert batch_loss([l1, l2]).item() == pytest.approx((l1.item() + l2.item()) / 2, abs=1e-15)
    assert batch_loss([l1, l2, l1, l2]).item() == pytest.approx(batch_loss([l1, l2]).item(), abs=1e-15)


def test_width_limits():
    probs = [0.6, 0.3, 0.1]
    d = dist([1, 2, STOP], probs)
    assert tat_loss(d, 1, 0, LossConfig(0.3)).item() == pytest.approx(-math.log(0.6), abs=1e-14)
    big = tat_loss(d, 1, 10**9, LossConfig(0.3)).item()
    plain = tat_loss(d, 1, 0, LossConfig(0.3, adaptive=False)).item()
    assert big == pytest.approx(plain, abs=1e-8)


def test_clamp_counter():
    clamp_count(reset=True)
    d = dist([1, 2, STOP], [1.0, 0.0, 0.0])
    val = tat_loss(d, 1, 2, LossConfig(0.01, smoothing_form="conventional")).item()
    assert np.isfinite(val)
    assert clamp_count(reset=True) == 2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.integers(0, 5),
       st.integers(0, 8), st.floats(0.0, 0.5), st.booleans(), st.sampled_from(["complement", "conventional"]))
def test_matches_direct_formula(raw, target, width, eps, adaptive, form):
    probs = np.array(raw) / sum(raw)
    target %= len(probs)
    if form == "complement" and np.any(probs >= 1 - 1e-9):
        return
    d = dist(list(range(len(probs) - 1)) + [STOP], probs)
    got = tat_loss(d, d.labels[target], width, LossConfig(eps, adaptive, form)).item()
    assert got == pytest.approx(direct(probs, target, width, eps, adaptive, form), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=6), st.integers(1, 6), st.floats(0.0, 0.3))
def test_monotone_in_target_probability(raw, width, eps):
    others = np.array(raw[1:]) / sum(raw[1:])
    cfg = LossConfig(eps)
    prev = None
    for p in np.linspace(0.05, 0.9, 12):
        probs = np.concatenate([[p], (1 - p) * others])
        val = tat_loss(dist(list(range(len(probs))), probs), 0, width, cfg).item()
        if prev is not None:
            assert val < prev
        prev = val


def test_conventional_form_has_interior_optimum():
    # with log P smoothing over m other labels the optimum target
    # probability is (1 - a) / (1 - a + m a), so pushing P(target) towards 1
    # eventually raises the loss
    cfg = LossConfig(0.25, smoothing_form="conventional")
    a = float(smoothing_weight(1, cfg))
    best = (1 - a) / (1 - a + 2 * a)
    vals = [tat_loss(dist([0, 1, STOP], [p, (1 - p) / 2, (1 - p) / 2]), 0, 1, cfg).item()
            for p in (best - 0.05, best, best + 0.05)]
    assert vals[1] < vals[0] and vals[1] < vals[2]


def test_gradient_wrt_logits(rng):
    logits = Tensor(rng.normal(size=(4, 5)))
    cfg = LossConfig(0.1)

    def f(z):
        return smoothed_loss(ad.softmax(z, -1), [0, 3, 4, 1], [1, 2, 3, 0], cfg).mean()

    assert grad_check(f, logits) < 1e-6
    cfg2 = LossConfig(0.1, smoothing_form="conventional")
    assert grad_check(lambda z: smoothed_loss(ad.softmax(z, -1), [0, 3, 4, 1], [1, 2, 3, 0], cfg2).sum(),
                      logits) < 1e-6
