import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mspac.autodiff import Tensor, backward, parameter
from mspac.losses import (
    DegenerateCenterError,
    InvalidLabelError,
    LossConfig,
    center_loss,
    identity_loss,
    init_centers,
    joint_loss,
    mecen_loss,
    renormalize_centers,
)


def t(x):
    return Tensor(np.asarray(x, dtype=np.float32))


def at_sq_distance(c, sq):
    """A point whose squared distance to unit center ``c`` is ``sq``."""
    return c + math.sqrt(sq) * np.array([0.0, 1.0], np.float32)


C = np.array([[1.0, 0.0], [0.0, 1.0]], np.float32)


# ---------------------------------------------------------------- MeCen

def test_mecen_zero_inside_margin():
    x = np.stack([at_sq_distance(C[0], 0.5), at_sq_distance(C[1], 1.0)])
    assert mecen_loss(t(x), [0, 1], t(C), margin=1.0).item() == 0.0


def test_mecen_single_sample():
    x = at_sq_distance(C[0], 3.0)[None]
    assert abs(mecen_loss(t(x), [0], t(C), margin=1.0).item() - 1.7182818) < 1e-6


def test_mecen_two_samples():
    x = np.stack([at_sq_distance(C[0], 1.5), at_sq_distance(C[1], 1.5)])
    assert abs(mecen_loss(t(x), [0, 1], t(C), margin=1.0).item() - 0.6487213) < 1e-6


def test_mecen_mean_reduction_divides_exponent():
    x = np.stack([at_sq_distance(C[0], 3.0), at_sq_distance(C[1], 3.0)])
    out = mecen_loss(t(x), [0, 1], t(C), margin=1.0, reduction="mean").item()
    assert abs(out - (math.e - 1)) < 1e-6


@given(st.lists(st.floats(0, 4), min_size=1, max_size=6), st.floats(0, 3))
def test_mecen_zero_iff_all_within_margin(sqs, m):
    x = np.stack([at_sq_distance(C[i % 2], s) for i, s in enumerate(sqs)])
    labels = [i % 2 for i in range(len(sqs))]
    sq = ((x - C[labels]) ** 2).sum(axis=1)
    loss = mecen_loss(t(x), labels, t(C), margin=m).item()
    if np.all(sq <= m):
        assert loss == 0.0
    elif np.any(sq - m > 1e-4):
        assert loss > 0.0


def test_mecen_clamp_keeps_loss_finite():
    x = np.full((4, 2), 100.0, np.float32)
    out = mecen_loss(t(x), [0, 1, 0, 1], t(C), margin=1.0, clamp=30.0).item()
    assert out == pytest.approx(math.exp(30) - 1, rel=1e-5)


def test_mecen_monotone_in_distance():
    vals = [mecen_loss(t(at_sq_distance(C[0], s)[None]), [0], t(C)).item() for s in (1.5, 2.0, 3.0, 4.0)]
    assert vals == sorted(vals) and vals[0] > 0


def test_center_gradient_points_away_from_samples():
    x = at_sq_distance(C[0], 3.0)[None]
    c = parameter(C.copy())
    backward(mecen_loss(t(x), [0], c))
    # loss decreases if the center moves toward the sample
    assert np.dot(c.grad[0], x[0] - C[0]) < 0
    assert not c.grad[1].any()


def test_linear_center_loss_is_half_sum():
    x = np.stack([at_sq_distance(C[0], 2.0), at_sq_distance(C[1], 4.0)])
    assert center_loss(t(x), [0, 1], t(C)).item() == pytest.approx(3.0, rel=1e-6)
    assert center_loss(t(x), [0, 1], t(C), margin=1.0).item() == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("labels", [[0, 2], [-1, 0], [0]])
def test_mecen_invalid_labels(labels):
    with pytest.raises(InvalidLabelError):
        mecen_loss(t(np.zeros((2, 2))), labels, t(C))


# ---------------------------------------------------------------- identity loss

def test_identity_uniform_logits():
    assert identity_loss(t(np.zeros((3, 20))), [0, 5, 19]).item() == pytest.approx(2.9957323, abs=1e-6)


def test_identity_two_class():
    assert identity_loss(t([[1.0, 0.0]]), [0]).item() == pytest.approx(0.3132617, abs=1e-6)


def test_identity_dominant_logit():
    logits = np.zeros((1, 20), np.float32)
    logits[0, 7] = 20.0
    assert identity_loss(t(logits), [7]).item() < 1e-3


@given(st.floats(-50, 50))
def test_identity_shift_invariant(c):
    logits = np.array([[0.3, -1.2, 2.0]], np.float32)
    a = identity_loss(t(logits), [2]).item()
    b = identity_loss(t(logits + np.float32(c)), [2]).item()
    assert a == pytest.approx(b, abs=1e-4)


def test_identity_invalid_label():
    with pytest.raises(InvalidLabelError):
        identity_loss(t(np.zeros((1, 3))), [3])


# ---------------------------------------------------------------- joint

def _pieces(rng):
    emb = t(rng.standard_normal((4, 2)))
    logits = t(rng.standard_normal((4, 2)))
    return emb, logits, [0, 1, 1, 0]


def test_joint_lambda_zero_is_identity_loss(rng):
    emb, logits, y = _pieces(rng)
    terms = joint_loss(emb, logits, y, t(C), LossConfig(lam=0.0))
    assert terms.total.item() == identity_loss(logits, y).item()


def test_joint_lambda_one_is_sum(rng):
    emb, logits, y = _pieces(rng)
    cfg = LossConfig(lam=1.0, reduction="sum")
    terms = joint_loss(emb, logits, y, t(C), cfg)
    ref = identity_loss(logits, y).item() + mecen_loss(emb, y, t(C)).item()
    assert abs(terms.total.item() - ref) < 1e-6 * max(1.0, abs(ref))


def test_joint_weighting_arithmetic():
    # L_ID = 0.5 and L_MeCen = 0.25 built from the component oracles
    # CE of [0, a] at class 1 is log(1 + e^-a)
    logits = t([[0.0, -math.log(math.exp(0.5) - 1)]])
    s = math.log(1.25)
    x = at_sq_distance(C[1], 1.0 + 2 * s)[None]
    terms = joint_loss(t(x), logits, [1], t(C), LossConfig(lam=2.0, reduction="sum"))
    assert terms.l_id.item() == pytest.approx(0.5, abs=1e-6)
    assert terms.l_center.item() == pytest.approx(0.25, abs=1e-6)
    assert terms.total.item() == pytest.approx(1.0, abs=1e-6)


def test_joint_part_heads_average(rng):
    emb = t(rng.standard_normal((2, 2)))
    heads = [t(rng.standard_normal((2, 3))) for _ in range(3)]
    terms = joint_loss(emb, heads, [0, 2], t(np.eye(3, 2)), LossConfig(lam=0.0))
    ref = np.mean([identity_loss(h, [0, 2]).item() for h in heads])
    assert terms.l_id.item() == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("kw", [{"margin": -1}, {"lam": -0.1}, {"id_mode": "x"}, {"form": "x"}, {"reduction": "x"}])
def test_loss_config_validation(kw):
    with pytest.raises(ValueError):
        LossConfig(**kw)


# ---------------------------------------------------------------- centers

def test_renormalize_example():
    c = np.array([[3.0, 4.0]], np.float32)
    renormalize_centers(c)
    np.testing.assert_allclose(c, [[0.6, 0.8]], atol=1e-7)


def test_renormalize_idempotent(rng):
    c = init_centers(5, 4, rng)
    before = c.copy()
    renormalize_centers(c)
    np.testing.assert_allclose(c, before, atol=1e-7)


def test_renormalize_zero_row():
    with pytest.raises(DegenerateCenterError):
        renormalize_centers(np.array([[1.0, 0.0], [0.0, 0.0]], np.float32))


def test_renormalize_tensor_in_place(rng):
    c = parameter(rng.standard_normal((3, 4)).astype(np.float32) * 5)
    renormalize_centers(c)
    np.testing.assert_allclose(np.linalg.norm(c.data, axis=1), 1.0, atol=1e-6)
