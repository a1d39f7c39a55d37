import numpy as np
import pytest

from mspac.autodiff import Tensor, backward, finite_diff_check, ops
from mspac.checks import parameter_group, run_gradcheck, tiny_setup

GROUPS = {"stem", "trunk", "attention", "embed", "classifier", "centers"}


@pytest.mark.parametrize("id_mode", ["global", "part"])
def test_every_group_passes(id_mode):
    reports = run_gradcheck(id_mode, lam=1.0, tol_rel=1e-4, samples_per_param=4)
    failed = [r.line() for r in reports if not r.passed]
    assert not failed, "\n".join(failed)
    assert {parameter_group(r.param_name) for r in reports} == GROUPS
    assert all(r.n_checked > 0 for r in reports)


def test_centers_get_no_gradient_without_center_term():
    setup = tiny_setup(lam=0.0)
    loss = setup.loss()
    for p in setup.model.trainable.values():
        p.zero_grad()
    backward(loss)
    assert not setup.model.params["centers"].grad.any()
    assert setup.model.params["embed.w"].grad.any()


def test_corrupted_attention_backward_detected(monkeypatch):
    original = ops.sigmoid

    def bad_sigmoid(x):
        out = original(x)
        bw = out._backward
        out._backward = lambda g: tuple(0.5 * gi for gi in bw(g))
        return out

    monkeypatch.setattr(ops, "sigmoid", bad_sigmoid)
    setup = tiny_setup()
    params = {k: v for k, v in setup.model.trainable.items() if k.startswith("mspac.stage0.")}
    reports = finite_diff_check(params, setup.loss, samples_per_param=3)
    assert not all(r.passed for r in reports)


def test_gradcheck_restores_float32_params():
    setup = tiny_setup()
    before = {k: v.data.copy() for k, v in setup.model.params.items()}
    finite_diff_check({"centers": setup.model.params["centers"]}, setup.loss, samples_per_param=1)
    for k, v in setup.model.params.items():
        assert v.data.dtype == np.float32
        np.testing.assert_array_equal(v.data, before[k])


def test_residual_scale_is_not_trained():
    setup = tiny_setup()
    assert not any(k.endswith("res_scale") for k in setup.model.trainable)
    assert all(isinstance(v, Tensor) for v in setup.model.params.values())
