"""Central-difference verification of analytic gradients."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from . import ops
from .tensor import Tensor, backward, float64_mode

log = logging.getLogger(__name__)


class GradCheckError(RuntimeError):
    pass


@dataclass
class GradReport:
    param_name: str
    max_rel_err: float
    max_abs_err: float
    passed: bool
    n_checked: int = 0
    n_skipped: int = 0

    def line(self) -> str:
        status = "ok  " if self.passed else "FAIL"
        return (
            f"{status} {self.param_name:<28} rel={self.max_rel_err:.2e} abs={self.max_abs_err:.2e} "
            f"checked={self.n_checked} skipped={self.n_skipped}"
        )


def _evaluate(loss_fn, with_switches: bool):
    if with_switches:
        with ops.record_switches() as switches:
            loss = loss_fn()
    else:
        switches = None
        loss = loss_fn()
    value = loss.item()
    if not np.isfinite(value):
        raise GradCheckError(f"loss is not finite ({value})")
    return loss, value, switches


def _same_switches(a, b) -> bool:
    if len(a) != len(b):
        return False
    return all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(
    params: Dict[str, Tensor],
    loss_fn: Callable[[], Tensor],
    eps: float = 1e-4,
    tol_rel: float = 1e-4,
    tol_abs: float = 1e-8,
    samples_per_param: int = 12,
    seed: int = 0,
    max_probes: Optional[int] = None,
) -> List[GradReport]:
    """Compare backprop gradients with (f(p+eps) - f(p-eps)) / (2 eps).

    ``loss_fn`` must rebuild the graph from ``params`` on every call.  The
    whole check runs in float64: parameters are promoted for its duration
    and restored afterwards.  Probes whose perturbation flips any relu,
    max-pool or clamp switch relative to the unperturbed point are skipped,
    since the central difference is meaningless across a kink.
    """
    if not (1e-4 <= eps <= 1e-2):
        raise ValueError(f"eps must lie in [1e-4, 1e-2], got {eps}")
    rng = np.random.default_rng(seed)
    max_probes = max_probes or 8 * samples_per_param
    saved = {name: p.data for name, p in params.items()}
    reports = []
    try:
        with float64_mode():
            for p in params.values():
                p.data = p.data.astype(np.float64)
                p.grad = None
            loss, base, base_sw = _evaluate(loss_fn, True)
            for p in params.values():
                p.zero_grad()
            backward(loss)
            analytic = {name: p.grad.copy() for name, p in params.items()}

            for name, p in params.items():
                flat = p.data.reshape(-1)
                candidates = rng.permutation(flat.size)[:max_probes]
                rel_errs, abs_errs, skipped = [], [], 0
                for k in candidates:
                    if len(rel_errs) >= samples_per_param:
                        break
                    orig = flat[k]
                    flat[k] = orig + eps
                    _, f_plus, sw_plus = _evaluate(loss_fn, True)
                    flat[k] = orig - eps
                    _, f_minus, sw_minus = _evaluate(loss_fn, True)
                    flat[k] = orig
                    if not (_same_switches(base_sw, sw_plus) and _same_switches(base_sw, sw_minus)):
                        skipped += 1
                        continue
                    numeric = (f_plus - f_minus) / (2 * eps)
                    a = float(analytic[name].reshape(-1)[k])
                    diff = abs(a - numeric)
                    abs_errs.append(diff)
                    rel_errs.append(diff / max(abs(a), abs(numeric), 1e-8))
                max_rel = max(rel_errs, default=0.0)
                max_abs = max(abs_errs, default=0.0)
                # a probe passes on relative error, or on absolute error when both values are ~0
                passed = bool(rel_errs) and all(r <= tol_rel or d <= tol_abs for r, d in zip(rel_errs, abs_errs))
                if not rel_errs:
                    log.warning("%s: every probe crossed a kink; nothing checked", name)
                reports.append(GradReport(name, max_rel, max_abs, passed, len(rel_errs), skipped))
    finally:
        for name, p in params.items():
            p.data = saved[name]
            p.grad = None
    return reports
