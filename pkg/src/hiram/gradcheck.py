"""Central finite-difference checks of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward

STEP = 1e-5
# Denominator floor: below this magnitude both gradients count as zero-ish and
# the comparison degrades to an absolute one.
REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_index: tuple[int, ...]
    analytic: float
    numeric: float
    tol: float
    checked: int
    name: str = ""

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        label = f"{self.name}: " if self.name else ""
        return (f"{label}{status} max rel err {self.max_rel_error:.2e} at {self.worst_index} "
                f"(analytic {self.analytic:.6g}, numeric {self.numeric:.6g}, {self.checked} coords)")


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), REL_FLOOR)


def _coords(shape, max_coords, rng):
    size = int(np.prod(shape))
    flat = np.arange(size)
    if max_coords is not None and size > max_coords:
        rng = rng if rng is not None else np.random.default_rng(0)
        flat = np.sort(rng.choice(size, size=max_coords, replace=False))
    return [np.unravel_index(i, shape) for i in flat]


def grad_check(f: Callable[[Tensor], Tensor], x: np.ndarray, tol: float = 1e-4,
               step: float = STEP, max_coords: int | None = None, rng=None,
               name: str = "") -> GradCheckReport:
    """Compare d f / d x from ``backward`` with central differences at ``x``."""
    x = np.array(x, dtype=np.float64)
    leaf = Tensor(x, requires_grad=True)
    analytic = backward(f(leaf), [leaf])[leaf]

    worst = (0.0, (), 0.0, 0.0)
    coords = _coords(x.shape, max_coords, rng)
    for idx in coords:
        plus, minus = x.copy(), x.copy()
        plus[idx] += step
        minus[idx] -= step
        num = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2 * step)
        err = relative_error(float(analytic[idx]), num)
        if err > worst[0] or not worst[1]:
            worst = (err, tuple(int(i) for i in idx), float(analytic[idx]), num)
    return GradCheckReport(worst[0], worst[1], worst[2], worst[3], tol, len(coords), name)


def grad_check_named(loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
                     arrays: Mapping[str, np.ndarray], tol: float = 1e-4,
                     max_coords: int | None = None, seed: int = 0) -> list[GradCheckReport]:
    """Check every named array of a multi-input scalar function, one at a time."""
    rng = np.random.default_rng(seed)
    reports = []
    for key in arrays:
        others = {k: Tensor(v) for k, v in arrays.items() if k != key}

        def f(t, key=key, others=others):
            return loss_fn({**others, key: t})

        reports.append(grad_check(f, arrays[key], tol=tol, max_coords=max_coords, rng=rng, name=key))
    return reports
