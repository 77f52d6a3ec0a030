"""DIRECT (DIviding RECTangles) global search on the unit square.

Deterministic, derivative free and Lipschitz-constant free.  Each rectangle
is represented by its centre, where the objective is sampled.  Every round
selects the potentially optimal rectangles (those on the lower-right convex
hull of the ``(size, value)`` cloud that pass the ``eps |f_min|`` improvement
test) and trisects them along their longest sides, best direction first.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

FAILED_VALUE = 1e10


@dataclass
class DirectResult:
    x: np.ndarray
    value: float
    evaluations: int
    samples: list = field(default_factory=list, repr=False)   # (x, value) in call order


@dataclass
class _Rect:
    center: np.ndarray
    levels: np.ndarray   # side length of axis i is 3**-levels[i]
    value: float

    @property
    def size(self) -> float:
        return 0.5 * float(np.sqrt(np.sum(9.0 ** -self.levels)))


class _Memo:
    def __init__(self, fun, budget: int):
        self.fun = fun
        self.budget = budget
        self.cache: dict = {}
        self.samples: list = []

    @property
    def used(self) -> int:
        return len(self.cache)

    def __call__(self, x: np.ndarray) -> float:
        key = tuple(np.round(x, 6))
        if key in self.cache:
            return self.cache[key]
        try:
            v = float(self.fun(np.array(x)))
            if not np.isfinite(v):
                raise FloatingPointError("non-finite objective")
        except Exception as exc:  # a failed sample only marks its rectangle
            logger.warning("objective failed at %s: %s", key, exc)
            v = FAILED_VALUE
        self.cache[key] = v
        self.samples.append((np.array(x), v))
        return v


def _potentially_optimal(rects: list[_Rect], fmin: float, eps: float) -> list[int]:
    """Indices ``j`` for which some ``K > 0`` makes ``f_j - K d_j`` minimal
    over all rectangles and improves on ``fmin`` by ``eps |fmin|``."""
    d = np.array([r.size for r in rects])
    v = np.array([r.value for r in rects])
    out = []
    for j in range(len(rects)):
        same = np.isclose(d, d[j], rtol=1e-12, atol=0)
        if np.any(v[same] < v[j]) or np.any(same[:j] & (v[:j] == v[j])):
            continue  # one representative per size class
        smaller = d < d[j] * (1 - 1e-12)
        larger = d > d[j] * (1 + 1e-12)
        k_lo = np.max((v[j] - v[smaller]) / (d[j] - d[smaller])) if smaller.any() else 0.0
        k_hi = np.min((v[larger] - v[j]) / (d[larger] - d[j])) if larger.any() else np.inf
        if k_hi <= 0 or k_lo > k_hi:
            continue
        if np.isfinite(k_hi) and v[j] - k_hi * d[j] > fmin - eps * abs(fmin):
            continue
        out.append(j)
    return out


def direct_minimize(fun, budget: int = 60, dim: int = 2, eps: float = 1e-4,
                    extra_points=()) -> DirectResult:
    """Minimize ``fun`` over ``[0, 1]^dim`` with at most ``budget`` evaluations.

    Parameters
    ----------
    fun : callable
        Objective taking an array of length ``dim``.  Exceptions and
        non-finite values count as failed samples with a large value.
    budget : int
        Evaluation cap (at least 9).
    eps : float
        Minimal relative improvement for a rectangle to be selected.
    extra_points : sequence
        Points evaluated up front (they compete for the optimum but do not
        create rectangles).
    """
    if budget < 9:
        raise ValueError("budget must be at least 9")
    f = _Memo(fun, budget)
    for p in extra_points:
        f(np.asarray(p, float))
    c0 = np.full(dim, 0.5)
    rects = [_Rect(c0, np.zeros(dim, int), f(c0))]
    exhausted = False
    while not exhausted and f.used < budget:
        fmin = min(r.value for r in rects)
        selected = _potentially_optimal(rects, fmin, eps)
        new_rects: list[_Rect] = []
        for idx in selected:
            r = rects[idx]
            longest = np.nonzero(r.levels == r.levels.min())[0]
            if f.used + 2 * longest.size > budget:
                exhausted = True
                break
            delta = 3.0 ** -(r.levels.min() + 1)
            samples = {}
            for i in longest:
                e = np.zeros(dim)
                e[i] = delta
                samples[i] = (f(r.center - e), f(r.center + e))
            order = sorted(longest, key=lambda i: (min(samples[i]), i))
            levels = r.levels.copy()
            for i in order:
                levels[i] += 1
                e = np.zeros(dim)
                e[i] = delta
                for sgn, v in ((-1, samples[i][0]), (1, samples[i][1])):
                    new_rects.append(_Rect(r.center + sgn * e, levels.copy(), v))
            r.levels = levels
        rects.extend(new_rects)
        if not selected:
            break
    best_x, best_v = min(f.samples, key=lambda s: s[1])
    return DirectResult(best_x, float(best_v), f.used, f.samples)
