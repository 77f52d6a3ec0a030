import numpy as np
import pytest

from tvdbar.direct import FAILED_VALUE, _potentially_optimal, _Rect, direct_minimize

OBJECTIVES = {
    "quadratic": lambda x: (x[0] - 0.3) ** 2 + 2 * (x[1] - 0.7) ** 2,
    "rosenbrock": lambda x: (1 - 2 * x[0]) ** 2 + 5 * (2 * x[1] - 4 * x[0] ** 2) ** 2,
    "multimodal": lambda x: np.sin(7 * x[0]) * np.cos(5 * x[1]) + 0.5 * (x[0] - x[1]) ** 2,
    "corner": lambda x: -x[0] - x[1],
}


def _grid_argmin(f, n=301):
    t = np.linspace(0, 1, n)
    X, Y = np.meshgrid(t, t, indexing="ij")
    V = np.vectorize(lambda a, b: f((a, b)))(X, Y)
    i = np.unravel_index(np.argmin(V), V.shape)
    return np.array([t[i[0]], t[i[1]]]), V.min()


@pytest.mark.parametrize("name", sorted(OBJECTIVES))
def test_close_to_dense_grid_argmin(name):
    f = OBJECTIVES[name]
    x_star, v_star = _grid_argmin(f)
    res = direct_minimize(f, budget=150)
    assert res.evaluations <= 150
    assert np.linalg.norm(res.x - x_star) < 0.05
    assert res.value <= v_star + 1e-2


def test_first_round_samples_centre_and_trisection():
    seen = []
    direct_minimize(lambda x: seen.append(tuple(x)) or float(np.sum(x)), budget=9)
    assert seen[0] == (0.5, 0.5)
    third = {(1 / 6, 0.5), (5 / 6, 0.5), (0.5, 1 / 6), (0.5, 5 / 6)}
    r = lambda p: (round(float(p[0]), 12), round(float(p[1]), 12))
    assert {r(p) for p in seen[1:5]} == {r(p) for p in third}
    assert len(seen) <= 9


def test_deterministic():
    f = OBJECTIVES["multimodal"]
    a = direct_minimize(f, budget=60)
    b = direct_minimize(f, budget=60)
    assert np.array_equal(a.x, b.x) and a.samples[-1][1] == b.samples[-1][1]


def test_failures_are_marked_not_fatal():
    def f(x):
        if x[0] > 0.6:
            raise RuntimeError("solver blew up")
        return (x[0] - 0.2) ** 2 + (x[1] - 0.5) ** 2
    res = direct_minimize(f, budget=60)
    assert any(v == FAILED_VALUE for _, v in res.samples)
    assert res.value < 0.01


def test_extra_points_compete():
    f = lambda x: 0.0 if np.allclose(x, 0) else 1.0 + x[0]
    res = direct_minimize(f, budget=20, extra_points=[(0.0, 0.0)])
    assert np.allclose(res.x, 0) and res.value == 0


def test_no_repeated_evaluations():
    calls = []
    direct_minimize(lambda x: calls.append(tuple(np.round(x, 9))) or float(x @ x), budget=80)
    assert len(calls) == len(set(calls))


def test_budget_validation():
    with pytest.raises(ValueError):
        direct_minimize(lambda x: 0.0, budget=3)


def test_potentially_optimal_selection():
    # sizes 1, 2, 3 with values chosen so only the largest and the best are hull points
    rects = [_Rect(np.zeros(2), np.array([2, 2]), 0.0),
             _Rect(np.zeros(2), np.array([1, 1]), 5.0),
             _Rect(np.zeros(2), np.array([0, 0]), 1.0)]
    sel = _potentially_optimal(rects, 0.0, 1e-4)
    assert sel == [0, 2]
