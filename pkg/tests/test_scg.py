import numpy as np
import pytest
from scipy import optimize

from gaussianface.exceptions import NumericalFailure
from gaussianface.scg import ScgOptions, scg_minimize


def bowl(c):
    return lambda x: (float(np.sum((x - c) ** 2)), 2 * (x - c))


def rosen(x):
    return optimize.rosen(x), optimize.rosen_der(x)


def test_quadratic_bowl_converges():
    c = np.array([1.5, -2.0, 0.25])
    r = scg_minimize(bowl(c), np.zeros(3), ScgOptions(max_iter=50, ftol=0.0))
    np.testing.assert_allclose(r.x, c, atol=1e-6)
    assert r.n_iter <= 50


def test_rosenbrock_from_standard_start():
    r = scg_minimize(rosen, np.array([-1.2, 1.0]), ScgOptions(max_iter=2000, ftol=1e-14))
    ref = optimize.minimize(optimize.rosen, [-1.2, 1.0], jac=optimize.rosen_der, method="BFGS")
    assert r.fun <= 1e-4
    assert ref.fun <= 1e-4


@pytest.mark.parametrize("x0", [[-1.2, 1.0], [2.0, -1.0], [0.0, 3.0]])
def test_trace_never_increases(x0):
    r = scg_minimize(rosen, np.array(x0), ScgOptions(max_iter=300))
    tr = np.asarray(r.trace)
    assert np.all(np.diff(tr) <= 0)
    assert r.fun == tr[-1] == pytest.approx(rosen(r.x)[0])


def test_nonfinite_trial_points_are_rejected():
    def f(x):
        if x[0] > 0.5:
            return np.nan, np.full_like(x, np.nan)
        return bowl(np.array([1.0]))(x)

    r = scg_minimize(f, np.array([-2.0]), ScgOptions(max_iter=100))
    assert np.isfinite(r.fun)
    assert r.x[0] <= 0.5
    assert np.all(np.diff(r.trace) <= 0)


def test_nonfinite_start_raises():
    with pytest.raises(NumericalFailure):
        scg_minimize(lambda x: (np.inf, x), np.zeros(2))
