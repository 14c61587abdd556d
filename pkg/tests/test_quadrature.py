import math

import numpy as np
import pytest

from bornlab.errors import InvalidInterval, NonConvergence
from bornlab.quadrature import (
    DEFAULT_QUADRATURE,
    Interval,
    QuadratureConfig,
    central_moment,
    integrate,
    integrate_with_breakpoints,
)
from bornlab.born_density import uniform_density


def test_interval_validation():
    with pytest.raises(InvalidInterval):
        Interval(1.0, 1.0)
    with pytest.raises(InvalidInterval):
        Interval(2.0, -2.0)
    with pytest.raises(InvalidInterval):
        Interval(0.0, math.inf)
    iv = Interval(-1.0, 3.0)
    assert iv.width == 4.0 and iv.midpoint == 1.0
    assert iv.contains(3.0) and not iv.contains(3.0001)


def test_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=-1.0)
    with pytest.raises(ValueError):
        QuadratureConfig(max_refinement_depth=0)


def test_identity_on_unit_interval():
    assert integrate(lambda t: t, Interval(0.0, 1.0)) == pytest.approx(0.5, abs=1e-12)


def test_odd_function_cancels():
    assert integrate(lambda t: t, Interval(-1.0, 1.0)) == pytest.approx(0.0, abs=1e-12)


def test_sine_against_antiderivative_oracle():
    # oracle: closed-form antiderivative, -cos(pi) + cos(0) = 2
    assert integrate(np.sin, Interval(0.0, math.pi)) == pytest.approx(2.0, abs=1e-9)


def test_scalar_callable_supported():
    assert integrate(lambda t: math.exp(t), Interval(0.0, 1.0)) == pytest.approx(
        math.e - 1.0, rel=1e-9
    )


def test_deterministic_for_fixed_inputs():
    f = lambda t: np.sin(17.3 * t) * np.exp(-t * t)
    iv = Interval(-2.0, 3.0)
    assert integrate(f, iv) == integrate(f, iv)


def test_non_convergence_on_exhausted_budget():
    cfg = QuadratureConfig(rel_tol=1e-13, abs_tol=0.0, max_refinement_depth=3)
    with pytest.raises(NonConvergence):
        integrate(lambda t: np.abs(t - 1.0 / 3.0) ** -0.5, Interval(0.0, 1.0), cfg)


def test_linearity_within_ten_tolerances():
    iv = Interval(0.0, 2.0)
    f = lambda t: np.sin(3.0 * t)
    g = lambda t: t * t
    lhs = integrate(lambda t: 2.5 * f(t) - 1.5 * g(t), iv)
    rhs = 2.5 * integrate(f, iv) - 1.5 * integrate(g, iv)
    tol = max(DEFAULT_QUADRATURE.abs_tol, DEFAULT_QUADRATURE.rel_tol * abs(lhs))
    assert abs(lhs - rhs) <= 10 * tol


def test_interval_additivity_within_ten_tolerances():
    f = lambda t: np.cos(5.0 * t) + t
    whole = integrate(f, Interval(-1.0, 2.0))
    split = integrate(f, Interval(-1.0, 0.3)) + integrate(f, Interval(0.3, 2.0))
    tol = max(DEFAULT_QUADRATURE.abs_tol, DEFAULT_QUADRATURE.rel_tol * abs(whole))
    assert abs(whole - split) <= 10 * tol


def test_refinement_monotonicity_against_fixed_grid_oracle():
    # oracle: composite Simpson on a fixed 10^6-point grid
    f = lambda t: np.sin(37.0 * t) * np.exp(0.3 * t)
    iv = Interval(0.0, 3.0)
    xs = np.linspace(iv.lo, iv.hi, 1_000_001)
    ys = f(xs)
    h = xs[1] - xs[0]
    oracle = (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-1:2].sum()) * h / 3.0

    rel = 1e-3
    last = None
    while rel >= 1e-9:
        got = integrate(f, iv, QuadratureConfig(rel_tol=rel, abs_tol=0.0))
        disc = abs(got - oracle)
        if last is not None:
            assert disc <= last + 1e-13
        last = disc
        rel /= 2.0


def test_central_moment_uniform_second():
    # oracle: closed form, int_{-1}^{1} t^2 dt = 2/3
    d = uniform_density(Interval(-1.0, 1.0))
    got = central_moment(d, 2, absolute=False, iv=Interval(-1.0, 1.0))
    assert got == pytest.approx(2.0 / 3.0, rel=1e-10)


def test_central_moment_uniform_third_absolute():
    # oracle: closed form, int_{-1}^{1} |t|^3 dt = 1/2
    d = uniform_density(Interval(-1.0, 1.0))
    got = central_moment(d, 3, absolute=True, iv=Interval(-1.0, 1.0))
    assert got == pytest.approx(0.5, rel=1e-10)


def test_central_moment_symmetric_third_vanishes():
    d = uniform_density(Interval(-2.0, 2.0), height=0.7)
    got = central_moment(d, 3, absolute=False, iv=Interval(-2.0, 2.0))
    assert abs(got) < 1e-10


def test_central_moment_rejects_other_orders():
    d = uniform_density(Interval(-1.0, 1.0))
    with pytest.raises(ValueError):
        central_moment(d, 4, iv=Interval(-1.0, 1.0))


@pytest.mark.parametrize("k", [2, 3])
def test_absolute_moment_nonnegative(k):
    d = uniform_density(Interval(-1.5, 0.5), height=0.3)
    assert central_moment(d, k, absolute=True, iv=Interval(-1.5, 0.5)) >= 0.0


def test_breakpoint_subdivision_matches_plain_integration():
    f = lambda t: np.sin(8.0 * t) ** 2
    iv = Interval(0.0, 2.0)
    plain = integrate(f, iv)
    split = integrate_with_breakpoints(f, iv, [0.4, 1.1, 1.9])
    assert split == pytest.approx(plain, rel=1e-10)
