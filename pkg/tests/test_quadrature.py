import math

import numpy as np
import pytest

from cooprelay.errors import NonConvergence
from cooprelay.quadrature import GAUSS_W, KRONROD_W, NODES, QuadratureSpec, integrate_exterior, integrate_plane
from cooprelay.scenario import Position

D = Position(1.0, 0.0)


def test_rule_exactness():
    # Kronrod is exact to degree 22, the embedded Gauss rule to degree 13
    for k in range(0, 23, 2):
        exact = 2.0 / (k + 1)
        assert NODES**k @ KRONROD_W == pytest.approx(exact, rel=1e-13)
        if k <= 13:
            assert NODES**k @ GAUSS_W == pytest.approx(exact, rel=1e-13)


def test_gaussian():
    val, err = integrate_plane(lambda x, y: np.exp(-(x**2 + y**2)), QuadratureSpec())
    assert val == pytest.approx(math.pi, rel=1e-8)
    assert err <= 1e-8 * math.pi


@pytest.mark.parametrize("theta", [1.0, 0.1, 7.5])
def test_direct_link_integrand(theta):
    spec = QuadratureSpec().with_centers([D])

    def f(x, y):
        g = 1.0 / ((x - 1) ** 2 + y**2) ** 2
        return theta * g / (1 + theta * g)

    val, _ = integrate_plane(f, spec)
    assert val == pytest.approx(math.pi**2 * math.sqrt(theta) / 2, rel=1e-8)


def test_off_center_refinement_node():
    # integrable peak away from the primary center
    node = Position(0.3, 0.4)
    spec = QuadratureSpec().with_centers([D, node])

    def f(x, y):
        return 1.0 / (1.0 + 100.0 * ((x - 0.3) ** 2 + (y - 0.4) ** 2) ** 2)

    val, _ = integrate_plane(f, spec, center=D)
    assert val == pytest.approx(math.pi**2 / 2 / 10, rel=1e-8)


def test_exterior():
    # int_{|x|>R} |x|^-4 dx = pi / R^2
    val, _ = integrate_exterior(lambda x, y: 1.0 / (x**2 + y**2) ** 2, Position(0, 0), 3.0, QuadratureSpec())
    assert val == pytest.approx(math.pi / 9, rel=1e-9)


def test_non_convergence():
    spec = QuadratureSpec(relative_tolerance=1e-14, absolute_tolerance=1e-300, max_subdivisions=50)
    with pytest.raises(NonConvergence):
        integrate_plane(lambda x, y: np.cos(40 * x) * np.exp(-(x**2 + y**2)), spec)


def test_deterministic():
    f = lambda x, y: 1.0 / (1 + ((x - 1) ** 2 + y**2) ** 2)  # noqa: E731
    spec = QuadratureSpec().with_centers([D, Position(0.5, 0)])
    assert integrate_plane(f, spec) == integrate_plane(f, spec)


def test_bad_tolerance():
    with pytest.raises(ValueError):
        QuadratureSpec(relative_tolerance=0)
