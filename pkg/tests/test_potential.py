import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatsheet.errors import ConfigError
from heatsheet.potential import Cosine, PotentialSpec, TabulatedSmooth, Zero, potential_from_dict


def test_zero():
    z = Zero(3)
    assert z.is_zero and z.sup_u == 0.0
    np.testing.assert_array_equal(z.grad(np.ones((4, 3))), 0.0)


def test_cosine_bounds_and_gradient():
    pot = Cosine([0.5, -2.0])
    assert pot.d == 2 and pot.sup_u == 2.5 and pot.grad_sup == 2.0 and pot.grad_lip == 2.0
    z = np.random.default_rng(0).normal(size=(100, 2)) * 3
    assert np.all(pot.value(z) <= pot.sup_u)
    eps = 1e-6
    num = np.stack([(pot.value(z + eps * e) - pot.value(z - eps * e)) / (2 * eps) for e in np.eye(2)], -1)
    np.testing.assert_allclose(pot.grad(z), num, atol=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=8))
def test_tabulated_bounds_are_tight(vals):
    knots = np.linspace(-2, 2, len(vals))
    pot = TabulatedSmooth(knots, vals)
    z = np.linspace(-3, 3, 20001)[:, None]
    assert pot.value(z).max() <= pot.sup_u + 1e-12
    assert pot.value(z).max() >= pot.sup_u - 1e-6
    g = pot.grad(z)
    assert np.abs(g).max() <= pot.grad_sup + 1e-12
    lip = np.abs(np.diff(g[:, 0])).max() / (z[1, 0] - z[0, 0])
    assert lip <= pot.grad_lip * (1 + 1e-6) + 1e-9


def test_tabulated_flat_outside_knots():
    pot = TabulatedSmooth([0, 1, 2], [0.0, 1.0, 0.0], d=2)
    assert pot.d == 2 and pot.sup_u == pytest.approx(2 * pot.spline(1.0))
    np.testing.assert_array_equal(pot.grad(np.array([[5.0, -4.0]])), 0.0)
    with pytest.raises(ConfigError):
        TabulatedSmooth([0, 0, 1], [0, 1, 2])


def test_certify_and_factory():
    bad = PotentialSpec("custom", 1, None, 1.0, 1.0)
    with pytest.raises(ConfigError):
        bad.certify()
    assert potential_from_dict({"family": "cosine", "amplitude": 1.0}, 3).d == 3
    assert potential_from_dict({}, 2).is_zero
    with pytest.raises(ConfigError):
        potential_from_dict({"family": "quartic"}, 1)
