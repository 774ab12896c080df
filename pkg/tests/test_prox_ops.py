import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.kkt_certify import subdiff_l1
from src.prox_ops import (
    Regularizer, RegularizerKind, project_ball, project_balls, project_box, project_point,
    prox_clot, prox_en, prox_l1,
)


def test_prox_l1_known_values():
    assert_allclose(prox_l1([1.5, -0.3, -2.0], 1.0), [0.5, 0.0, -1.0])
    assert prox_l1(0.7, 0.0) == pytest.approx(0.7)


def test_prox_l1_matches_grid_minimizer():
    grid = np.arange(-3.0, 3.0, 1e-4)
    cost = 0.5 * (grid - 1.5) ** 2 + np.abs(grid)
    assert prox_l1(1.5, 1.0) == pytest.approx(grid[np.argmin(cost)], abs=1e-4)


def test_prox_clot_known_values():
    assert_allclose(prox_clot([3.0, 0.0], 1.0, 1.0), [1.0, 0.0])
    assert_array_equal(prox_clot([0.5, 0.5], 1.0, 1.0), [0.0, 0.0])


def test_prox_clot_matches_grid_minimizer():
    x1, x2 = np.meshgrid(np.arange(0.0, 2.0 + 1e-9, 1e-3), np.arange(-0.5, 0.5 + 1e-9, 1e-3), indexing="ij")
    cost = 0.5 * ((x1 - 3.0) ** 2 + x2 ** 2) + np.abs(x1) + np.abs(x2) + np.hypot(x1, x2)
    i, j = np.unravel_index(np.argmin(cost), cost.shape)
    assert_allclose(prox_clot([3.0, 0.0], 1.0, 1.0), [x1[i, j], x2[i, j]], atol=1e-3)


def test_prox_clot_limits():
    v = np.array([2.0, -0.5, 1.0])
    assert_allclose(prox_clot(v, 0.7, 0.0), prox_l1(v, 0.7))
    shrunk = prox_clot(v, 0.0, 1.0)
    assert_allclose(shrunk, (1.0 - 1.0 / np.linalg.norm(v)) * v)


def test_prox_en_known_values():
    assert prox_en(3.0, 1.0, 0.5) == pytest.approx(1.0)
    v = np.array([2.0, -0.5, 1.0])
    assert_allclose(prox_en(v, 0.3, 0.0), prox_l1(v, 0.3))


def test_prox_clot_satisfies_optimality(rng):
    for _ in range(200):
        v = rng.standard_normal(5) * 3
        mu1, mu2 = rng.uniform(0.01, 2.0, size=2)
        x = prox_clot(v, mu1, mu2)
        norm = np.linalg.norm(x)
        if norm == 0.0:
            assert np.linalg.norm(prox_l1(v, mu1)) <= mu2 + 1e-12
        else:
            r = v - x - mu2 * x / norm
            assert np.max(subdiff_l1(x).scaled(mu1).distance(r)) <= 1e-9


def test_prox_l1_satisfies_optimality(rng):
    # v - x must lie in mu * d||x||_1
    for _ in range(200):
        v = rng.standard_normal(6) * 3
        mu = rng.uniform(0.01, 2.0)
        x = prox_l1(v, mu)
        assert np.max(subdiff_l1(x).scaled(mu).distance(v - x)) <= 1e-12


def test_prox_en_satisfies_optimality(rng):
    # v - x - 2 mu2 x must lie in mu1 * d||x||_1
    for _ in range(200):
        v = rng.standard_normal(6) * 3
        mu1, mu2 = rng.uniform(0.01, 2.0, size=2)
        x = prox_en(v, mu1, mu2)
        assert np.max(subdiff_l1(x).scaled(mu1).distance(v - x - 2.0 * mu2 * x)) <= 1e-12


@pytest.mark.parametrize("prox", [
    lambda v: prox_l1(v, 0.4),
    lambda v: prox_en(v, 0.4, 0.3),
    lambda v: prox_clot(v, 0.4, 0.3),
    lambda v: project_box(v, 1.0),
    lambda v: project_ball(v, np.ones(4), 0.5),
])
def test_proxes_are_nonexpansive(prox, rng):
    for _ in range(1000):
        a, b = rng.standard_normal(4) * 2, rng.standard_normal(4) * 2
        assert np.linalg.norm(prox(a) - prox(b)) <= np.linalg.norm(a - b) + 1e-12


def test_moreau_identity_for_l1(rng):
    v = rng.standard_normal(50) * 2
    t = 0.6
    assert_allclose(prox_l1(v, t) + t * project_box(v / t, 1.0), v, atol=1e-12)


def test_projections():
    assert_allclose(project_box([2.0, -3.0, 0.5], 1.0), [1.0, -1.0, 0.5])
    assert_allclose(project_ball([3.0, 4.0], [0.0, 0.0], 1.0), [0.6, 0.8])
    assert_allclose(project_ball([0.1, 0.1], [0.0, 0.0], 1.0), [0.1, 0.1])
    target = np.array([1.0, 2.0])
    out = project_point([9.0, 9.0], target)
    assert_array_equal(out, target)
    assert out is not target


def test_project_balls_rowwise():
    P = np.array([[3.0, 4.0], [0.1, 0.0], [0.0, 0.0]])
    centers = np.zeros((3, 2))
    assert_allclose(project_balls(P, centers, 1.0), [[0.6, 0.8], [0.1, 0.0], [0.0, 0.0]])


def test_regularizer_weights():
    h, lam = 0.01, 0.1
    assert Regularizer("lasso", lam, h).weights == (h, 0.0)
    assert Regularizer("en", lam, h).weights == pytest.approx((h, h * lam))
    assert Regularizer(RegularizerKind.CLOT, lam, h).weights == pytest.approx((h, math.sqrt(h) * lam))
    assert Regularizer("clot", lam, h, scale=10.0).weights == pytest.approx((10 * h, 10 * math.sqrt(h) * lam))


def test_regularizer_value_and_prox():
    u = np.array([-0.5, 0.0, 0.5])
    reg = Regularizer("clot", 0.1, 0.25)
    assert reg.value(u) == pytest.approx(0.25 * 1.0 + 0.5 * 0.1 * math.sqrt(0.5))
    assert Regularizer("en", 0.1, 0.25).value(u) == pytest.approx(0.25 + 0.025 * 0.5)
    assert_allclose(reg.prox(u, 2.0), prox_clot(u, 0.5, 0.1))


def test_regularizer_rejects_bad_parameters():
    with pytest.raises(ValueError):
        Regularizer("clot", -0.1, 0.1)
    with pytest.raises(ValueError):
        Regularizer("en", 0.1, 0.0)
    with pytest.raises(ValueError):
        Regularizer("ridge", 0.1, 0.1)
