import numpy as np
import pytest

from resodrift.fourier import FourierPerturbation, canonical_mode
from resodrift.poly import PolyField

TWO_PI = 2.0 * np.pi


def brute_eval(terms, th1, th2, I1, I2):
    """Direct trig sum, no canonicalization: the reference the class must match."""
    total = np.zeros(np.broadcast(np.asarray(th1), np.asarray(I1)).shape)
    for k, a, b in terms:
        phase = TWO_PI * (k[0] * np.asarray(th1) + k[1] * np.asarray(th2))
        av = a(I1, I2) if isinstance(a, PolyField) else a
        bv = b(I1, I2) if isinstance(b, PolyField) else b
        total = total + av * np.cos(phase) + bv * np.sin(phase)
    return total


def test_canonical_mode_folding():
    assert canonical_mode((1, -2)) == ((1, -2), 1)
    assert canonical_mode((-1, 2)) == ((1, -2), -1)
    assert canonical_mode((0, 3)) == ((0, 3), 1)
    assert canonical_mode((0, -3)) == ((0, 3), -1)
    assert canonical_mode((0, 0)) == ((0, 0), 1)


def test_evaluate_matches_direct_sum(rng):
    terms = [
        ((1, 0), 0.3, -0.2),
        ((0, 1), 0.0, 1.0),
        ((2, -1), -0.5, 0.25),
        ((0, 0), 0.1, 0.0),
    ]
    f = FourierPerturbation.from_terms(terms)
    th1, th2 = rng.uniform(0, 1, (2, 60))
    I1, I2 = rng.uniform(-1, 1, (2, 60))
    np.testing.assert_allclose(
        f(th1, th2, I1, I2), brute_eval(terms, th1, th2, I1, I2), atol=1e-13
    )


def test_negative_modes_fold_with_sin_parity(rng):
    # cos is even and sin is odd under k -> -k, so these two must be equal
    f1 = FourierPerturbation.from_terms([((-1, 2), 0.4, 0.7)])
    f2 = FourierPerturbation.from_terms([((1, -2), 0.4, -0.7)])
    assert f1.mode_keys == f2.mode_keys == [(1, -2)]
    th1, th2 = rng.uniform(0, 1, (2, 30))
    np.testing.assert_allclose(
        f1(th1, th2, 0.0, 0.0), f2(th1, th2, 0.0, 0.0), atol=1e-15
    )


def test_duplicate_terms_accumulate():
    f = FourierPerturbation.from_terms([((1, 1), 0.25, 0.0), ((-1, -1), 0.25, 0.5)])
    a, b = f.coefficient((1, 1))
    assert a(0, 0) == 0.5
    assert b(0, 0) == -0.5


def test_action_dependent_coefficients(rng):
    poly = PolyField.from_terms([(1, 0, 1.0), (0, 0, 0.5)])
    terms = [((1, 0), poly, 0.0)]
    f = FourierPerturbation.from_terms(terms)
    assert not f.is_action_independent
    th1, th2 = rng.uniform(0, 1, (2, 20))
    I1, I2 = rng.uniform(-1, 1, (2, 20))
    np.testing.assert_allclose(
        f(th1, th2, I1, I2), (I1 + 0.5) * np.cos(TWO_PI * th1), atol=1e-13
    )


def test_gradients_against_finite_differences(rng):
    poly = PolyField.from_terms([(0, 1, 1.0)])
    f = FourierPerturbation.from_terms(
        [((1, 0), 0.3, 0.1), ((1, 1), poly, -0.2), ((0, 2), 0.0, 0.7)]
    )
    h = 1e-6
    for _ in range(25):
        th1, th2 = rng.uniform(0, 1, 2)
        I1, I2 = rng.uniform(-1, 1, 2)
        g_th = f.theta_gradient(th1, th2, I1, I2)
        g_I = f.action_gradient(th1, th2, I1, I2)
        fd = [
            (f(th1 + h, th2, I1, I2) - f(th1 - h, th2, I1, I2)) / (2 * h),
            (f(th1, th2 + h, I1, I2) - f(th1, th2 - h, I1, I2)) / (2 * h),
            (f(th1, th2, I1 + h, I2) - f(th1, th2, I1 - h, I2)) / (2 * h),
            (f(th1, th2, I1, I2 + h) - f(th1, th2, I1, I2 - h)) / (2 * h),
        ]
        assert abs(g_th[0] - fd[0]) < 1e-6
        assert abs(g_th[1] - fd[1]) < 1e-6
        assert abs(g_I[0] - fd[2]) < 1e-8
        assert abs(g_I[1] - fd[3]) < 1e-8


def test_partial_matches_gradient_components(rng):
    f = FourierPerturbation.from_terms([((2, 1), 0.4, -0.3), ((0, 1), 0.2, 0.0)])
    d_th1 = f.partial(d_theta1=1)
    th1, th2 = rng.uniform(0, 1, (2, 40))
    got = d_th1(th1, th2, 0.0, 0.0)
    want = f.theta_gradient(th1, th2, np.zeros(40), np.zeros(40))[0]
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_filter_and_max_mode():
    f = FourierPerturbation.from_terms(
        [((1, 0), 1.0, 0.0), ((0, 3), 0.0, 1.0), ((2, -2), 0.5, 0.0)]
    )
    assert f.max_mode == 3
    resonant = f.filter(lambda k: k[1] == 0)
    assert resonant.mode_keys == [(1, 0)]
    nothing = f.filter(lambda k: False)
    assert nothing.is_zero
    assert nothing.max_mode == 0


def test_zero_perturbation_evaluates_to_zero():
    z = FourierPerturbation.zero()
    assert z.is_zero
    assert z.n_modes == 0
    vals = z(np.array([0.1, 0.2]), np.array([0.3, 0.4]), 0.0, 0.0)
    np.testing.assert_array_equal(vals, np.zeros(2))
