import numpy as np
import pytest

from catseg.optim import AdamState, adam_step


def test_first_step_moves_by_lr_sign():
    # with bias correction, step 1 moves each weight by ~lr * sign(grad)
    p = np.zeros(5)
    g = np.array([3.0, -0.5, 1e-3, -2.0, 0.7])
    state = AdamState(lr=0.1)
    adam_step([p], [g], state)
    assert np.allclose(p, -0.1 * np.sign(g), atol=1e-5)
    assert state.step == 1


def test_zero_gradient_leaves_params_unchanged():
    p = np.array([1.0, -2.0])
    state = AdamState(lr=0.1)
    adam_step([p], [np.zeros(2)], state)
    assert np.array_equal(p, [1.0, -2.0])
    assert state.step == 1


def test_quadratic_descent_is_monotone():
    w = np.array([1.0])
    state = AdamState(lr=0.1)
    values = [abs(w[0])]
    for _ in range(5):
        adam_step([w], [2 * w], state)  # gradient of w^2
        values.append(abs(w[0]))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_matches_reference_formula():
    rng = np.random.default_rng(0)
    p = rng.standard_normal(7)
    ref = p.copy()
    state = AdamState(lr=1e-2)
    m = np.zeros(7)
    v = np.zeros(7)
    for t in range(1, 4):
        g = rng.standard_normal(7)
        adam_step([p], [g], state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 1e-2 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.allclose(p, ref, atol=1e-12)


def test_state_validation():
    with pytest.raises(ValueError):
        AdamState(beta1=1.0)
    with pytest.raises(ValueError):
        AdamState(lr=0.0)
    with pytest.raises(ValueError, match="params"):
        adam_step([np.zeros(2)], [], AdamState())
    with pytest.raises(ValueError, match="mismatch"):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState())
