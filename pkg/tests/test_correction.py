"""Epoch correction and per-axis scale feedback."""

import numpy as np
import pytest

from swarmloc.correction import (CorrectionBatch, ScaleState,
                                 apply_scale_feedback, correct_epoch,
                                 scale_error, update_scale_state)


class TestScaleError:
    def test_matching_displacements_give_unity(self):
        f = scale_error([0.0, 0.0, 0.0], [1.0, 2.0, 3.0],
                        [0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
        assert np.allclose(f, 1.0)

    def test_x_axis_factor(self):
        f = scale_error([0.0, 0.0, 0.0], [2.0, 0.0, 0.0],
                        [0.0, 0.0, 0.0], [4.0, 0.0, 0.0])
        assert np.allclose(f, [0.5, 1.0, 1.0])

    def test_static_axis_returns_unity(self):
        # estimated z barely moved: quotient would be 0.3 / 0.001
        f = scale_error([0.0, 0.0, 0.0], [1.0, 0.0, 0.3],
                        [0.0, 0.0, 0.0], [1.0, 0.0, 0.001])
        assert f[2] == 1.0

    def test_clamped_to_bounds(self):
        f = scale_error([0.0, 0.0, 0.0], [10.0, 0.1, 0.0],
                        [0.0, 0.0, 0.0], [1.0, 1.0, 0.0])
        assert f[0] == 2.0  # raw 10 clamps to s_max
        assert f[1] == 0.5  # raw 0.1 clamps to s_min


class TestUpdateScaleState:
    def test_hadamard_product(self):
        state = update_scale_state(ScaleState.initial(), [0.5, 1.0, 1.0])
        assert np.allclose(state.factors, [0.5, 1.0, 1.0])
        assert state.epoch == 1

    def test_clamp_at_lower_bound(self):
        state = ScaleState(np.array([0.5, 1.0, 1.0]))
        state = update_scale_state(state, [0.5, 1.0, 1.0])
        assert np.allclose(state.factors, [0.5, 1.0, 1.0])  # raw 0.25 clamped

    def test_accumulates_multiplicatively(self):
        state = ScaleState(np.array([1.2, 1.0, 1.0]))
        state = update_scale_state(state, [1.1, 1.0, 1.0])
        assert state.factors[0] == pytest.approx(1.32, abs=1e-12)

    def test_never_leaves_clamp_range(self):
        rng = np.random.default_rng(71)
        state = ScaleState.initial()
        for _ in range(500):
            state = update_scale_state(state, rng.uniform(0.2, 3.0, 3))
            assert np.all(state.factors >= 0.5) and np.all(state.factors <= 2.0)

    def test_state_validation(self):
        with pytest.raises(ValueError):
            ScaleState(np.array([0.1, 1.0, 1.0]))  # below s_min
        assert np.allclose(ScaleState.initial().factors, 1.0)


class TestCorrectEpoch:
    def test_zero_discrepancy_is_identity(self):
        nodes = np.cumsum(np.ones((5, 3)), axis=0)
        batch = correct_epoch(nodes, nodes[-1])
        assert np.array_equal(batch.after, nodes)
        assert np.allclose(batch.discrepancy, 0.0)

    def test_linear_distribution(self):
        nodes = np.zeros((5, 3))
        anchor = np.array([4.0, 0.0, 0.0])
        batch = correct_epoch(nodes, anchor)
        expected = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0],
                             [3.0, 0, 0], [4.0, 0, 0]])
        assert np.allclose(batch.after, expected, atol=1e-12)

    def test_endpoints_are_exact(self):
        rng = np.random.default_rng(72)
        for _ in range(50):
            nodes = rng.normal(0.0, 5.0, (int(rng.integers(2, 20)), 3))
            anchor = rng.normal(0.0, 5.0, 3)
            batch = correct_epoch(nodes, anchor)
            assert np.array_equal(batch.after[0], nodes[0])
            assert np.array_equal(batch.after[-1], anchor)

    def test_increments_shift_by_constant(self):
        rng = np.random.default_rng(73)
        nodes = rng.normal(0.0, 2.0, (8, 3))
        anchor = rng.normal(0.0, 2.0, 3)
        batch = correct_epoch(nodes, anchor)
        shift = np.diff(batch.after, axis=0) - np.diff(nodes, axis=0)
        assert np.abs(shift - batch.discrepancy / 7.0).max() < 1e-9

    def test_single_node_errors(self):
        with pytest.raises(ValueError, match="empty epoch"):
            correct_epoch(np.zeros((1, 3)), np.zeros(3))


class TestApplyScaleFeedback:
    def test_unit_state_is_identity(self):
        d = apply_scale_feedback(np.array([2.0, -1.0, 0.5]), ScaleState.initial())
        assert np.array_equal(d, [2.0, -1.0, 0.5])

    def test_componentwise_product(self):
        state = ScaleState(np.array([0.5, 1.0, 1.0]))
        assert np.allclose(apply_scale_feedback([2.0, 0.0, 0.0], state), [1.0, 0.0, 0.0])
        state = ScaleState(np.array([0.8, 1.25, 1.0]))
        assert np.allclose(apply_scale_feedback([1.0, 1.0, 1.0], state),
                           [0.8, 1.25, 1.0], atol=1e-12)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            apply_scale_feedback(np.zeros(2), ScaleState.initial())


def test_scale_feedback_converges_on_pure_scale_error():
    """A robot whose VIO stretches every axis by 1.3 settles to e_S = 1/1.3.

    Simulates the anchor loop: each epoch the robot truly moves by delta,
    the (scale-corrected) VIO reports e_S * 1.3 * delta, and exact anchors
    supply the true displacement.
    """
    s = 1.3
    state = ScaleState.initial()
    true_anchor = np.zeros(3)
    est_pos = np.zeros(3)
    rng = np.random.default_rng(74)
    for _ in range(3):
        delta = rng.uniform(1.0, 3.0, 3)
        vio_delta = apply_scale_feedback(s * delta, state)
        prev_anchor, prev_est = true_anchor.copy(), est_pos.copy()
        true_anchor = true_anchor + delta
        est_pos = est_pos + vio_delta
        factors = scale_error(prev_anchor, true_anchor, prev_est, est_pos)
        state = update_scale_state(state, factors)
        est_pos = true_anchor.copy()  # epoch correction snaps to the anchor
    assert np.abs(state.factors - 1.0 / s).max() < 0.1 / s
