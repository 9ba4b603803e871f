import math

import numpy as np
import pytest

from roadbound import conic, evaluation
from roadbound.errors import NoTruth
from roadbound.simulator import BoundaryTruth, FrameTruth
from roadbound.tracker import BoundaryEstimate, SideEstimate

from conftest import points_on_circle


def line_pts(y, xs=np.arange(0.0, 20.0)):
    return np.column_stack([xs, np.full(xs.size, y)])


def test_frame_error_examples():
    e, _ = evaluation.frame_error(conic.normalize([0, 0, 1, -3.5]), line_pts(3.5))
    assert e == pytest.approx(0, abs=1e-9)
    # estimate 0.2 m inward of the truth: truth lies on the far side
    e, d = evaluation.frame_error(conic.normalize([0, 0, 1, -3.3]), line_pts(3.5))
    assert e == pytest.approx(-0.2, abs=1e-12)
    np.testing.assert_allclose(d, -0.2, atol=1e-12)
    pts = points_on_circle((0, 40), 36.5, np.linspace(-2.0, -1.2, 20))
    e, _ = evaluation.frame_error(conic.circle_coefficients((0, 40), 36.6), pts)
    assert abs(e) == pytest.approx(0.1, abs=1e-6)
    with pytest.raises(NoTruth):
        evaluation.frame_error(conic.normalize([0, 0, 1, -3.3]), np.zeros((0, 2)))


def test_constant_error_trajectory():
    m = evaluation.trajectory_metrics([np.full(10, 0.05) for _ in range(20)])
    assert m.bias == pytest.approx(0.05)
    assert m.sigma == pytest.approx(0, abs=1e-15)
    np.testing.assert_allclose(m.frame_mae, 0, atol=1e-15)
    assert m.failure_rate == 0


def test_absent_estimate_counts_as_failure():
    d = [np.full(10, 0.05 if k % 2 else -0.05) for k in range(100)]
    d[17] = None
    m = evaluation.trajectory_metrics(d)
    assert m.failed[17]
    assert m.failure_rate == pytest.approx(0.01)


def test_three_sigma_outlier_excluded(rng):
    d = [rng.normal(0.0, 0.01, 20) + rng.normal(0, 0.01) for _ in range(200)]
    d[50] = d[50] + 1.0
    m = evaluation.trajectory_metrics(d)
    assert m.failed[50]
    assert m.failed.sum() == 1
    assert np.isnan(m.frame_mae[50])


def test_bias_invariance_and_order(rng):
    d = [rng.normal(rng.normal(0, 0.05), 0.1, 15) for _ in range(60)]
    a = evaluation.trajectory_metrics(d)
    b = evaluation.trajectory_metrics([x + 0.37 for x in d])
    np.testing.assert_allclose(a.frame_mae, b.frame_mae, atol=1e-12)
    perm = rng.permutation(60)
    c = evaluation.trajectory_metrics([d[k] for k in perm])
    np.testing.assert_array_equal(c.failed, a.failed[perm])
    assert np.all(a.frame_mae[~a.failed] >= 0)


def test_planted_offset_hand_computation():
    # alternate frames 0.1 m and 0.3 m off; bias 0.2, every frame's MAE is 0.1
    d = [np.full(5, 0.1 if k % 2 else 0.3) for k in range(10)]
    m = evaluation.trajectory_metrics(d)
    assert m.bias == pytest.approx(0.2)
    assert m.mean_mae == pytest.approx(0.1)
    assert m.std_mae == pytest.approx(0.0, abs=1e-15)


def _truth(t, y_left=-3.5, y_right=3.5):
    return FrameTruth(t, (0, 0, 0), [BoundaryTruth("left", conic.normalize([0, 0, 1, -y_left]), line_pts(y_left)),
                                      BoundaryTruth("right", conic.normalize([0, 0, 1, -y_right]), line_pts(y_right))])


def _est(t, y_left, y_right, provisional=False):
    side = lambda y: SideEstimate(conic.normalize([0, 0, 1, -y]), y, 1) if y is not None else None
    return BoundaryEstimate(t, side(y_left), side(y_right), provisional=provisional)


def test_evaluate_run():
    truths = [_truth(0.1 * k) for k in range(10)]
    ests = [_est(0.1 * k, -3.5, 3.5, provisional=k < 3) for k in range(10)]
    ests[5] = None
    ests[6] = _est(0.6, -3.5, None)
    run = evaluation.evaluate_run(ests, truths)
    assert run.sides["left"].n_frames == 7
    assert run.sides["left"].failure_rate == pytest.approx(1 / 7)
    assert run.sides["right"].failure_rate == pytest.approx(2 / 7)
    assert run.sides["left"].mean_mae == pytest.approx(0, abs=1e-12)
    rec = evaluation.metrics_record(run)
    assert rec["sides"]["right"]["failed"].count(True) == 2
    all_frames = evaluation.evaluate_run(ests, truths, skip_provisional=False)
    assert all_frames.sides["left"].n_frames == 10


def test_format_table():
    truths = [_truth(0.1 * k) for k in range(5)]
    run = evaluation.evaluate_run([_est(0.1 * k, -3.4, 3.5) for k in range(5)], truths)
    text = evaluation.format_table(run.sides)
    assert "mean e_MAE (cm)" in text and "% Failure" in text
    assert text.splitlines()[2].split()[0] == "left"
