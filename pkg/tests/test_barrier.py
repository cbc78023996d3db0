import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridbf import barrier as bar


def _box(n, lo, hi):
    eye = np.eye(n)
    return bar.LinearBlock(np.vstack([eye, -eye]), np.concatenate([-hi * np.ones(n), lo * np.ones(n)]), label="box")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
def test_box_projection_matches_clip(c):
    # min |x - c|^2 over [-1, 1]^n has the analytic solution clip(c)
    c = np.array(c)
    n = c.size
    obj = bar.Objective(np.eye(n), -c, float(c @ c))
    res = bar.barrier_minimize(obj, [_box(n, -1.0, 1.0)], np.zeros(n), tol=1e-10)
    assert res.converged
    np.testing.assert_allclose(res.x, np.clip(c, -1, 1), atol=1e-5)


def test_linear_objective_over_disk():
    # min a.x s.t. |x|^2 <= r^2  ->  x = -r a / |a|
    a = np.array([3.0, -4.0])
    disk = bar.ModulusBlock(np.array([[1.0, 1j]]), np.array([0j]), 4.0, label="disk")
    res = bar.barrier_minimize(bar.Objective.linear(a), [disk], np.zeros(2), tol=1e-10)
    np.testing.assert_allclose(res.x, -2.0 * a / 5.0, atol=1e-5)
    assert res.objective == pytest.approx(-10.0, abs=1e-4)


def test_quad_over_linear_is_a_cone():
    # min tau s.t. |x0 + x1 j - (3 + 4j)| <= sqrt(c) tau with x fixed near 0 by a box:
    # with c = 4 the optimum is |(3+4j) - x| / 2 at the box corner nearest 3+4j
    cone = bar.QuadOverLinearBlock(np.array([[1.0, 1j, 0.0]]), np.array([-(3 + 4j)]), 4.0, tau_index=2)
    box = bar.LinearBlock(np.array([[1.0, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]]), -np.ones(4) * 0.5)
    res = bar.barrier_minimize(bar.Objective.linear([0.0, 0.0, 1.0]), [cone, box], np.array([0, 0, 10.0]),
                               tol=1e-10)
    assert res.x[2] == pytest.approx(abs(3 + 4j - (0.5 + 0.5j)) / 2, abs=1e-5)


def test_block_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    b = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    blocks = [bar.ModulusBlock(a, b, 2.0), bar.QuadOverLinearBlock(a, b, 1.5, tau_index=2).shifted(1)]
    x = np.array([0.3, -0.2, 2.0])
    h = 1e-6
    for blk in blocks:
        num = np.stack([(blk.values(x + h * e) - blk.values(x - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
        np.testing.assert_allclose(blk.grads(x), num, atol=1e-6)
        w = rng.uniform(0.1, 1, 4)
        hn = np.stack([(w @ blk.grads(x + h * e) - w @ blk.grads(x - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
        np.testing.assert_allclose(blk.hess(x, w), hn, atol=1e-5)


def test_infeasible_start_rejected():
    with pytest.raises(ValueError):
        bar.barrier_minimize(bar.Objective.linear([1.0]), [_box(1, -1, 1)], np.array([2.0]))


def test_phase_one_success_and_failure():
    blocks = [_box(2, 0.5, 0.7)]
    x, slack = bar.phase_one(blocks, np.array([3.0, -3.0]))
    assert slack < 0 and bar.strictly_feasible(blocks, x)
    # x <= -1 and x >= 1 together are infeasible
    conflict = [bar.LinearBlock([[1.0]], [1.0]), bar.LinearBlock([[-1.0]], [1.0])]
    _, slack = bar.phase_one(conflict, np.array([0.0]))
    assert slack > 0.5


def test_early_stop_callback():
    res = bar.barrier_minimize(bar.Objective.linear([1.0]), [_box(1, -1, 1)], np.array([0.9]),
                               stop=lambda z: z[0] < 0)
    assert res.stopped_early and res.x[0] < 0


def test_unconstrained_newton_step():
    q = np.array([[2.0, 0.5], [0.5, 1.0]])
    c = np.array([1.0, -2.0])
    res = bar.barrier_minimize(bar.Objective(q, c), [], np.zeros(2))
    np.testing.assert_allclose(res.x, -np.linalg.solve(q, c))


def test_violation_helpers():
    blocks = [_box(2, -1, 1)]
    assert bar.max_violation(blocks, np.array([1.5, 0])) == pytest.approx(0.5)
    assert not bar.strictly_feasible(blocks, np.array([1.0, 0]))
    assert bar.strictly_feasible(blocks, np.array([0.2, 0]))


def test_zero_variables():
    res = bar.barrier_minimize(bar.Objective(np.zeros((0, 0)), np.zeros(0), 2.5), [], np.zeros(0))
    assert res.converged and res.x.size == 0 and res.objective == 2.5
