import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mixforge.exceptions import SizeError
from mixforge.simplex import SimplexProblem, minimize_on_simplex, project_simplex


def cvxpy_reference(problem):
    w = cp.Variable(problem.size)
    obj = sum(cp.norm(b @ w, 2) for b in problem.blocks)
    if problem.linear is not None:
        obj = obj + problem.linear @ w
    if problem.inverse_index is not None and problem.inverse_weight > 0:
        obj = obj + problem.inverse_weight * cp.inv_pos(w[problem.inverse_index])
    cp.Problem(cp.Minimize(obj), [w >= 0, cp.sum(w) == 1]).solve(solver="CLARABEL")
    return problem.objective(np.clip(w.value, 0, None) / np.clip(w.value, 0, None).sum())


def test_projection_examples():
    np.testing.assert_allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(project_simplex([0.0, 0.0, 0.0, 0.0]), [0.25] * 4)
    with pytest.raises(SizeError):
        project_simplex([])


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(1, 12), elements=st.floats(-5, 5)))
def test_projection_matches_qp(v):
    p = project_simplex(v)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)
    # KKT: v - p = theta on the support, <= theta off it
    diff = v - p
    theta = diff[p > 0].max()
    np.testing.assert_allclose(diff[p > 0], theta, atol=1e-10)
    assert np.all(diff[p == 0] <= theta + 1e-10)


def test_single_weight():
    sol = minimize_on_simplex(SimplexProblem([np.ones((3, 1))]))
    assert sol.w.tolist() == [1.0]


def test_inconsistent_sizes():
    with pytest.raises(SizeError):
        SimplexProblem([np.ones((2, 3))], linear=np.ones(4))
    with pytest.raises(SizeError):
        minimize_on_simplex(SimplexProblem([np.ones((2, 3))]), w0=[1.0, 0.0, 0.0])


def test_exact_cancellation_reaches_zero():
    a = np.array([[1.0, -2.0, 0.5]])
    sol = minimize_on_simplex(SimplexProblem([a], ridge=1e-8))
    assert np.linalg.norm(a @ sol.w) <= 1e-12
    assert sol.w.sum() == pytest.approx(1.0, abs=1e-14)


def test_ridge_breaks_ties_toward_min_norm():
    # every w is optimal for a zero block, so the ridge picks the uniform point
    sol = minimize_on_simplex(SimplexProblem([np.zeros((1, 4))], linear=np.zeros(4), ridge=1e-8))
    np.testing.assert_allclose(sol.w, 0.25, atol=1e-6)


def test_pruning_reports_indices():
    a = np.array([[1.0, -1.0, 5.0, 5.0]])
    sol = minimize_on_simplex(SimplexProblem([a], linear=[0, 0, 1, 1], ridge=1e-8), prune_threshold=1e-6)
    assert sorted(sol.pruned) == [2, 3]
    np.testing.assert_allclose(sol.w, [0.5, 0.5, 0, 0], atol=1e-9)


def random_problem(rng, inverse=False):
    m = int(rng.integers(2, 9))
    blocks = [rng.normal(size=(int(rng.integers(1, 5)), m)) for _ in range(int(rng.integers(1, 4)))]
    lin = rng.uniform(0, 1, size=m) if rng.uniform() < 0.5 else None
    kw = {}
    if inverse:
        kw = dict(inverse_index=int(rng.integers(m)), inverse_weight=float(rng.uniform(1e-4, 1e-1)))
    return SimplexProblem(blocks, linear=lin, **kw)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), inverse=st.booleans())
def test_matches_cvxpy(seed, inverse):
    problem = random_problem(np.random.default_rng(seed), inverse)
    sol = minimize_on_simplex(problem)
    assert sol.w.min() >= 0 and abs(sol.w.sum() - 1) <= 1e-10
    ref = cvxpy_reference(problem)
    assert sol.objective <= ref + 1e-7 * max(1.0, abs(ref))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_optimal_value_independent_of_start(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng)
    a = minimize_on_simplex(problem)
    b = minimize_on_simplex(problem, w0=rng.dirichlet(np.ones(problem.size)))
    assert abs(a.objective - b.objective) <= 1e-7


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_vertex_domination(seed):
    problem = random_problem(np.random.default_rng(seed))
    sol = minimize_on_simplex(problem)
    for e in np.eye(problem.size):
        assert sol.objective <= problem.objective(e) + 1e-10
