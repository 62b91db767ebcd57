"""
Convex minimization over the probability simplex.

The programs solved here all have the form::

    minimize   sum_j ||A_j w||_2 + c.w + rho ||w||^2 + lam / w_m
    subject to w >= 0, sum(w) = 1

``minimize_on_simplex`` uses a log-barrier interior-point method with
epigraph variables ``t_j >= ||A_j w||`` and equality-constrained Newton
centering steps.  Norm terms are sharp at zero, which first-order methods
approach only sublinearly; the barrier path reaches them to ~1e-12, and a
final polish step snaps near-zero blocks to exact zeros on the support.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, SizeError


def project_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-based O(n log n) algorithm (Held et al.; Duchi et al. 2008).
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise SizeError("project_simplex expects a non-empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _compress(block, rel_tol=1e-14):
    """Rows ``S V^T`` with ``||S V^T w|| == ||A w||`` and full row rank."""
    block = np.atleast_2d(np.asarray(block, dtype=float))
    if not np.any(block):
        return block[:0]
    _, s, vt = np.linalg.svd(block, full_matrices=False)
    keep = s > rel_tol * s[0]
    return s[keep, None] * vt[keep]


@dataclass
class SimplexProblem:
    """Data of one simplex program; see the module docstring."""

    blocks: list
    linear: np.ndarray = None
    ridge: float = 0.0
    inverse_index: int = None
    inverse_weight: float = 0.0
    compressed: list = field(init=False, repr=False)

    def __post_init__(self):
        self.blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.blocks]
        sizes = {b.shape[1] for b in self.blocks}
        if self.linear is not None:
            self.linear = np.asarray(self.linear, dtype=float)
            sizes.add(self.linear.size)
        if len(sizes) != 1:
            raise SizeError(f"inconsistent number of weights across program terms: {sorted(sizes)}")
        self.compressed = [c for c in (_compress(b) for b in self.blocks) if len(c)]

    @property
    def size(self):
        if self.blocks:
            return self.blocks[0].shape[1]
        return self.linear.size

    def block_norms(self, w):
        return [float(np.linalg.norm(b @ w)) for b in self.blocks]

    def objective(self, w, with_ridge=False):
        """Program objective at ``w`` (ridge tie-break excluded by default)."""
        w = np.asarray(w, dtype=float)
        val = sum(self.block_norms(w))
        if self.linear is not None:
            val += float(self.linear @ w)
        if self.inverse_index is not None and self.inverse_weight > 0:
            wm = w[self.inverse_index]
            val += self.inverse_weight / wm if wm > 0 else np.inf
        if with_ridge:
            val += self.ridge * float(w @ w)
        return val


@dataclass
class SimplexSolution:
    w: np.ndarray
    objective: float
    iterations: int
    gap: float
    pruned: list
    polished: bool


def _barrier_terms(problem, w, t, tau):
    """Value, gradient and Hessian of ``tau f0 + phi`` in (w, t)."""
    m = w.size
    blocks = problem.compressed
    nb = len(blocks)
    n = m + nb
    grad = np.zeros(n)
    hess = np.zeros((n, n))

    val = tau * float(np.sum(t))
    grad[m:] += tau
    if problem.linear is not None:
        val += tau * float(problem.linear @ w)
        grad[:m] += tau * problem.linear
    if problem.ridge:
        val += tau * problem.ridge * float(w @ w)
        grad[:m] += 2 * tau * problem.ridge * w
        hess[np.arange(m), np.arange(m)] += 2 * tau * problem.ridge
    k = problem.inverse_index
    if k is not None and problem.inverse_weight > 0:
        lam = problem.inverse_weight
        val += tau * lam / w[k]
        grad[k] += -tau * lam / w[k] ** 2
        hess[k, k] += 2 * tau * lam / w[k] ** 3

    val -= float(np.sum(np.log(w)))
    grad[:m] -= 1.0 / w
    hess[np.arange(m), np.arange(m)] += 1.0 / w ** 2

    for j, a in enumerate(blocks):
        u = a @ w
        tj = t[j]
        g = tj * tj - u @ u
        val -= np.log(g)
        atu = a.T @ u
        grad[:m] += 2 * atu / g
        grad[m + j] += -2 * tj / g
        hess[:m, :m] += 2 * (a.T @ a) / g + 4 * np.outer(atu, atu) / g ** 2
        cross = -4 * tj * atu / g ** 2
        hess[:m, m + j] += cross
        hess[m + j, :m] += cross
        hess[m + j, m + j] += -2 / g + 4 * tj * tj / g ** 2
    return val, grad, hess


def _feasible(problem, w, t):
    if np.any(w <= 0):
        return False
    for j, a in enumerate(problem.compressed):
        u = a @ w
        if t[j] <= 0 or t[j] * t[j] - u @ u <= 0:
            return False
    return True


def _barrier_value(problem, w, t, tau):
    val = tau * (float(np.sum(t)) + problem.objective(w, with_ridge=True) - sum(problem.block_norms(w)))
    val -= float(np.sum(np.log(w)))
    for j, a in enumerate(problem.compressed):
        u = a @ w
        val -= np.log(t[j] * t[j] - u @ u)
    return val


def _newton_direction(hess, grad, m):
    n = len(grad)
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = hess
    kkt[:m, n] = 1.0
    kkt[n, :m] = 1.0
    rhs = np.concatenate([-grad, [0.0]])
    # diagonal scaling keeps the KKT solve accurate when 1/w^2 spans many decades
    scale = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(kkt)), 1.0))
    scaled = kkt * scale[:, None] * scale[None, :]
    try:
        sol = np.linalg.solve(scaled, rhs * scale)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(scaled, rhs * scale, rcond=None)[0]
    sol = sol * scale
    return sol[:n]


def _initial_t(problem, w):
    t = []
    for a in problem.compressed:
        r = float(np.linalg.norm(a @ w))
        t.append(r * 1.1 + 1e-3 * max(r, np.abs(a).max(), 1e-12))
    return np.array(t)


def minimize_on_simplex(problem, w0=None, gap_tol=1e-13, max_iter=20000, mu=20.0,
                        prune_threshold=0.0, polish_tol=1e-7):
    """Solve a :class:`SimplexProblem` by the barrier method.

    Parameters
    ----------
    problem : SimplexProblem
    w0 : array, optional
        Strictly positive starting point on the simplex (uniform by default).
    gap_tol : float
        Target bound on the barrier duality gap.
    max_iter : int
        Budget of Newton steps over all centering rounds.
    prune_threshold : float
        Weights below this value are zeroed and the rest renormalized.
    polish_tol : float
        Blocks whose norm falls below this value are projected to exact
        zero on the support when that does not increase the objective.

    Raises
    ------
    ConvergenceError
        When the Newton budget is exhausted; ``best`` holds the last
        centered iterate.
    """
    m = problem.size
    if w0 is None:
        w = np.full(m, 1.0 / m)
    else:
        w = np.asarray(w0, dtype=float).copy()
        if w.size != m or np.any(w <= 0):
            raise SizeError("w0 must be a strictly positive vector of the problem size")
        w = w / w.sum()
    if m == 1:
        return SimplexSolution(np.ones(1), problem.objective(np.ones(1)), 0, 0.0, [], False)

    k = problem.inverse_index
    if k is not None and problem.inverse_weight > 0 and w0 is None:
        # start with some mass on the penalized coordinate
        w = 0.5 * w
        w[k] += 0.5
    t = _initial_t(problem, w)
    nb = len(t)
    nu = m + 2 * nb
    f_start = max(problem.objective(w, with_ridge=True), 1e-9)
    tau = max(1.0, nu / f_start)
    iters = 0
    while True:
        for _ in range(200):
            val, grad, hess = _barrier_terms(problem, w, t, tau)
            step = _newton_direction(hess, grad, m)
            decrement = -float(grad @ step)
            if decrement / 2 <= 1e-9:
                break
            s = 1.0
            dw, dt = step[:m], step[m:]
            while not _feasible(problem, w + s * dw, t + s * dt):
                s *= 0.5
                if s < 1e-20:
                    break
            # roundoff slack: at large tau the barrier value carries ~1e-16 relative noise
            slack = 1e-14 * abs(val)
            while s > 1e-12 and _barrier_value(problem, w + s * dw, t + s * dt, tau) > val - 0.25 * s * decrement + slack:
                s *= 0.5
            iters += 1
            if s <= 1e-12:
                break
            w = w + s * dw
            t = t + s * dt
            w = np.maximum(w, 1e-300)
            if iters >= max_iter:
                w_best = w / w.sum()
                raise ConvergenceError(
                    f"simplex solver did not converge in {max_iter} Newton steps",
                    best=SimplexSolution(w_best, problem.objective(w_best), iters, nu / tau, [], False),
                )
        if nu / tau <= gap_tol * max(1.0, problem.objective(w)):
            break
        tau *= mu

    w = w / w.sum()
    pruned = []
    if prune_threshold > 0:
        small = w < prune_threshold
        if np.any(small) and not np.all(small):
            pruned = [int(i) for i in np.nonzero(small)[0]]
            w = np.where(small, 0.0, w)
            w = w / w.sum()
    w, polished = _polish(problem, w, polish_tol)
    return SimplexSolution(w, problem.objective(w), iters, nu / tau, pruned, polished)


def _polish(problem, w, polish_tol):
    norms = problem.block_norms(w)
    zero_blocks = [b for b, r in zip(problem.blocks, norms) if r <= polish_tol]
    if not zero_blocks:
        return w, False
    support = np.nonzero(w > 0)[0]
    c = np.vstack(zero_blocks + [np.ones((1, w.size))])[:, support]
    rhs = np.zeros(len(c))
    rhs[-1] = 1.0
    residual = c @ w[support] - rhs
    correction = np.linalg.lstsq(c, residual, rcond=None)[0]
    candidate = w.copy()
    candidate[support] = w[support] - correction
    if np.any(candidate < 0):
        return w, False
    if problem.objective(candidate, with_ridge=True) <= problem.objective(w, with_ridge=True) + 1e-15:
        return candidate, True
    return w, False
