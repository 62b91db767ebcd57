"""
Mixing weights for ensembles of noisy gate implementations.

Every program here is a convex problem over the probability simplex and is
handed to :func:`mixforge.simplex.minimize_on_simplex`.  The ensemble is
summarised by three matrices whose columns belong to members:

``generator_matrix``
    flattened error generators (row-major), one column per member;
``offdiag_matrix``
    off-diagonal entries of the error maps;
``derivative_matrices``
    flattened parameter derivatives of the generators, one matrix per
    parameter name.
"""

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .diamond import _seesaw, diamond_result
from .exceptions import (BranchCutError, ConvergenceError, InfeasibleError,
                         SizeError, ValidationError)
from .metrics import (ErrorGenerator, ErrorMap, agi, error_generator,
                      error_map, mixture_error_map, off_diagonal_vector)
from .pauli import ProcessMatrix, ptm_from_unitary, rotation
from .simplex import SimplexProblem, minimize_on_simplex, project_simplex

log = logging.getLogger(__name__)

TIE_BREAK_RIDGE = 1e-8
DIRECT_MAX_MEMBERS = 6

# rotation-scale factors and published weights of the four miscalibrated pulses
ACORN_SCALES = (1.064, 1.039, 0.937, 0.912)
ACORN_REFERENCE_WEIGHTS = (0.307, 0.283, 0.211, 0.199)


class Program(str, enum.Enum):
    GENERATOR_EXACT = "generator_exact"
    PAULI_EXACT = "pauli_exact"
    ROBUST = "robust"
    AGI_CONSTRAINED = "agi_constrained"
    AGI_WEIGHTED = "agi_weighted"
    SPARSE = "sparse"
    DIAMOND_DIRECT = "diamond_direct"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        return cls(str(name).strip().lower().replace("-", "_"))


@dataclass
class EnsembleMember:
    id: str
    ptm: ProcessMatrix
    error_map: ErrorMap
    generator: ErrorGenerator
    derivative_generators: dict = field(default_factory=dict)
    pulse: object = None
    fidelity: float = None


@dataclass
class GateEnsemble:
    """Candidate implementations of one target gate.

    Parameters
    ----------
    target : ProcessMatrix
        Unitary target shared by every member.
    members : list of EnsembleMember
    """

    target: ProcessMatrix
    members: list
    metadata: dict = field(default_factory=dict)
    target_unitary: np.ndarray = None

    def __post_init__(self):
        if not self.members:
            raise SizeError("an ensemble needs at least one member")
        dims = {m.ptm.dim for m in self.members} | {self.target.dim}
        if len(dims) != 1:
            raise SizeError(f"members and target disagree on dimension: {sorted(dims)}")
        for m in self.members:
            if np.max(np.abs(m.error_map.target.matrix - self.target.matrix)) > 1e-12:
                raise ValidationError(f"member {m.id!r} refers to a different target")
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValidationError("member ids must be unique")

    @classmethod
    def from_implementations(cls, ptms, target, ids=None, derivatives=None, pulses=None,
                             fidelities=None, metadata=None, target_unitary=None):
        """Build an ensemble from implemented process matrices.

        ``derivatives`` is an optional list (one per member) of dicts mapping a
        parameter name to the derivative of that member's error generator.
        Members whose error map has no real principal logarithm are dropped
        with a warning.
        """
        ptms = [p if isinstance(p, ProcessMatrix) else ProcessMatrix(p) for p in ptms]
        if not isinstance(target, ProcessMatrix):
            target = ProcessMatrix(target)
        ids = list(ids) if ids is not None else [str(i) for i in range(len(ptms))]
        members = []
        for i, (pid, ptm) in enumerate(zip(ids, ptms)):
            emap = error_map(ptm, target)
            try:
                gen = error_generator(emap)
            except BranchCutError as exc:
                warnings.warn(f"dropping member {pid!r}: {exc}", RuntimeWarning, stacklevel=2)
                continue
            ders = {}
            if derivatives is not None:
                ders = {k: np.asarray(v, dtype=float) for k, v in derivatives[i].items()}
            members.append(EnsembleMember(
                id=str(pid), ptm=ptm, error_map=emap, generator=gen,
                derivative_generators=ders,
                pulse=pulses[i] if pulses is not None else None,
                fidelity=fidelities[i] if fidelities is not None else None,
            ))
        return cls(target, members, dict(metadata or {}), target_unitary)

    @classmethod
    def from_error_maps(cls, maps, ids=None, derivatives=None, target=None):
        """Ensemble whose members are given directly by their error maps."""
        mats = [np.asarray(getattr(e, "matrix", e), dtype=float) for e in maps]
        if target is None:
            target = ProcessMatrix(np.eye(len(mats[0])))
        elif not isinstance(target, ProcessMatrix):
            target = ProcessMatrix(target)
        ptms = [ProcessMatrix(m @ target.matrix) for m in mats]
        return cls.from_implementations(ptms, target, ids=ids, derivatives=derivatives)

    def __len__(self):
        return len(self.members)

    @property
    def size(self):
        return len(self.members)

    @property
    def dim(self):
        return self.target.dim

    @property
    def ids(self):
        return [m.id for m in self.members]

    @property
    def error_maps(self):
        return [m.error_map for m in self.members]

    @property
    def generator_matrix(self):
        return np.column_stack([m.generator.matrix.ravel() for m in self.members])

    @property
    def offdiag_matrix(self):
        return np.column_stack([off_diagonal_vector(m.error_map) for m in self.members])

    @property
    def parameters(self):
        names = [set(m.derivative_generators) for m in self.members]
        return sorted(set.intersection(*names)) if names else []

    @property
    def derivative_matrices(self):
        return {k: self.derivative_matrix(k) for k in self.parameters}

    def derivative_matrix(self, name):
        missing = [m.id for m in self.members if name not in m.derivative_generators]
        if missing:
            raise ValidationError(f"no derivative for parameter {name!r} on members {missing[:5]}")
        return np.column_stack([np.ravel(m.derivative_generators[name]) for m in self.members])

    @property
    def agis(self):
        return np.array([agi(m.error_map) for m in self.members])

    def mixture(self, weights):
        """Effective error map of the mixed gate."""
        return mixture_error_map(self.error_maps, getattr(weights, "w", weights))

    def subset(self, indices):
        return GateEnsemble(self.target, [self.members[i] for i in indices], dict(self.metadata),
                            self.target_unitary)


@dataclass
class SynthesisConfig:
    tolerance: float = 1e-9
    max_iterations: int = 20000
    eta: float = 0.0
    lam: float = 0.0
    prune_threshold: float = 1e-6
    seed: int = None

    def __post_init__(self):
        for name in ("tolerance", "max_iterations", "eta", "lam", "prune_threshold"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")


@dataclass
class MixtureWeights:
    """Probability vector over an ensemble, with how it was obtained."""

    w: np.ndarray
    program: Program
    residual: float
    metadata: dict = field(default_factory=dict)
    ids: list = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.program = Program.parse(self.program)

    @property
    def support(self):
        return np.nonzero(self.w > 0)[0]

    def support_size(self, threshold=1e-3):
        return int(np.count_nonzero(self.w >= threshold))

    def to_dict(self):
        md = self.metadata
        return {
            "program": self.program.value,
            "weights": [float(x) for x in self.w],
            "residual": float(self.residual),
            "lambda": md.get("lambda"),
            "eta": md.get("eta"),
            "tolerance": md.get("tolerance"),
            "seed": md.get("seed"),
            "pruned_indices": list(md.get("pruned_indices", [])),
            "ids": list(self.ids) if self.ids is not None else None,
            "metadata": {k: v for k, v in md.items()
                         if k not in ("lambda", "eta", "tolerance", "seed", "pruned_indices")},
        }

    @classmethod
    def from_dict(cls, data):
        md = dict(data.get("metadata") or {})
        for key in ("lambda", "eta", "tolerance", "seed"):
            md[key] = data.get(key)
        md["pruned_indices"] = list(data.get("pruned_indices") or [])
        return cls(np.array(data["weights"], dtype=float), data["program"], data["residual"],
                   md, data.get("ids"))


@dataclass(frozen=True)
class HullCertificate:
    contains: bool
    weights: np.ndarray
    distance: float
    separator: np.ndarray = None

    def __bool__(self):
        return self.contains


def hull_contains_origin(vectors, tolerance=1e-9):
    """Decide whether the origin lies in the convex hull of ``vectors``.

    Returns a :class:`HullCertificate`.  When the origin is outside, the
    minimum-norm point ``h`` of the hull satisfies ``h . v_i >= |h|^2 > 0``
    for every vector and is returned as the separating functional.
    """
    mat = np.column_stack([np.ravel(v) for v in vectors]).astype(float)
    if mat.shape[1] == 0:
        raise SizeError("need at least one vector")
    sol = minimize_on_simplex(SimplexProblem([mat], ridge=TIE_BREAK_RIDGE))
    dist = float(np.linalg.norm(mat @ sol.w))
    if dist <= tolerance:
        return HullCertificate(True, sol.w, dist)
    h = mat @ sol.w
    return HullCertificate(False, sol.w, dist, h)


def _run(problem, cfg, w0=None, prune=False):
    try:
        return minimize_on_simplex(
            problem, w0=w0, max_iter=cfg.max_iterations,
            prune_threshold=cfg.prune_threshold if prune else 0.0,
        )
    except ConvergenceError as exc:
        best = exc.best
        raise ConvergenceError(str(exc), best=best) from None


def _wrap(ens, sol, program, problem, cfg, **extra):
    w = sol.w
    md = {
        "iterations": sol.iterations,
        "tolerance": cfg.tolerance,
        "seed": cfg.seed,
        "pruned_indices": list(sol.pruned),
        "cancellation": float(np.linalg.norm(problem.blocks[0] @ w)) if problem.blocks else 0.0,
    }
    md.update(extra)
    return MixtureWeights(w, program, problem.objective(w), md, ens.ids)


def _trivial(ens, program, residual, cfg, **extra):
    md = {"iterations": 0, "tolerance": cfg.tolerance, "seed": cfg.seed, "pruned_indices": []}
    md.update(extra)
    return MixtureWeights(np.ones(1), program, residual, md, ens.ids)


def _solve_blocks(ens, blocks, program, cfg, linear=None, **extra):
    problem = SimplexProblem(blocks, linear=linear, ridge=TIE_BREAK_RIDGE)
    if ens.size == 1:
        return _trivial(ens, program, problem.objective(np.ones(1)), cfg, **extra)
    sol = _run(problem, cfg)
    return _wrap(ens, sol, program, problem, cfg, **extra)


def solve_generator_exact(ensemble, cfg=None):
    """Minimize ``||L w||_2`` over the simplex.

    Examples
    --------
    >>> from mixforge.pauli import ptm_from_unitary, rotation
    >>> ens = GateEnsemble.from_error_maps(
    ...     [ptm_from_unitary(rotation("Z", a)) for a in (0.2, -0.1)])
    >>> np.round(solve_generator_exact(ens).w, 6)
    array([0.333333, 0.666667])
    """
    cfg = cfg or SynthesisConfig()
    return _solve_blocks(ensemble, [ensemble.generator_matrix], Program.GENERATOR_EXACT, cfg)


def solve_pauli_exact(ensemble, cfg=None):
    """Minimize the norm of the off-diagonal part of the mixed error map."""
    cfg = cfg or SynthesisConfig()
    return _solve_blocks(ensemble, [ensemble.offdiag_matrix], Program.PAULI_EXACT, cfg)


def solve_robust(ensemble, parameters=None, cfg=None):
    """Minimize ``||L w|| + sum_k ||L_k w||`` with ``L_k`` the generator derivatives."""
    cfg = cfg or SynthesisConfig()
    if parameters is None:
        parameters = ensemble.parameters
    parameters = list(parameters)
    if not parameters:
        raise ValidationError("robust synthesis needs at least one parameter with derivatives")
    blocks = [ensemble.generator_matrix] + [ensemble.derivative_matrix(k) for k in parameters]
    return _solve_blocks(ensemble, blocks, Program.ROBUST, cfg, parameters=parameters)


def solve_agi_weighted(ensemble, eta=None, cfg=None):
    """Minimize ``||L w|| + eta * sum_i w_i AGI_i``."""
    cfg = cfg or SynthesisConfig()
    eta = cfg.eta if eta is None else eta
    if eta < 0:
        raise ValidationError("eta must be nonnegative")
    linear = eta * ensemble.agis if eta > 0 else None
    return _solve_blocks(ensemble, [ensemble.generator_matrix], Program.AGI_WEIGHTED, cfg,
                         linear=linear, eta=float(eta))


def solve_agi_constrained(ensemble, cfg=None, eta_start=1.0, eta_min=1e-12):
    """Least-AGI mixture among generator-exact ones.

    The equality constraint is enforced by exact penalty: the weighted
    program is re-solved with decreasing ``eta`` until the cancellation
    residual drops to ``cfg.tolerance``.

    Raises
    ------
    InfeasibleError
        If no generator-exact mixture exists; use :func:`solve_agi_weighted`.
    """
    cfg = cfg or SynthesisConfig()
    base = solve_generator_exact(ensemble, cfg)
    if base.residual > cfg.tolerance:
        raise InfeasibleError(
            f"no generator-exact mixture (best residual {base.residual:.3e} > {cfg.tolerance:.1e}); "
            "use solve_agi_weighted to trade cancellation against infidelity"
        )
    agis = ensemble.agis
    if ensemble.size == 1:
        return _trivial(ensemble, Program.AGI_CONSTRAINED, float(agis[0]), cfg,
                        cancellation=base.residual)
    lmat = ensemble.generator_matrix
    # scale eta to the ratio of the two terms so the first try is meaningful
    scale = max(np.linalg.norm(lmat, axis=0).max(), 1e-300) / max(agis.max(), 1e-300)
    eta = eta_start * scale
    best = base
    while eta >= eta_min * scale:
        problem = SimplexProblem([lmat], linear=eta * agis, ridge=TIE_BREAK_RIDGE)
        sol = _run(problem, cfg)
        canc = float(np.linalg.norm(lmat @ sol.w))
        if canc <= cfg.tolerance:
            best = sol
            break
        eta /= 10.0
    w = best.w
    md = {
        "iterations": getattr(best, "iterations", 0),
        "tolerance": cfg.tolerance,
        "seed": cfg.seed,
        "pruned_indices": [],
        "eta": float(eta),
        "cancellation": float(np.linalg.norm(lmat @ w)),
    }
    return MixtureWeights(w, Program.AGI_CONSTRAINED, float(agis @ w), md, ensemble.ids)


def _sparse_inner(lmat, k, lam, cfg, gap_tol):
    problem = SimplexProblem([lmat], ridge=TIE_BREAK_RIDGE, inverse_index=k, inverse_weight=lam)
    sol = minimize_on_simplex(problem, gap_tol=gap_tol, max_iter=cfg.max_iterations,
                              prune_threshold=0.0)
    return sol, problem


def solve_sparse(ensemble, lam=None, cfg=None, refine=3):
    """Sparsity-promoting program.

    For each anchor index ``m`` solves::

        minimize ||L w|| + t   s.t.  w on the simplex, t >= 0, w_m t >= lam

    and keeps the anchor with the least objective.  The inner variable is
    eliminated (``t = lam / w_m`` at the optimum).  All anchors are screened
    at a loose barrier gap and the ``refine`` best are re-solved tightly.
    """
    cfg = cfg or SynthesisConfig()
    lam = cfg.lam if lam is None else lam
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    lmat = ensemble.generator_matrix
    if lam == 0:
        res = _solve_blocks(ensemble, [lmat], Program.SPARSE, cfg, **{"lambda": 0.0})
        res.metadata["t"] = 0.0
        return _prune(res, lmat, cfg)
    if ensemble.size == 1:
        return _trivial(ensemble, Program.SPARSE, float(np.linalg.norm(lmat[:, 0])) + lam, cfg,
                        **{"lambda": float(lam), "anchor": 0, "t": float(lam)})

    screened = []
    for k in range(ensemble.size):
        try:
            sol, problem = _sparse_inner(lmat, k, lam, cfg, gap_tol=1e-8)
        except ConvergenceError:
            continue
        screened.append((problem.objective(sol.w), k))
    if not screened:
        raise InfeasibleError("sparse program: every inner problem failed")
    screened.sort()
    best = None
    for _, k in screened[:max(1, refine)]:
        sol, problem = _sparse_inner(lmat, k, lam, cfg, gap_tol=1e-13)
        val = problem.objective(sol.w)
        if best is None or val < best[0]:
            best = (val, k, sol)
    _, k, sol = best
    w = sol.w
    md = {
        "iterations": sol.iterations,
        "tolerance": cfg.tolerance,
        "seed": cfg.seed,
        "pruned_indices": [],
        "lambda": float(lam),
        "anchor": int(k),
        "t": float(lam / w[k]),
    }
    res = MixtureWeights(w, Program.SPARSE, float(np.linalg.norm(lmat @ w) + lam / w[k]), md,
                         ensemble.ids)
    return _prune(res, lmat, cfg)


def _prune(res, lmat, cfg):
    w = res.w.copy()
    small = w < cfg.prune_threshold
    if cfg.prune_threshold <= 0 or not np.any(small) or np.all(small):
        return res
    w[small] = 0.0
    w /= w.sum()
    res.w = w
    res.metadata["pruned_indices"] = [int(i) for i in np.nonzero(small)[0]]
    lam = res.metadata.get("lambda") or 0.0
    k = res.metadata.get("anchor")
    t = lam / w[k] if (lam and k is not None) else 0.0
    res.metadata["t"] = float(t)
    res.residual = float(np.linalg.norm(lmat @ w) + t)
    return res


def _direct_evaluator(maps, d, rng):
    state = {"psi": None}

    def value(w):
        mat = np.tensordot(w, maps, axes=1)
        v, psi = _seesaw(mat, d, rng, restarts=2, max_iter=300, tol=1e-12,
                         start=state["psi"])
        state["psi"] = psi
        return v

    return value


def solve_diamond_direct(ensemble, cfg=None, restarts=16, seed=None, maxfev=400):
    """Brute-force minimization of the mixture's diamond distance.

    Nelder-Mead over ``project_simplex(z)`` from ``restarts`` starting points,
    one of which is the generator-exact solution.  Intended as a
    cross-check on small ensembles only.
    """
    cfg = cfg or SynthesisConfig()
    m = ensemble.size
    if m > DIRECT_MAX_MEMBERS:
        raise SizeError(f"direct diamond minimization is limited to {DIRECT_MAX_MEMBERS} members, got {m}")
    seed = cfg.seed if seed is None else seed
    seed = 0 if seed is None else seed
    if m == 1:
        val = diamond_result(ensemble.error_maps[0]).value
        return _trivial(ensemble, Program.DIAMOND_DIRECT, val, cfg, restarts=0)
    rng = np.random.default_rng(seed)
    maps = np.array([e.matrix for e in ensemble.error_maps])
    d = int(round(np.sqrt(ensemble.dim)))
    f = _direct_evaluator(maps, d, rng)

    starts = [solve_generator_exact(ensemble, cfg).w, np.full(m, 1.0 / m)]
    while len(starts) < max(restarts, 16):
        starts.append(rng.dirichlet(np.ones(m)))
    best_w, best_val = None, np.inf
    for z0 in starts:
        res = minimize(lambda z: f(project_simplex(z)), z0, method="Nelder-Mead",
                       options={"maxfev": maxfev, "xatol": 1e-7, "fatol": 1e-10})
        w = project_simplex(res.x)
        val = f(w)
        if val < best_val:
            best_w, best_val = w, val
    cert = diamond_result(ensemble.mixture(best_w))
    md = {"iterations": len(starts) * maxfev, "tolerance": cfg.tolerance, "seed": seed,
          "pruned_indices": [], "restarts": len(starts), "certificate_gap": cert.certificate_gap}
    return MixtureWeights(best_w, Program.DIAMOND_DIRECT, cert.value, md, ensemble.ids)


def solve(ensemble, program, cfg=None, parameters=None):
    """Dispatch to the solver for ``program``."""
    cfg = cfg or SynthesisConfig()
    program = Program.parse(program)
    if program is Program.GENERATOR_EXACT:
        return solve_generator_exact(ensemble, cfg)
    if program is Program.PAULI_EXACT:
        return solve_pauli_exact(ensemble, cfg)
    if program is Program.ROBUST:
        return solve_robust(ensemble, parameters, cfg)
    if program is Program.AGI_CONSTRAINED:
        return solve_agi_constrained(ensemble, cfg)
    if program is Program.AGI_WEIGHTED:
        return solve_agi_weighted(ensemble, cfg.eta, cfg)
    if program is Program.SPARSE:
        return solve_sparse(ensemble, cfg.lam, cfg)
    return solve_diamond_direct(ensemble, cfg)


def program_objective(ensemble, weights, program=None, parameters=None):
    """Re-evaluate a program's objective at given weights."""
    w = np.asarray(getattr(weights, "w", weights), dtype=float)
    md = getattr(weights, "metadata", {}) or {}
    program = Program.parse(program or weights.program)
    lmat = ensemble.generator_matrix
    if program is Program.GENERATOR_EXACT:
        return float(np.linalg.norm(lmat @ w))
    if program is Program.PAULI_EXACT:
        return float(np.linalg.norm(ensemble.offdiag_matrix @ w))
    if program is Program.ROBUST:
        names = parameters or md.get("parameters") or ensemble.parameters
        return float(np.linalg.norm(lmat @ w)
                     + sum(np.linalg.norm(ensemble.derivative_matrix(k) @ w) for k in names))
    if program is Program.AGI_CONSTRAINED:
        return float(ensemble.agis @ w)
    if program is Program.AGI_WEIGHTED:
        return float(np.linalg.norm(lmat @ w) + md.get("eta", 0.0) * (ensemble.agis @ w))
    if program is Program.SPARSE:
        return float(np.linalg.norm(lmat @ w) + md.get("t", 0.0))
    return diamond_result(ensemble.mixture(w)).value


def sample_member(weights, rng, size=None):
    """Draw member indices with probabilities ``weights``.

    ``rng`` must be a :class:`numpy.random.Generator`; no global state is used.
    """
    w = np.asarray(getattr(weights, "w", weights), dtype=float)
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    if size is None:
        return int(rng.choice(len(w), p=w))
    return rng.choice(len(w), size=size, p=w)


def acorn_ensemble():
    """Error maps of X(pi/2) pulses with scaled rotation angles ``A * pi/2``."""
    u = rotation("X", np.pi / 2)
    ptms = [ptm_from_unitary(rotation("X", a * np.pi / 2)) for a in ACORN_SCALES]
    ids = [f"pulse{i + 1}" for i in range(len(ptms))]
    ens = GateEnsemble.from_implementations(ptms, ptm_from_unitary(u), ids=ids, target_unitary=u)
    ens.metadata.update({"builtin": "paper-acorn", "scales": list(ACORN_SCALES)})
    return ens
