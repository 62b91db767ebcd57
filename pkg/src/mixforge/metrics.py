"""
Error maps, error generators and the linear error metrics built on them.

The diamond distance lives in :mod:`mixforge.diamond`; this module
re-exports it together with the convexity check that needs it.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import BranchCutError, SizeError, ValidationError
from .pauli import ProcessMatrix

LOG_TOL = 1e-9
EIG_COND_LIMIT = 1e8


def _as_matrix(x):
    if isinstance(x, ErrorMap):
        return x.process.matrix
    if isinstance(x, (ProcessMatrix, ErrorGenerator)):
        return x.matrix
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class ErrorMap:
    """Error channel ``E = G_impl o G_target^-1`` and the target it refers to."""

    process: ProcessMatrix
    target: ProcessMatrix

    @classmethod
    def from_matrix(cls, matrix, target=None):
        process = matrix if isinstance(matrix, ProcessMatrix) else ProcessMatrix(matrix)
        if target is None:
            target = ProcessMatrix(np.eye(process.dim))
        return cls(process, target)

    @property
    def matrix(self):
        return self.process.matrix

    @property
    def dim(self):
        return self.process.dim

    @property
    def hilbert_dim(self):
        return self.process.hilbert_dim

    def implemented(self):
        """Reconstruct the implemented channel ``E @ G_target``."""
        return ProcessMatrix(self.process.matrix @ self.target.matrix)


@dataclass(frozen=True, eq=False)
class ErrorGenerator:
    """Real matrix ``L`` with ``exp(L)`` equal to an error map."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float, copy=True)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def exp(self):
        return ProcessMatrix(scipy.linalg.expm(self.matrix))


def error_map(implemented, target):
    """Error map of an implemented channel relative to a unitary target.

    The target's PTM is orthogonal, so its inverse is its transpose.
    """
    if implemented.dim != target.dim:
        raise SizeError(f"implemented ({implemented.dim}) and target ({target.dim}) sizes differ")
    if not target.is_unitary():
        raise ValidationError("target must be the process matrix of a unitary")
    return ErrorMap(ProcessMatrix(implemented.matrix @ target.matrix.T), target)


def _principal_log_eig(mat):
    evals, evecs = np.linalg.eig(mat)
    if np.linalg.cond(evecs) > EIG_COND_LIMIT:
        return None
    logs = np.log(evals.astype(complex))
    out = evecs @ np.diag(logs) @ np.linalg.inv(evecs)
    return out


def error_generator(e):
    """Principal matrix logarithm of an error map.

    Uses an eigendecomposition, and falls back to scipy's inverse
    scaling-and-squaring ``logm`` when the eigenvectors are badly
    conditioned or the eigen route misses the round-trip tolerance.

    Raises
    ------
    BranchCutError
        If the map has an eigenvalue on the closed negative real axis.
    """
    mat = _as_matrix(e)
    evals = np.linalg.eigvals(mat)
    scale = max(1.0, np.max(np.abs(evals)))
    on_cut = (np.abs(evals.imag) <= 1e-10 * scale) & (evals.real <= 1e-12)
    if np.any(on_cut):
        raise BranchCutError(
            "error map has an eigenvalue on the negative real axis; "
            "the channel is too far from the identity for a principal logarithm"
        )
    log = _principal_log_eig(mat)
    if log is None or np.max(np.abs(scipy.linalg.expm(log) - mat)) > LOG_TOL:
        log = scipy.linalg.logm(mat)
    imag = np.max(np.abs(np.imag(log)))
    if imag > LOG_TOL:
        raise BranchCutError(f"matrix logarithm is not real (imaginary part {imag:.2e})")
    log = np.real(log)
    return ErrorGenerator(log)


def truncated_error_map(generator, order=2):
    """``I + L`` (order 1) or ``I + L + L^2/2`` (order 2)."""
    mat = _as_matrix(generator)
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    out = np.eye(len(mat)) + mat
    if order == 2:
        out = out + 0.5 * mat @ mat
    return ProcessMatrix(out)


def agi(e):
    """Average gate infidelity ``(d^2 - Tr E) / (d^2 + d)``."""
    mat = _as_matrix(e)
    d2 = mat.shape[0]
    d = np.sqrt(d2)
    return float((d2 - np.trace(mat)) / (d2 + d))


def _weights_array(w):
    arr = np.asarray(getattr(w, "w", w), dtype=float)
    if arr.ndim != 1:
        raise SizeError("weights must be a vector")
    return arr


def check_simplex(w, tol=1e-10):
    w = _weights_array(w)
    if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
        raise ValidationError(f"weights are not on the probability simplex (sum={w.sum():.3e}, min={w.min():.3e})")
    return w


def mixture_error_map(errors, w):
    """Effective error map ``sum_i w_i E_i`` of a mixed gate."""
    errors = list(errors)
    w = check_simplex(w)
    if len(errors) != len(w):
        raise SizeError(f"{len(errors)} error maps but {len(w)} weights")
    mats = np.array([_as_matrix(e) for e in errors])
    target = errors[0].target if isinstance(errors[0], ErrorMap) else None
    return ErrorMap.from_matrix(np.tensordot(w, mats, axes=1), target)


def off_diagonal_vector(e):
    """Off-diagonal entries of a process matrix, row-major, diagonal skipped."""
    mat = _as_matrix(e)
    return mat[~np.eye(len(mat), dtype=bool)]


@dataclass(frozen=True)
class ConvexityReport:
    mixture: float
    weighted_sum: float
    components: tuple
    holds: bool

    def to_dict(self):
        return {
            "mixture": self.mixture,
            "weighted_sum": self.weighted_sum,
            "components": list(self.components),
            "holds": self.holds,
        }


def check_diamond_convexity(errors, w, method="certified", slack=1e-6):
    """Compare the diamond distance of a mixture with the mixed distances."""
    from .diamond import diamond_distance

    errors = list(errors)
    w = check_simplex(w)
    mix = mixture_error_map(errors, w)
    lhs = diamond_distance(mix, method=method)
    comps = tuple(diamond_distance(e, method=method) for e in errors)
    rhs = float(np.dot(w, comps))
    return ConvexityReport(lhs, rhs, comps, bool(lhs <= rhs + slack))
