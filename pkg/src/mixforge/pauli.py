"""
Pauli-basis vectorization of states and channels.

Conventions used everywhere in the package:

* single-qubit Pauli order is ``I, X, Y, Z``; multi-qubit elements are
  tensor products indexed row-major, so for two qubits index ``4*a + b``
  is ``P_a (x) P_b``;
* a state is vectorized as ``v_i = Tr(P_i rho)``;
* a channel ``G`` has Pauli transfer matrix ``T_ij = Tr(P_i G(P_j)) / d``,
  so that ``vec(G(rho)) = T @ vec(rho)``;
* rotations are ``exp(-i theta P / 2)``.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .exceptions import SizeError, ValidationError

MAX_QUBITS = 3
REAL_TOL = 1e-12
UNITARY_TOL = 1e-10

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
LABELS_1Q = "IXYZ"


def _frozen(array, dtype=None):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PauliBasis:
    """The ``4**n`` n-qubit Pauli operators, identity first."""

    n_qubits: int
    elements: np.ndarray  # shape (d**2, d, d)
    labels: tuple

    @property
    def dim(self):
        return 2 ** self.n_qubits

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return self.elements[i]

    def index(self, label):
        return self.labels.index(label.upper())


@lru_cache(maxsize=None)
def pauli_basis(n_qubits):
    """Return the n-qubit Pauli basis in tensor-lexicographic order.

    Parameters
    ----------
    n_qubits : int
        Number of qubits, between 1 and 3.

    Examples
    --------
    >>> pauli_basis(2).labels[6]
    'XY'
    """
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise SizeError(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}")
    labels = tuple("".join(p) for p in product(LABELS_1Q, repeat=n_qubits))
    elements = np.array([pauli_operator(label) for label in labels])
    return PauliBasis(int(n_qubits), _frozen(elements), labels)


def pauli_operator(label):
    """Dense matrix of a Pauli string such as ``"XZ"``."""
    out = np.ones((1, 1), dtype=complex)
    for ch in label.upper():
        out = np.kron(out, _SINGLE[ch])
    return out


def rotation(label, angle):
    """Unitary ``exp(-i angle P / 2)`` for the Pauli string ``label``."""
    p = pauli_operator(label)
    return np.cos(angle / 2) * np.eye(len(p)) - 1j * np.sin(angle / 2) * p


def n_qubits_for_dim(d):
    n = int(round(np.log2(d)))
    if 2 ** n != d or not 1 <= n <= MAX_QUBITS:
        raise SizeError(f"dimension {d} is not 2**n with 1 <= n <= {MAX_QUBITS}")
    return n


def _basis_for(d, basis):
    if basis is None:
        return pauli_basis(n_qubits_for_dim(d))
    if basis.dim != d:
        raise SizeError(f"basis dimension {basis.dim} does not match operator dimension {d}")
    return basis


def _real(values, what, tol=REAL_TOL):
    imag = np.max(np.abs(np.imag(values))) if np.size(values) else 0.0
    if imag > tol:
        raise ValidationError(f"{what} has imaginary part {imag:.3e} > {tol:.0e}")
    return np.real(values).astype(float)


@dataclass(frozen=True, eq=False)
class VectorizedState:
    """Pauli expectation vector ``v_i = Tr(P_i rho)`` of a state."""

    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries, float))

    @property
    def dim(self):
        return len(self.entries)

    @property
    def trace(self):
        return float(self.entries[0])

    def density_matrix(self, basis=None):
        d = int(round(np.sqrt(self.dim)))
        basis = _basis_for(d, basis)
        return np.einsum("i,ijk->jk", self.entries, basis.elements) / d


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    """Real Pauli transfer matrix of a channel.

    The matrix splits as::

        [[1, 0 ... 0],
         [m,    R   ]]

    for trace-preserving maps, where ``m`` is the non-unital vector and
    ``R`` the unital block.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise SizeError(f"process matrix must be square, got shape {mat.shape}")
        n_qubits_for_dim(int(round(np.sqrt(mat.shape[0]))))
        object.__setattr__(self, "matrix", _frozen(_real(mat, "process matrix"), float))

    @classmethod
    def identity(cls, n_qubits=1):
        return cls(np.eye(4 ** n_qubits))

    @property
    def dim(self):
        """Side length ``d**2`` of the matrix."""
        return self.matrix.shape[0]

    @property
    def hilbert_dim(self):
        return int(round(np.sqrt(self.dim)))

    @property
    def n_qubits(self):
        return n_qubits_for_dim(self.hilbert_dim)

    @property
    def top_row(self):
        return self.matrix[0]

    @property
    def nonunital_vector(self):
        return self.matrix[1:, 0]

    @property
    def unital_block(self):
        return self.matrix[1:, 1:]

    def is_trace_preserving(self, tol=REAL_TOL):
        e0 = np.zeros(self.dim)
        e0[0] = 1.0
        return bool(np.max(np.abs(self.top_row - e0)) <= tol)

    def is_unitary(self, tol=UNITARY_TOL):
        """True when the map is a unitary channel (orthogonal unital PTM)."""
        if not self.is_trace_preserving(tol) or np.max(np.abs(self.nonunital_vector)) > tol:
            return False
        r = self.unital_block
        return bool(np.max(np.abs(r.T @ r - np.eye(self.dim - 1))) <= tol)

    def __matmul__(self, other):
        return compose(self, other)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def vectorize_state(rho, basis=None):
    """Pauli expectation vector of a Hermitian matrix ``rho``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise SizeError(f"rho must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > REAL_TOL:
        raise ValidationError("rho is not Hermitian")
    basis = _basis_for(rho.shape[0], basis)
    values = np.einsum("ijk,kj->i", basis.elements, rho)
    return VectorizedState(_real(values, "state vector"))


def _check_unitary(u, what="U"):
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise SizeError(f"{what} must be square, got shape {u.shape}")
    if np.max(np.abs(u.conj().T @ u - np.eye(len(u)))) > UNITARY_TOL:
        raise ValidationError(f"{what} is not unitary")
    return u


def ptm_from_unitary(u, basis=None):
    """Pauli transfer matrix of the channel ``rho -> U rho U^dagger``."""
    u = _check_unitary(u)
    basis = _basis_for(len(u), basis)
    p = basis.elements
    # conj(U P_j U^dag) contracted with P_i gives Tr(P_i U P_j U^dag)
    conjugated = np.einsum("ab,jbc,dc->jad", u, p, u.conj())
    values = np.einsum("iab,jba->ij", p, conjugated) / basis.dim
    return ProcessMatrix(_real(values, "PTM of unitary"))


def ptm_from_kraus(kraus_ops, basis=None):
    """Pauli transfer matrix of the channel with the given Kraus operators."""
    ks = np.asarray(kraus_ops, dtype=complex)
    if ks.ndim == 2:
        ks = ks[None]
    if ks.ndim != 3 or ks.shape[1] != ks.shape[2]:
        raise SizeError(f"Kraus operators must be a list of square matrices, got shape {ks.shape}")
    d = ks.shape[1]
    completeness = np.einsum("kba,kbc->ac", ks.conj(), ks)
    if np.max(np.abs(completeness - np.eye(d))) > UNITARY_TOL:
        raise ValidationError("Kraus operators are not complete (sum K^dag K != I)")
    basis = _basis_for(d, basis)
    p = basis.elements
    images = np.einsum("kab,jbc,kdc->jad", ks, p, ks.conj())
    values = np.einsum("iab,jba->ij", p, images) / d
    return ProcessMatrix(_real(values, "PTM of Kraus channel"))


def compose(a, b):
    """Process matrix of applying ``b`` first, then ``a``."""
    if a.dim != b.dim:
        raise SizeError(f"cannot compose process matrices of size {a.dim} and {b.dim}")
    return ProcessMatrix(a.matrix @ b.matrix)


def apply(g, state):
    """Action of a process matrix on a vectorized state."""
    if g.dim != state.dim:
        raise SizeError(f"process matrix of size {g.dim} cannot act on state of size {state.dim}")
    return VectorizedState(g.matrix @ state.entries)
