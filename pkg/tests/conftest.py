import re

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import unitary_group

from mixforge.pauli import pauli_operator, ptm_from_kraus, ptm_from_unitary, rotation


def random_unitary(d, rng):
    return unitary_group.rvs(d, random_state=rng)


def small_unitary(d, rng, scale=0.3):
    h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = (h + h.conj().T) / 2
    return expm(-1j * scale * h / np.linalg.norm(h, 2))


def random_density(d, rng, rank=None):
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_channel(d, rng, coherent=0.3, stochastic=0.1):
    """A small random unitary followed by a random stochastic Kraus channel."""
    u = small_unitary(d, rng, coherent)
    n = 3
    ks = [np.eye(d) * 1.0] + [stochastic * (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
                             for _ in range(n)]
    s = sum(k.conj().T @ k for k in ks)
    w, v = np.linalg.eigh(s)
    inv_sqrt = v @ np.diag(w ** -0.5) @ v.conj().T
    ks = [k @ inv_sqrt @ u for k in ks]
    return ptm_from_kraus(ks)


def dephasing(p):
    return ptm_from_kraus([np.sqrt(1 - p) * np.eye(2), np.sqrt(p) * pauli_operator("Z")])


def depolarizing(p):
    return ptm_from_kraus([np.sqrt(1 - p) * np.eye(2)]
                          + [np.sqrt(p / 3) * pauli_operator(s) for s in "XYZ"])


def zrot(theta):
    return ptm_from_unitary(rotation("Z", theta))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, printed at the end of the run
_CRITERIA = {}


@pytest.fixture
def criterion(request):
    lines = []

    def record(number, ok, detail):
        lines.append((number, ok, detail))
        _CRITERIA[number] = (ok, detail)

    yield record
    if not lines:
        name = request.node.name
        number = name.split("_")[1] if name.startswith("test_criterion") else name
        _CRITERIA.setdefault(number, (False, "error before the check completed"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA, key=lambda k: (int(re.match(r"\d+", str(k)).group()), str(k))):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
