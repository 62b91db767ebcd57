"""
Single-qubit randomized benchmarking with X(pi/2) and Y(pi/2) pulses.

Cliffords are compiled into words over the two pulses; Y pulses reuse the
X waveform with a phase shift, so a miscalibrated implementation rotates by
the same scaled angle about either axis.  For a mixed gate every pulse of
every shot draws its implementation independently.
"""

import csv
import io
import logging
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .exceptions import MixforgeError, ValidationError
from .pauli import ptm_from_unitary, rotation

log = logging.getLogger(__name__)

GENERATORS = ("X", "Y")
DEFAULT_LENGTHS = (2, 4, 8, 16, 32, 64)


def _canonical(u):
    """Remove the global phase so equal-up-to-phase unitaries compare equal."""
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-9))
    return u * (abs(flat[k]) / flat[k])


@dataclass(frozen=True, eq=False)
class CliffordTable:
    unitaries: np.ndarray  # (24, 2, 2), canonical phase
    words: tuple           # pulse labels in time order
    compose: np.ndarray    # compose[a, b] = index of C_a C_b (b applied first)
    inverse: np.ndarray

    def __len__(self):
        return len(self.words)

    def index(self, u):
        c = _canonical(np.asarray(u, dtype=complex))
        diffs = np.abs(self.unitaries - c).reshape(len(self), -1).max(axis=1)
        i = int(np.argmin(diffs))
        if diffs[i] > 1e-8:
            raise ValidationError("unitary is not a single-qubit Clifford")
        return i

    @property
    def identity(self):
        return 0


def _word_unitary(word):
    u = np.eye(2, dtype=complex)
    for g in word:
        u = rotation(g, np.pi / 2) @ u
    return u


def build_clifford_table():
    """Breadth-first enumeration of the Clifford group from X(pi/2), Y(pi/2).

    Shortest words are found first, so each word has minimal length.
    """
    found = [(_canonical(np.eye(2, dtype=complex)), ())]
    queue = deque([0])
    while queue:
        i = queue.popleft()
        u, word = found[i]
        for g in GENERATORS:
            v = _canonical(rotation(g, np.pi / 2) @ u)
            if all(np.abs(v - w).max() > 1e-8 for w, _ in found):
                found.append((v, word + (g,)))
                queue.append(len(found) - 1)
    unitaries = np.array([u for u, _ in found])
    words = tuple(w for _, w in found)
    n = len(found)
    table = CliffordTable(unitaries, words, np.zeros((n, n), dtype=int), np.zeros(n, dtype=int))
    comp = np.array([[table.index(unitaries[a] @ unitaries[b]) for b in range(n)] for a in range(n)])
    inv = np.array([int(np.nonzero(comp[:, a] == 0)[0][0]) for a in range(n)])
    table = CliffordTable(unitaries, words, comp, inv)
    _self_check(table)
    return table


def _self_check(table):
    if len(table) != 24:
        raise MixforgeError(f"Clifford enumeration produced {len(table)} elements, expected 24")
    for u, w in zip(table.unitaries, table.words):
        if np.abs(_canonical(_word_unitary(w)) - u).max() > 1e-10 or len(w) > 5:
            raise MixforgeError(f"Clifford word {w} does not reproduce its unitary")
    for a in range(24):
        if table.compose[table.inverse[a], a] != 0 or table.compose[a, table.inverse[a]] != 0:
            raise MixforgeError("Clifford inverse table is inconsistent")
    if sorted(set(table.compose.ravel())) != list(range(24)):
        raise MixforgeError("Clifford composition table does not close")


_TABLE = None


def clifford_table():
    global _TABLE
    if _TABLE is None:
        _TABLE = build_clifford_table()
    return _TABLE


def sample_rb_sequence(table, length, rng):
    """``length`` uniform Cliffords and the element that inverts them."""
    if length < 1:
        raise ValidationError("sequence length must be at least 1")
    seq = rng.integers(0, len(table), size=length)
    total = 0
    for c in seq:
        total = table.compose[c, total]
    return [int(c) for c in seq], int(table.inverse[total])


def _depolarizing_ptm(p):
    return np.diag([1.0, 1 - p, 1 - p, 1 - p])


@dataclass(frozen=True)
class PulseImplementation:
    """A pi/2 pulse whose rotation angle is scaled by ``scale``.

    The unitary about ``axis`` is ``exp(-i scale (pi/2) sigma / 2)``; an
    optional depolarizing channel of the given rate follows each use.
    """

    name: str = "calibrated"
    scale: float = 1.0
    axis: str = "x"
    depolarizing: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValidationError("pulse scale must be positive")
        if not 0 <= self.depolarizing <= 1:
            raise ValidationError("depolarizing rate must lie in [0, 1]")

    def unitary(self, axis=None):
        return rotation((axis or self.axis).upper(), self.scale * np.pi / 2)

    def ptm(self, axis=None):
        return _depolarizing_ptm(self.depolarizing) @ ptm_from_unitary(self.unitary(axis)).matrix


@dataclass
class GateSource:
    """One implementation, or several mixed with ``weights``."""

    implementations: list
    weights: np.ndarray = None
    name: str = None

    def __post_init__(self):
        if isinstance(self.implementations, PulseImplementation):
            self.implementations = [self.implementations]
        self.implementations = list(self.implementations)
        if self.weights is not None:
            w = np.asarray(getattr(self.weights, "w", self.weights), dtype=float)
            if len(w) != len(self.implementations):
                raise ValidationError("one weight per implementation is required")
            if np.any(w < -1e-10) or abs(w.sum() - 1) > 1e-8:
                raise ValidationError("weights must lie on the probability simplex")
            self.weights = np.clip(w, 0, None) / np.clip(w, 0, None).sum()
        elif len(self.implementations) != 1:
            raise ValidationError("several implementations need mixing weights")
        if self.name is None:
            self.name = "mqg" if self.is_mixture else self.implementations[0].name

    @property
    def is_mixture(self):
        return self.weights is not None and len(self.implementations) > 1


@dataclass
class RBConfig:
    source: GateSource
    lengths: tuple = DEFAULT_LENGTHS
    sequences_per_length: int = 10
    shots_per_sequence: int = 1000
    clifford_depolarizing: float = 0.0
    assignment_error: float = 0.0
    shot_batches: int = 10
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.source, PulseImplementation):
            self.source = GateSource([self.source])
        self.lengths = tuple(int(x) for x in self.lengths)
        if not self.lengths or min(self.lengths) < 1:
            raise ValidationError("lengths must be positive")
        if self.sequences_per_length < 1 or self.shots_per_sequence < 1:
            raise ValidationError("sequence and shot counts must be positive")


@dataclass
class RBResult:
    lengths: tuple
    survival: np.ndarray          # (n_lengths, n_sequences)
    shots: int
    fit: dict
    r: float
    fit_residual: float
    fit_failed: bool
    batch_survival: np.ndarray = None  # (n_lengths, n_sequences, n_batches)
    draw_counts: np.ndarray = None
    source: str = None
    seed: int = None
    config: dict = field(default_factory=dict)

    @property
    def means(self):
        return self.survival.mean(axis=1)

    def stats(self, length):
        return survival_distribution_stats(self, length)

    def to_dict(self):
        return {
            "source": self.source,
            "seed": self.seed,
            "lengths": list(self.lengths),
            "shots": self.shots,
            "survival": self.survival.tolist(),
            "fit": dict(self.fit),
            "r": self.r,
            "fit_residual": self.fit_residual,
            "fit_failed": self.fit_failed,
            "draw_counts": None if self.draw_counts is None else self.draw_counts.tolist(),
            "stats": {str(L): survival_distribution_stats(self, L) for L in self.lengths},
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["lengths"]), np.array(data["survival"], dtype=float), data["shots"],
                   dict(data["fit"]), data["r"], data["fit_residual"], data["fit_failed"],
                   draw_counts=None if data.get("draw_counts") is None else np.array(data["draw_counts"]),
                   source=data.get("source"), seed=data.get("seed"), config=dict(data.get("config") or {}))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["length", "sequence_id", "survival", "shots"])
        for i, L in enumerate(self.lengths):
            for s, val in enumerate(self.survival[i]):
                writer.writerow([L, s, repr(float(val)), self.shots])
        return buf.getvalue()


def _decay(L, a, p, b):
    return a * p ** L + b


def fit_decay(lengths, means):
    """Least-squares fit of ``A p^L + B``; returns (params, residual, failed)."""
    lengths = np.asarray(lengths, dtype=float)
    means = np.asarray(means, dtype=float)
    if np.ptp(means) < 1e-12:
        # flat data: no decay to resolve
        return {"A": 0.0, "p": 1.0, "B": float(means.mean())}, 0.0, False
    try:
        with warnings.catch_warnings():
            # the covariance is not used
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(_decay, lengths, means, p0=(0.5, 0.99, 0.5),
                                bounds=([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        log.warning("RB fit failed: %s", exc)
        return {"A": float("nan"), "p": float("nan"), "B": float("nan")}, float("nan"), True
    res = float(np.sqrt(np.mean((_decay(lengths, *popt) - means) ** 2)))
    return {"A": float(popt[0]), "p": float(popt[1]), "B": float(popt[2])}, res, False


def _pulse_ptms(source):
    """Array (axis, member, 4, 4) of pulse transfer matrices."""
    return np.array([[imp.ptm(axis) for imp in source.implementations] for axis in ("x", "y")])


def _simulate_sequence(table, cliffords, ptms, source, shots, q_clifford, rng):
    """Per-shot survival probabilities of one sequence."""
    axes = [0 if g == "X" else 1 for c in cliffords for g in table.words[c]]
    n_members = ptms.shape[1]
    mixture = source.is_mixture
    n = shots if mixture else 1
    if mixture:
        draws = rng.choice(n_members, size=(n, len(axes)), p=source.weights)
    else:
        draws = np.zeros((1, len(axes)), dtype=int)
    v = np.tile(np.array([1.0, 0.0, 0.0, 1.0]), (n, 1))
    for k, ax in enumerate(axes):
        v = np.einsum("nij,nj->ni", ptms[ax][draws[:, k]], v)
    # depolarizing commutes with every unitary, so the per-Clifford noise
    # can be applied once for the whole sequence
    v[:, 1:] *= (1.0 - q_clifford) ** len(cliffords)
    prob = np.clip((v[:, 0] + v[:, 3]) / 2, 0.0, 1.0)
    counts = np.bincount(draws.ravel(), minlength=n_members) if mixture else None
    return prob, counts


def run_rb(config, table=None):
    """Simulate an RB experiment and fit its decay.

    Every (length, sequence) pair draws from its own random stream derived
    from the seed, so results do not depend on evaluation order.
    """
    table = table or clifford_table()
    src = config.source
    ptms = _pulse_ptms(src)
    nL, ns, shots = len(config.lengths), config.sequences_per_length, config.shots_per_sequence
    survival = np.zeros((nL, ns))
    nb = max(1, min(config.shot_batches, shots))
    batch = np.zeros((nL, ns, nb))
    draw_counts = np.zeros(len(src.implementations), dtype=np.int64)
    e = config.assignment_error
    for i, L in enumerate(config.lengths):
        for s in range(ns):
            seq_rng = np.random.default_rng([config.seed, 0, i, s])
            shot_rng = np.random.default_rng([config.seed, 1, i, s])
            cliffords, inv = sample_rb_sequence(table, L, seq_rng)
            prob, counts = _simulate_sequence(table, cliffords + [inv], ptms, src, shots,
                                              config.clifford_depolarizing, shot_rng)
            if counts is not None:
                draw_counts += counts
            prob = prob * (1 - e) + (1 - prob) * e
            if len(prob) == 1:
                outcomes = shot_rng.random(shots) < prob[0]
            else:
                outcomes = shot_rng.random(shots) < prob
            survival[i, s] = outcomes.mean()
            batch[i, s] = [x.mean() for x in np.array_split(outcomes, nb)]
    fit, res, failed = fit_decay(config.lengths, survival.mean(axis=1))
    d = 2
    r = float("nan") if failed else (1 - fit["p"]) * (d - 1) / d
    cfg = {
        "lengths": list(config.lengths),
        "sequences_per_length": ns,
        "shots_per_sequence": shots,
        "clifford_depolarizing": config.clifford_depolarizing,
        "assignment_error": e,
        "implementations": [vars(imp).copy() for imp in src.implementations],
        "weights": None if src.weights is None else [float(x) for x in src.weights],
    }
    return RBResult(config.lengths, survival, shots, fit, r, res, failed, batch,
                    draw_counts if src.is_mixture else None, src.name, config.seed, cfg)


def survival_distribution_stats(result, length):
    """Spread of survival probabilities over sequences at one length."""
    if length not in result.lengths:
        raise ValidationError(f"length {length} not in result")
    i = list(result.lengths).index(length)
    x = result.survival[i]
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    out = {
        "mean": float(x.mean()),
        "variance": float(x.var(ddof=1)) if len(x) > 1 else 0.0,
        "q1": float(q1), "median": float(med), "q3": float(q3),
        "min": float(x.min()), "max": float(x.max()),
    }
    if result.batch_survival is not None:
        b = result.batch_survival[i]
        out["batch_variance"] = float(b.var(axis=1, ddof=1).mean()) if b.shape[1] > 1 else 0.0
    return out


def acorn_sources(weights=None, depolarizing=0.0):
    """Calibrated pulse, the four scaled pulses, and optionally their mixture."""
    from .synthesis import ACORN_SCALES

    pulses = [PulseImplementation(f"pulse{i + 1}", s, depolarizing=depolarizing)
              for i, s in enumerate(ACORN_SCALES)]
    out = {"calibrated": GateSource([PulseImplementation("calibrated", 1.0, depolarizing=depolarizing)])}
    for p in pulses:
        out[p.name] = GateSource([p])
    if weights is not None:
        out["mqg"] = GateSource(pulses, weights, "mqg")
    return out
