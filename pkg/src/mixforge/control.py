"""
Piecewise-constant control of one and two qubits.

One-qubit model::

    H = eps Z + (1 + delta) (c_x X + c_y Y)

Two-qubit model: the same local terms on each qubit (``eps_j``,
``delta_j``) plus a fixed exchange coupling ``(XX + YY) / 10``.

A step of length ``dt`` evolves by ``exp(-i H dt)``, so a constant
``c_x = 1/4`` held for time ``pi`` is a rotation by ``pi/2`` about x.
"""

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .diamond import diamond_result, unitary_diamond_distance
from .exceptions import BranchCutError, ConvergenceError, ValidationError
from .metrics import agi, error_generator, error_map, mixture_error_map
from .pauli import pauli_operator, ptm_from_unitary

log = logging.getLogger(__name__)

COUPLING_2Q = 0.1
DEFAULT_SIGMA = 1e-3
FD_STEP = 1e-4


@dataclass
class ControlPulse:
    """Piecewise-constant amplitudes, one column per control channel.

    ``channels`` lists ``(qubit, axis)`` pairs in column order.
    """

    amplitudes: np.ndarray
    dt: float
    channels: tuple = ((0, "x"), (0, "y"))
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        if amps.ndim == 1:
            amps = amps[:, None]
        self.amplitudes = amps
        self.channels = tuple((int(q), str(a)) for q, a in self.channels)
        if amps.shape[0] < 1:
            raise ValidationError("a pulse needs at least one step")
        if amps.shape[1] != len(self.channels):
            raise ValidationError(f"{amps.shape[1]} amplitude columns for {len(self.channels)} channels")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")

    @property
    def n_steps(self):
        return self.amplitudes.shape[0]

    @property
    def total_time(self):
        return self.n_steps * self.dt

    def to_dict(self):
        return {
            "n_steps": self.n_steps,
            "dt": float(self.dt),
            "channels": [{"qubit": q, "axis": a, "amplitudes": self.amplitudes[:, i].tolist()}
                         for i, (q, a) in enumerate(self.channels)],
            "info": dict(self.info),
        }

    @classmethod
    def from_dict(cls, data):
        chans = data["channels"]
        amps = np.column_stack([np.asarray(c["amplitudes"], dtype=float) for c in chans])
        return cls(amps, float(data["dt"]), tuple((c["qubit"], c["axis"]) for c in chans),
                   dict(data.get("info") or {}))


@dataclass(frozen=True)
class HamiltonianModel:
    kind: str = "one_qubit"
    coupling: float = COUPLING_2Q
    amplitude_bound: float = np.inf

    def __post_init__(self):
        if self.kind not in ("one_qubit", "two_qubit"):
            raise ValidationError(f"unknown model kind {self.kind!r}")

    @classmethod
    def one_qubit(cls, **kw):
        return cls("one_qubit", **kw)

    @classmethod
    def two_qubit(cls, **kw):
        return cls("two_qubit", **kw)

    @property
    def n_qubits(self):
        return 1 if self.kind == "one_qubit" else 2

    @property
    def dim(self):
        return 2 ** self.n_qubits

    @property
    def parameter_names(self):
        if self.n_qubits == 1:
            return ("delta", "epsilon")
        return ("delta_1", "delta_2", "epsilon_1", "epsilon_2")

    @property
    def channels(self):
        return tuple((q, a) for q in range(self.n_qubits) for a in ("x", "y"))

    @property
    def nominal(self):
        return {k: 0.0 for k in self.parameter_names}

    def resolve(self, params=None):
        """Full parameter dict; ``delta``/``epsilon`` set every qubit on 2Q models."""
        out = self.nominal
        for key, val in (params or {}).items():
            if key in out:
                out[key] = float(val)
            elif self.n_qubits == 2 and key in ("delta", "epsilon"):
                for q in (1, 2):
                    out[f"{key}_{q}"] = float(val)
            else:
                raise ValidationError(f"unknown parameter {key!r} for {self.kind} model")
        return out

    def _local(self, axis, qubit):
        label = ["I"] * self.n_qubits
        label[qubit] = axis.upper()
        return pauli_operator("".join(label))

    def control_operators(self, params=None):
        """Operators multiplying each control channel, including ``1 + delta``."""
        p = self.resolve(params)
        ops = []
        for q, a in self.channels:
            d = p["delta"] if self.n_qubits == 1 else p[f"delta_{q + 1}"]
            ops.append((1.0 + d) * self._local(a, q))
        return np.array(ops)

    def drift(self, params=None):
        p = self.resolve(params)
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for q in range(self.n_qubits):
            e = p["epsilon"] if self.n_qubits == 1 else p[f"epsilon_{q + 1}"]
            h += e * self._local("z", q)
        if self.n_qubits == 2:
            h += self.coupling * (pauli_operator("XX") + pauli_operator("YY"))
        return h

    def hamiltonian(self, amplitudes, params=None):
        amps = np.asarray(amplitudes, dtype=float)
        return self.drift(params) + np.tensordot(amps, self.control_operators(params), axes=1)


def _check_pairing(pulse, model):
    if tuple(pulse.channels) != model.channels:
        raise ValidationError(f"pulse channels {pulse.channels} do not match model channels {model.channels}")
    if np.any(np.abs(pulse.amplitudes) > model.amplitude_bound * (1 + 1e-12)):
        raise ValidationError("pulse amplitude exceeds the model bound")


def _step_unitaries(hams, dts):
    vals, vecs = np.linalg.eigh(hams)
    phases = np.exp(-1j * vals * np.asarray(dts)[..., None])
    return (vecs * phases[..., None, :]) @ np.conj(np.swapaxes(vecs, -1, -2))


def propagate(pulse, model, params=None):
    """Time-ordered propagator of a pulse; runs of equal steps are merged."""
    _check_pairing(pulse, model)
    amps = pulse.amplitudes
    change = np.any(np.diff(amps, axis=0) != 0, axis=1)
    starts = np.concatenate([[0], np.nonzero(change)[0] + 1])
    lengths = np.diff(np.concatenate([starts, [len(amps)]]))
    drift = model.drift(params)
    ops = model.control_operators(params)
    hams = drift + np.tensordot(amps[starts], ops, axes=1)
    steps = _step_unitaries(hams, lengths * pulse.dt)
    u = np.eye(model.dim, dtype=complex)
    for s in steps:
        u = s @ u
    return u


def process_fidelity(u, target):
    """``|Tr(target^dag U)|^2 / d^2``."""
    d = len(target)
    return float(abs(np.trace(target.conj().T @ u)) ** 2 / d ** 2)


@dataclass(frozen=True)
class QuadratureScheme:
    """Tensor-product Gauss-Hermite rule for independent Gaussian parameters."""

    parameters: tuple = ("delta", "epsilon")
    sigma: float = DEFAULT_SIGMA
    n_nodes: int = 3

    @property
    def nodes_1d(self):
        x, w = hermegauss(self.n_nodes)
        return self.sigma * x, w / w.sum()

    @property
    def points(self):
        """List of (parameter dict, weight)."""
        x, w = self.nodes_1d
        out = []
        for idx in itertools.product(range(self.n_nodes), repeat=len(self.parameters)):
            out.append(({k: x[i] for k, i in zip(self.parameters, idx)}, float(np.prod(w[list(idx)]))))
        return out

    def average(self, fn):
        return sum(wt * fn(p) for p, wt in self.points)


def _fidelity_and_gradient(amps, dt, model, target, points):
    """Quadrature-averaged fidelity and its exact gradient in the amplitudes."""
    d = model.dim
    n, nc = amps.shape
    total = 0.0
    grad = np.zeros_like(amps)
    tdag = target.conj().T
    for params, weight in points:
        ops = model.control_operators(params)
        hams = model.drift(params) + np.tensordot(amps, ops, axes=1)
        vals, vecs = np.linalg.eigh(hams)
        ph = np.exp(-1j * vals * dt)
        steps = (vecs * ph[:, None, :]) @ np.conj(np.swapaxes(vecs, -1, -2))
        # divided differences of exp(-i dt x) on the eigenvalues
        diff = vals[:, :, None] - vals[:, None, :]
        num = ph[:, :, None] - ph[:, None, :]
        same = np.abs(diff) < 1e-12
        gmat = np.where(same, -1j * dt * ph[:, :, None], num / np.where(same, 1.0, diff))
        fwd = np.empty((n + 1, d, d), dtype=complex)
        fwd[0] = np.eye(d)
        for k in range(n):
            fwd[k + 1] = steps[k] @ fwd[k]
        bwd = np.empty((n + 1, d, d), dtype=complex)
        bwd[n] = tdag
        for k in range(n - 1, -1, -1):
            bwd[k] = bwd[k + 1] @ steps[k]
        g = np.trace(tdag @ fwd[n])
        total += weight * abs(g) ** 2 / d ** 2
        # dg/dc_k = Tr(B_{k+1} dU_k F_k)
        fb = fwd[:n] @ bwd[1:]
        vh = np.conj(np.swapaxes(vecs, -1, -2))
        for c in range(nc):
            mat = vh @ ops[c] @ vecs
            du = vecs @ (gmat * mat) @ vh
            dg = np.einsum("kab,kba->k", du, fb)
            grad[:, c] += weight * 2 * np.real(np.conj(g) * dg) / d ** 2
    return total, grad


def averaged_fidelity(pulse, model, target, quadrature=None):
    quadrature = quadrature or QuadratureScheme(model.parameter_names)
    return _fidelity_and_gradient(pulse.amplitudes, pulse.dt, model, np.asarray(target), quadrature.points)[0]


def fidelity_gradient(pulse, model, target, quadrature=None):
    quadrature = quadrature or QuadratureScheme(model.parameter_names)
    return _fidelity_and_gradient(pulse.amplitudes, pulse.dt, model, np.asarray(target), quadrature.points)[1]


@dataclass
class GrapeOptions:
    n_steps: int = 25
    total_time: float = np.pi
    fidelity_floor: float = 0.999
    max_iterations: int = 5000
    init_scale: float = 2.0
    init: str = "random"
    step: float = 1.0


def grape_optimize(target, model=None, quadrature=None, seed=0, opts=None):
    """Gradient ascent on the quadrature-averaged gate fidelity.

    Stops as soon as the averaged fidelity reaches ``opts.fidelity_floor``.
    The step size is adapted by backtracking, so accepted iterates never
    lower the fidelity.

    Raises
    ------
    ConvergenceError
        If the floor is not reached; ``best`` holds the best pulse.
    """
    model = model or HamiltonianModel.one_qubit()
    opts = opts or GrapeOptions()
    quadrature = quadrature or QuadratureScheme(model.parameter_names)
    target = np.asarray(target, dtype=complex)
    if target.shape != (model.dim, model.dim):
        raise ValidationError("target dimension does not match the model")
    rng = np.random.default_rng(seed)
    nc = len(model.channels)
    dt = opts.total_time / opts.n_steps
    if opts.init == "zeros":
        amps = np.zeros((opts.n_steps, nc))
    else:
        amps = rng.uniform(-opts.init_scale, opts.init_scale, size=(opts.n_steps, nc))
    bound = model.amplitude_bound
    amps = np.clip(amps, -bound, bound)
    points = quadrature.points
    fid, grad = _fidelity_and_gradient(amps, dt, model, target, points)
    step = opts.step
    it = 0
    while fid < opts.fidelity_floor and it < opts.max_iterations:
        it += 1
        accepted = False
        while step > 1e-12:
            trial = np.clip(amps + step * grad, -bound, bound)
            f_new, g_new = _fidelity_and_gradient(trial, dt, model, target, points)
            if f_new > fid:
                amps, fid, grad = trial, f_new, g_new
                step *= 1.5
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    info = {"fidelity": float(fid), "iterations": it, "seed": seed, "algorithm": "grape"}
    pulse = ControlPulse(amps, dt, model.channels, info)
    if fid < opts.fidelity_floor:
        raise ConvergenceError(
            f"GRAPE reached fidelity {fid:.6f} < floor {opts.fidelity_floor} after {it} iterations",
            best=pulse,
        )
    return pulse


def error_generator_at(pulse, model, target_ptm, params=None):
    ptm = ptm_from_unitary(propagate(pulse, model, params))
    return error_generator(error_map(ptm, target_ptm)).matrix


def build_ensemble(pulses, target, model, parameters=None, step=FD_STEP, ids=None, metadata=None):
    """Gate ensemble with central-difference generator derivatives.

    Parameters
    ----------
    target : array
        Target unitary.
    parameters : list of str, optional
        Names to differentiate by; defaults to all model parameters.
    """
    from .synthesis import EnsembleMember, GateEnsemble

    target = np.asarray(target, dtype=complex)
    target_ptm = ptm_from_unitary(target)
    parameters = list(model.parameter_names if parameters is None else parameters)
    ids = list(ids) if ids is not None else [str(i) for i in range(len(pulses))]
    members = []
    for pid, pulse in zip(ids, pulses):
        u = propagate(pulse, model)
        ptm = ptm_from_unitary(u)
        emap = error_map(ptm, target_ptm)
        try:
            gen = error_generator(emap)
            ders = {}
            for k in parameters:
                plus = error_generator_at(pulse, model, target_ptm, {k: step})
                minus = error_generator_at(pulse, model, target_ptm, {k: -step})
                ders[k] = (plus - minus) / (2 * step)
        except BranchCutError as exc:
            warnings.warn(f"dropping member {pid!r}: {exc}", RuntimeWarning, stacklevel=2)
            continue
        members.append(EnsembleMember(
            id=str(pid), ptm=ptm, error_map=emap, generator=gen, derivative_generators=ders,
            pulse=pulse, fidelity=process_fidelity(u, target),
        ))
    md = {"model": model.kind, "fd_step": step, "parameters": parameters}
    md.update(metadata or {})
    return GateEnsemble(target_ptm, members, md, target)


def iswap_family_target():
    """``exp(-i pi/4 (XX + YY))``, what the exchange term alone accumulates."""
    from scipy.linalg import expm

    return expm(-1j * np.pi / 4 * (pauli_operator("XX") + pauli_operator("YY")))


@dataclass
class BangBangOptions:
    n_steps: int = 500
    total_time: float = 2.5 * np.pi
    pulse_steps: int = 8
    offset_stride: int = 8
    amplitude_error: float = 0.0025
    seed: int = 0


ECHO_TYPES = (("x", 1), ("x", -1), ("y", 1), ("y", -1))


def bangbang_family(model=None, opts=None):
    """Echo sequences for the two-qubit exchange model.

    Each member applies a pi pulse simultaneously on both qubits ``8 j``
    steps after the start and a second one ``8 j`` steps before the end.
    The first pulse is any of RX(+-pi), RY(+-pi); the closing pulse uses the
    same axis with either sign (a different axis would leave a net Z Z).
    Every pi pulse gets an independent uniform amplitude error.
    """
    model = model or HamiltonianModel.two_qubit()
    if model.n_qubits != 2:
        raise ValidationError("bang-bang family is defined for the two-qubit model")
    opts = opts or BangBangOptions()
    rng = np.random.default_rng(opts.seed)
    dt = opts.total_time / opts.n_steps
    amp = np.pi / (2 * opts.pulse_steps * dt)
    w = opts.pulse_steps
    offsets = [j for j in range(opts.n_steps) if 2 * (opts.offset_stride * j + w) <= opts.n_steps]
    chan = {c: i for i, c in enumerate(model.channels)}
    pulses = []
    for (axis, s1), s2, j in itertools.product(ECHO_TYPES, (1, -1), offsets):
        amps = np.zeros((opts.n_steps, len(model.channels)))
        first = opts.offset_stride * j
        last = opts.n_steps - opts.offset_stride * j - w
        errors = rng.uniform(-opts.amplitude_error, opts.amplitude_error, size=(2, 2))
        for q in range(2):
            col = chan[(q, axis)]
            amps[first:first + w, col] = s1 * amp * (1 + errors[0, q])
            amps[last:last + w, col] = s2 * amp * (1 + errors[1, q])
        info = {"axis": axis, "signs": [s1, s2], "offset": j, "errors": errors.tolist(),
                "algorithm": "bangbang", "seed": opts.seed}
        pulses.append(ControlPulse(amps, dt, model.channels, info))
    return pulses


@dataclass(frozen=True)
class ScanPoint:
    value: float
    agi: float
    diamond: float


def _error_map_at(pulse, model, target_ptm, params):
    return error_map(ptm_from_unitary(propagate(pulse, model, params)), target_ptm)


def sensitivity_scan(source, model, target, parameter, values, pulses=None, method="certified"):
    """AGI and diamond distance of a pulse, or of a mixture, along one parameter.

    ``source`` is a :class:`ControlPulse` or mixing weights; for weights,
    ``pulses`` lists the member pulses in ensemble order.  ``parameter`` may
    be ``"delta"`` or ``"epsilon"`` on the two-qubit model to move both
    qubits together.
    """
    target = np.asarray(target, dtype=complex)
    target_ptm = ptm_from_unitary(target)
    out = []
    if isinstance(source, ControlPulse):
        for v in values:
            u = propagate(source, model, {parameter: v})
            emap = error_map(ptm_from_unitary(u), target_ptm)
            out.append(ScanPoint(float(v), agi(emap), unitary_diamond_distance(target.conj().T @ u)))
        return out
    w = np.asarray(getattr(source, "w", source), dtype=float)
    if pulses is None or len(pulses) != len(w):
        raise ValidationError("a mixture scan needs one pulse per weight")
    keep = np.nonzero(w > 0)[0]
    sub = w[keep] / w[keep].sum()
    for v in values:
        maps = [_error_map_at(pulses[i], model, target_ptm, {parameter: v}) for i in keep]
        mix = mixture_error_map(maps, sub)
        out.append(ScanPoint(float(v), agi(mix), diamond_result(mix, method=method).value))
    return out
