"""
Versioned JSON and CSV persistence.

Every JSON document carries ``schema_version`` and a ``kind`` tag.  Matrices
are stored row-major with an explicit shape; complex matrices split into
``re`` and ``im``.  Output is canonical (sorted keys, fixed indentation,
shortest round-trip float repr) so parse-then-dump reproduces the same bytes.
"""

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .control import ControlPulse, HamiltonianModel
from .exceptions import SchemaError
from .metrics import ErrorGenerator, error_map
from .pauli import ProcessMatrix, ptm_from_unitary
from .rb import RBResult
from .synthesis import EnsembleMember, GateEnsemble, MixtureWeights

SCHEMA_VERSION = 1


def _plain(obj):
    """Convert numpy scalars and arrays into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(doc):
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def encode_matrix(m):
    m = np.asarray(m)
    if np.iscomplexobj(m):
        return {"shape": list(m.shape), "re": m.real.ravel().tolist(), "im": m.imag.ravel().tolist()}
    return {"shape": list(m.shape), "data": m.astype(float).ravel().tolist()}


def decode_matrix(obj):
    shape = tuple(obj["shape"])
    if "re" in obj:
        return (np.array(obj["re"], dtype=float) + 1j * np.array(obj["im"], dtype=float)).reshape(shape)
    return np.array(obj["data"], dtype=float).reshape(shape)


def _envelope(kind, body):
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
    doc.update(body)
    return doc


def check_schema(doc, kind=None):
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise SchemaError("document has no schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {doc['schema_version']!r} (expected {SCHEMA_VERSION})")
    if kind is not None and doc.get("kind") != kind:
        raise SchemaError(f"expected a {kind!r} document, got {doc.get('kind')!r}")
    return doc


# ensembles

def ensemble_to_doc(ens, model=None):
    if ens.target_unitary is None:
        raise SchemaError("ensemble files need the target unitary")
    md = dict(ens.metadata)
    members = []
    for m in ens.members:
        members.append({
            "id": m.id,
            "pulse": m.pulse.to_dict() if m.pulse is not None else None,
            "ptm": encode_matrix(m.ptm.matrix),
            "generator": encode_matrix(m.generator.matrix),
            "derivatives": {k: encode_matrix(v) for k, v in sorted(m.derivative_generators.items())},
            "fidelity_at_nominal": m.fidelity,
        })
    model_doc = None
    if model is not None:
        model_doc = {"kind": model.kind, "coupling": model.coupling,
                     "amplitude_bound": None if np.isinf(model.amplitude_bound) else model.amplitude_bound}
    elif "model_descriptor" in md:
        model_doc = md.pop("model_descriptor")
    return _envelope("ensemble", {
        "dimension": int(round(np.sqrt(ens.dim))),
        "target": encode_matrix(np.asarray(ens.target_unitary, dtype=complex)),
        "model": model_doc,
        "members": members,
        "metadata": {k: v for k, v in md.items()},
    })


def ensemble_from_doc(doc):
    check_schema(doc, "ensemble")
    u = decode_matrix(doc["target"])
    if u.shape != (doc["dimension"], doc["dimension"]):
        raise SchemaError("target unitary does not match the declared dimension")
    target = ptm_from_unitary(u)
    members = []
    for m in doc["members"]:
        ptm = ProcessMatrix(decode_matrix(m["ptm"]))
        if ptm.dim != target.dim:
            raise SchemaError(f"member {m['id']!r} has the wrong dimension")
        members.append(EnsembleMember(
            id=m["id"], ptm=ptm, error_map=error_map(ptm, target),
            generator=ErrorGenerator(decode_matrix(m["generator"])),
            derivative_generators={k: decode_matrix(v) for k, v in m["derivatives"].items()},
            pulse=ControlPulse.from_dict(m["pulse"]) if m.get("pulse") else None,
            fidelity=m.get("fidelity_at_nominal"),
        ))
    md = dict(doc.get("metadata") or {})
    if doc.get("model") is not None:
        md["model_descriptor"] = doc["model"]
    return GateEnsemble(target, members, md, u)


def model_from_doc(doc_or_ens):
    md = doc_or_ens.metadata.get("model_descriptor") if isinstance(doc_or_ens, GateEnsemble) else doc_or_ens
    if not md:
        return None
    bound = md.get("amplitude_bound")
    return HamiltonianModel(md["kind"], md.get("coupling", 0.1), np.inf if bound is None else bound)


# weights, RB results, generic documents

def weights_to_doc(w):
    return _envelope("weights", w.to_dict())


def weights_from_doc(doc):
    check_schema(doc, "weights")
    return MixtureWeights.from_dict(doc)


def rb_to_doc(res):
    body = res.to_dict()
    body["batch_survival"] = None if res.batch_survival is None else res.batch_survival.tolist()
    return _envelope("rb_result", body)


def rb_from_doc(doc):
    check_schema(doc, "rb_result")
    res = RBResult.from_dict(doc)
    if doc.get("batch_survival") is not None:
        res.batch_survival = np.array(doc["batch_survival"], dtype=float)
    return res


_LOADERS = {
    "ensemble": ensemble_from_doc,
    "weights": weights_from_doc,
    "rb_result": rb_from_doc,
}

_DUMPERS = {
    GateEnsemble: ensemble_to_doc,
    MixtureWeights: weights_to_doc,
    RBResult: rb_to_doc,
}


def to_doc(obj):
    for cls, fn in _DUMPERS.items():
        if isinstance(obj, cls):
            return fn(obj)
    if isinstance(obj, dict):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_doc(doc):
    check_schema(doc)
    loader = _LOADERS.get(doc.get("kind"))
    return loader(doc) if loader else doc


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    return from_doc(doc)


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save(obj, path):
    return write_atomic(path, dumps(to_doc(obj)))


def load(path):
    return loads(Path(path).read_text())


def load_doc(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    return check_schema(doc)
