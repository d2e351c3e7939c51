"""Binary model container.

Layout: ``MAGIC`` (8 bytes), format version (u16, little endian), header
length (u32), a UTF-8 JSON header, then the raw bytes of every array in the
order listed by the header's manifest.  Output is deterministic: JSON keys
are sorted and arrays are written in name order.
"""
import hashlib
import json
import struct

import numpy as np

from .dataset import UNIVERSE, OutcomeSchema
from .forest import ForestParams, forest_to_arrays, forest_from_arrays
from .gbm import GbmParams, gbm_to_arrays, gbm_from_arrays
from .stack import stack_to_arrays, stack_from_arrays
from .svm import SvmParams, svm_to_arrays, svm_from_arrays

MAGIC = b"PRCSRMDL"
VERSION = 1
FAMILIES = ("forest", "gbm", "svm", "stack")


class ContainerError(ValueError):
    pass


def _encode(header, arrays):
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        if a.dtype.byteorder == ">":
            a = a.astype(a.dtype.newbyteorder("<"))
        b = a.tobytes()
        manifest.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                         "offset": offset, "nbytes": len(b)})
        blobs.append(b)
        offset += len(b)
    header = dict(header, arrays=manifest)
    h = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<HI", VERSION, len(h)) + h + b"".join(blobs)


def read_container(blob):
    """Parse bytes into ``(header, arrays)`` after checking magic and version."""
    if blob[:len(MAGIC)] != MAGIC:
        raise ContainerError("not a model container (bad magic)")
    version, hlen = struct.unpack_from("<HI", blob, len(MAGIC))
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    start = len(MAGIC) + 6
    header = json.loads(blob[start:start + hlen].decode("utf-8"))
    base = start + hlen
    arrays = {}
    for m in header["arrays"]:
        raw = blob[base + m["offset"]: base + m["offset"] + m["nbytes"]]
        if len(raw) != m["nbytes"]:
            raise ContainerError(f"truncated array {m['name']!r}")
        arrays[m["name"]] = np.frombuffer(raw, dtype=np.dtype(m["dtype"])).reshape(m["shape"]).copy()
    return header, arrays


def _check_universe(header, universe):
    if header.get("universe_fingerprint") != universe.fingerprint:
        raise ContainerError("attribute universe fingerprint does not match this build")


def encode_model(family, model, schema, seed, universe=UNIVERSE, extra=None, info=None):
    """Serialize a fitted model.  ``info`` adds free-form JSON fields to the header."""
    if family not in FAMILIES:
        raise ContainerError(f"unknown family {family!r}")
    header = {"family": family, "universe_fingerprint": universe.fingerprint,
              "n_attributes": len(universe), "schema": schema.to_json(), "seed": int(seed),
              "info": info or {}}
    if family == "forest":
        header.update(params=model.params.to_json(), n_classes=model.n_classes,
                      n_train=model.n_train, train_digest=model.train_digest)
        arrays = forest_to_arrays(model)
    elif family == "gbm":
        header.update(params=model.params.to_json(), n_classes=model.n_classes,
                      n_rounds=len(model.rounds), best_round=model.best_round)
        arrays = gbm_to_arrays(model)
    elif family == "svm":
        header.update(params=model.params.to_json(), n_classes=model.n_classes)
        arrays = svm_to_arrays(model)
    else:
        forest_blob, gbm_blob = extra["forest"], extra["gbm"]
        header.update(params={"C": model.C, "use_svm": model.use_svm},
                      base_fingerprints=list(model.base_fingerprints))
        arrays = stack_to_arrays(model)
        arrays["base.forest"] = np.frombuffer(forest_blob, dtype=np.uint8)
        arrays["base.gbm"] = np.frombuffer(gbm_blob, dtype=np.uint8)
        if extra.get("svm") is not None:
            arrays["base.svm"] = np.frombuffer(extra["svm"], dtype=np.uint8)
    return _encode(header, arrays)


def blob_fingerprint(blob):
    return hashlib.sha256(blob).hexdigest()[:16]


def decode_model(blob, family=None, universe=UNIVERSE):
    """``(model, header)``; the universe fingerprint is checked before anything else is built."""
    header, arrays = read_container(blob)
    _check_universe(header, universe)
    fam = header["family"]
    if family is not None and fam != family:
        raise ContainerError(f"expected a {family} model, found {fam}")
    header["schema_obj"] = OutcomeSchema(header["schema"]["name"], header["schema"]["categories"])
    p = header["params"]
    if fam == "forest":
        model = forest_from_arrays(arrays, ForestParams(**p), header["n_classes"],
                                   header["n_train"], header["train_digest"])
    elif fam == "gbm":
        model = gbm_from_arrays(arrays, GbmParams.from_json(p), header["n_classes"],
                                header["n_rounds"], header["best_round"])
    elif fam == "svm":
        model = svm_from_arrays(arrays, SvmParams(**p), header["n_classes"])
    else:
        bases = {}
        for name in ("forest", "gbm", "svm"):
            key = f"base.{name}"
            if key in arrays:
                sub = arrays[key].tobytes()
                if name != "svm" and blob_fingerprint(sub) not in header["base_fingerprints"]:
                    raise ContainerError(f"embedded {name} model does not match its fingerprint")
                bases[name] = decode_model(sub, name, universe)[0]
        model = stack_from_arrays(arrays, p["C"], header["base_fingerprints"], p["use_svm"])
        model.bases = bases
    return model, header


def save_model(path, blob):
    with open(path, "wb") as fh:
        fh.write(blob)


def load_model(path, family=None, universe=UNIVERSE):
    with open(path, "rb") as fh:
        return decode_model(fh.read(), family, universe)


def _jsonable(a):
    if a.dtype.kind == "f":
        return [float(v) for v in a.ravel()]
    return a.ravel().tolist()


def dump_json(blob):
    """Lossless text view: header plus every array as a flat list with its dtype and shape."""
    header, arrays = read_container(blob)
    out = {"format_version": VERSION, "header": header,
           "arrays": {k: {"dtype": v.dtype.str, "shape": list(v.shape), "data": _jsonable(v)}
                      for k, v in sorted(arrays.items())}}
    return json.dumps(out, sort_keys=True, indent=1)
