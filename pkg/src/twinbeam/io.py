"""On-disk formats for streams, distributions, matrices, histograms, grids.

``clicks-v1`` is a fixed binary layout: a 16-byte magic/version field, the
window count as little-endian u64, one byte per window (bit 0 the signal
click, bit 1 the idler click) and a JSON sidecar ``<path>.json`` carrying
the generation metadata.

The other formats share one container: an 8-byte magic, a little-endian u32
header length, a JSON header and a payload that is either raw little-endian
float64 (row-major) or CSV text, as declared in the header.  All writers are
atomic (temporary file plus rename) and all readers round-trip bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile

import numpy as np

from .core import JointDist, TwbParams
from .detection import DetectionMatrix, DetectorSpec
from .errors import DataError
from .ingest import GroupingPolicy, JointHistogram
from .quasidist import IntensityGrid
from .simulate import ClickStream, PumpCorrelation

CLICKS_MAGIC = b"twinbeam-clicks1"
MAGIC = {
    "jdist-v1": b"TWBJDIS1",
    "dmat-v1": b"TWBDMAT1",
    "jhist-v1": b"TWBJHIS1",
    "igrid-v1": b"TWBIGRD1",
}


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack(fmt: str, header: dict, payload: bytes) -> bytes:
    head = json.dumps(header, sort_keys=True).encode()
    return MAGIC[fmt] + struct.pack("<I", len(head)) + head + payload


def _unpack(fmt: str, blob: bytes) -> tuple[dict, bytes]:
    magic = MAGIC[fmt]
    if blob[:8] != magic:
        raise DataError(f"not a {fmt} file")
    (hlen,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12:12 + hlen].decode())
    return header, blob[12 + hlen:]


def _read(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


# -- clicks-v1 ---------------------------------------------------------------

def write_clicks(stream: ClickStream, path: str) -> None:
    blob = CLICKS_MAGIC + struct.pack("<Q", len(stream)) + stream.codes.tobytes()
    _atomic_write(path, blob)
    meta = dict(stream.meta)
    for key in ("params", "spec_s", "spec_i", "pump"):
        if key in meta and dataclasses.is_dataclass(meta[key]):
            meta[key] = dataclasses.asdict(meta[key])
    meta["format"] = "clicks-v1"
    _atomic_write(path + ".json", json.dumps(meta, indent=2, sort_keys=True).encode())


def read_clicks(path: str) -> ClickStream:
    blob = _read(path)
    if blob[:16] != CLICKS_MAGIC:
        raise DataError("not a clicks-v1 file")
    (count,) = struct.unpack("<Q", blob[16:24])
    codes = np.frombuffer(blob[24:24 + count], dtype=np.uint8).copy()
    if len(codes) != count:
        raise DataError(f"truncated stream: header says {count}, "
                        f"payload has {len(codes)}")
    meta = {}
    sidecar = path + ".json"
    if os.path.exists(sidecar):
        meta = json.loads(_read(sidecar).decode())
        if isinstance(meta.get("params"), dict):
            meta["params"] = TwbParams(**meta["params"])
        for key in ("spec_s", "spec_i"):
            if isinstance(meta.get(key), dict):
                meta[key] = DetectorSpec(**meta[key])
        if isinstance(meta.get("pump"), dict):
            meta["pump"] = PumpCorrelation(**meta["pump"])
    return ClickStream(codes, meta)


# -- jdist-v1 ----------------------------------------------------------------

def write_jdist(d: JointDist, path: str, payload: str = "f64") -> None:
    header = {"dims": list(d.table.shape), "kind": d.kind,
              "tail_mass": d.tail_mass, "truncation_dirty": d.truncation_dirty,
              "payload": payload}
    if payload == "f64":
        body = np.ascontiguousarray(d.table, dtype="<f8").tobytes()
    elif payload == "csv":
        body = "\n".join(",".join(repr(float(v)) for v in row)
                         for row in d.table).encode()
    else:
        raise DataError(f"unknown payload kind {payload!r}")
    _atomic_write(path, _pack("jdist-v1", header, body))


def read_jdist(path: str) -> JointDist:
    header, body = _unpack("jdist-v1", _read(path))
    shape = tuple(header["dims"])
    if header["payload"] == "f64":
        table = np.frombuffer(body, dtype="<f8").reshape(shape).copy()
    else:
        table = np.array([[float(v) for v in line.split(",")]
                          for line in body.decode().splitlines()])
    d = JointDist(table, header["tail_mass"], header["kind"])
    d.truncation_dirty = header["truncation_dirty"]
    return d


# -- dmat-v1 -----------------------------------------------------------------

def write_dmat(m: DetectionMatrix, path: str) -> None:
    header = {"eta": m.spec.eta, "dark": m.spec.dark, "pixels": m.spec.pixels,
              "n_max": m.n_max, "precision_bits": m.precision_bits,
              "payload": "f64"}
    body = np.ascontiguousarray(m.entries, dtype="<f8").tobytes()
    _atomic_write(path, _pack("dmat-v1", header, body))


def read_dmat(path: str) -> DetectionMatrix:
    header, body = _unpack("dmat-v1", _read(path))
    spec = DetectorSpec(header["eta"], header["dark"], header["pixels"])
    entries = np.frombuffer(body, dtype="<f8").reshape(
        spec.pixels + 1, header["n_max"] + 1).copy()
    entries.flags.writeable = False
    return DetectionMatrix(entries, spec, header["precision_bits"])


# -- jhist-v1 ----------------------------------------------------------------

def write_jhist(h: JointHistogram, path: str) -> None:
    header = {"dims": list(h.counts.shape), "n_groups": h.n_groups,
              "group_n": h.policy.n, "mode": h.policy.mode, "payload": "csv"}
    body = "\n".join(",".join(str(int(v)) for v in row)
                     for row in h.counts).encode()
    _atomic_write(path, _pack("jhist-v1", header, body))


def read_jhist(path: str) -> JointHistogram:
    header, body = _unpack("jhist-v1", _read(path))
    counts = np.array([[int(v) for v in line.split(",")]
                       for line in body.decode().splitlines()], dtype=np.int64)
    policy = GroupingPolicy(header["group_n"], header["mode"])
    return JointHistogram(counts, header["n_groups"], policy)


# -- igrid-v1 ----------------------------------------------------------------

def write_igrid(g: IntensityGrid, path: str) -> None:
    header = {"dims": list(g.values.shape), "w_max_s": g.w_max_s,
              "w_max_i": g.w_max_i, "s": g.s, "payload": "f64"}
    body = np.ascontiguousarray(g.values, dtype="<f8").tobytes()
    _atomic_write(path, _pack("igrid-v1", header, body))


def read_igrid(path: str) -> IntensityGrid:
    header, body = _unpack("igrid-v1", _read(path))
    values = np.frombuffer(body, dtype="<f8").reshape(
        tuple(header["dims"])).copy()
    return IntensityGrid(values, header["w_max_s"], header["w_max_i"],
                         header["s"])


def write_json(obj, path: str) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True).encode())
