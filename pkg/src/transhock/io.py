"""Binary checkpoints and CSV tables.

Checkpoint layout: the magic line ``TRANSHOCK-CKPT 1``, an 8-byte little-endian
header length, a UTF-8 JSON header (array names, shapes, metadata), then every
array as row-major little-endian float64 in header order.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TRANSHOCK-CKPT 1\n"


def write_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    path = Path(path)
    names = list(arrays)
    header = {"arrays": [{"name": n, "shape": list(np.shape(arrays[n]))} for n in names], "meta": meta or {}}
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes(order="C"))
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        out = {}
        for item in header["arrays"]:
            shape = tuple(item["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated payload for {item['name']}")
            out[item["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float)
    return out, header["meta"]


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(x) for x in row] for row in r])
    return header, data


def write_field_csv(path, coords: dict[str, np.ndarray], fields: dict[str, np.ndarray]) -> None:
    """Flatten node fields of a common shape, with index columns and coordinate columns."""
    shape = np.shape(next(iter(fields.values())))
    idx = np.indices(shape).reshape(len(shape), -1)
    cols = [f"i{k + 1}" for k in range(len(shape))]
    header = cols + list(coords) + list(fields)
    flat_c = [np.broadcast_to(c, shape).ravel() for c in coords.values()]
    flat_f = [np.asarray(f).ravel() for f in fields.values()]
    rows = (list(idx[:, n]) + [c[n] for c in flat_c] + [f[n] for f in flat_f] for n in range(idx.shape[1]))
    write_csv(path, header, rows)
