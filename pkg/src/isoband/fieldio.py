"""Binary grid-field files, JSON sidecars and band CSV export.

Binary layout (little endian): magic ``ISOB``, u32 version, u32 n1, u32 n2,
u32 component count, then each component as row-major float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .grid import TorusGrid

MAGIC = b"ISOB"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def write_fields(path, grid: TorusGrid, components) -> Path:
    path = Path(path)
    arrays = [np.asarray(c, dtype="<f8") for c in components]
    for a in arrays:
        if a.shape != grid.shape:
            raise StructuralError(f"component shape {a.shape} does not match grid {grid.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, grid.n1, grid.n2, len(arrays)))
        for a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())
    return path


def read_fields(path) -> tuple[TorusGrid, np.ndarray]:
    """Return the grid and an array of shape (components, n1, n2)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise StructuralError("file too short for an ISOB header")
    magic, version, n1, n2, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StructuralError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StructuralError(f"unsupported version {version}")
    expected = _HEADER.size + 8 * n1 * n2 * count
    if len(data) != expected:
        raise StructuralError(f"expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(count, n1, n2)
    return TorusGrid(int(n1), int(n2)), values.astype(float)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sidecar(path, payload: dict) -> Path:
    out = sidecar_path(path)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    return out


def read_sidecar(path) -> dict:
    return json.loads(sidecar_path(path).read_text())


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default)


def complex_to_json(z: complex) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def complex_from_json(d) -> complex:
    if isinstance(d, dict):
        return complex(d["re"], d["im"])
    return complex(d[0], d[1])


def write_bands_csv(path, k_grid, bands) -> Path:
    """CSV with header ``k,band1,...,bandN`` and 17 significant digits."""
    path = Path(path)
    bands = np.asarray(bands)
    header = ["k"] + [f"band{j + 1}" for j in range(bands.shape[1])]
    lines = [",".join(header)]
    for k, row in zip(k_grid, bands):
        lines.append(",".join(f"{float(v):.17g}" for v in (k, *np.real(row))))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_bands_csv(path) -> tuple[np.ndarray, np.ndarray]:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return table[:, 0], table[:, 1:]
