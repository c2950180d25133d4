"""Persistence formats.

Binary arrays
    Eight ASCII header lines followed by raw little-endian C-order data::

        PHASELESS-ARRAY 1
        dtype <f8
        ndim 3
        dims 32 32 32
        spacing 0.15625 0.15625 0.15625
        origin -2.421875 -2.421875 -2.421875
        kind potential
        end

Traces and moduli
    CSV with a one-line header: ``k,re,im`` for spectral traces, ``k,modulus``
    for modulus traces.

Sinograms
    CSV matrix (rows are angles, columns are offsets) after three comment
    lines holding the plane, the angle grid and the offset grid.

Structured text
    JSON for configs, zero sets and machine-readable reports.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

MAGIC = "PHASELESS-ARRAY 1"


def write_array(
    path: str | Path,
    data: np.ndarray,
    spacing: Sequence[float] | None = None,
    origin: Sequence[float] | None = None,
    kind: str = "array",
) -> Path:
    """Write ``data`` in the binary array format."""
    path = Path(path)
    data = np.ascontiguousarray(data)
    if data.dtype.kind == "c":
        data = data.astype("<c16")
    else:
        data = data.astype("<f8")
    nd = data.ndim
    spacing = [1.0] * nd if spacing is None else [float(s) for s in spacing]
    origin = [0.0] * nd if origin is None else [float(o) for o in origin]
    if len(spacing) != nd or len(origin) != nd:
        raise ValueError("spacing and origin need one entry per dimension")
    if any(c.isspace() for c in kind):
        raise ValueError("kind must be a single token")
    header = [
        MAGIC,
        f"dtype {data.dtype.str}",
        f"ndim {nd}",
        "dims " + " ".join(str(d) for d in data.shape),
        "spacing " + " ".join(repr(s) for s in spacing),
        "origin " + " ".join(repr(o) for o in origin),
        f"kind {kind}",
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(data.tobytes(order="C"))
    return path


def read_array(path: str | Path) -> tuple[np.ndarray, dict[str, Any]]:
    """Read a binary array; returns ``(data, meta)``."""
    with open(path, "rb") as fh:
        lines = [fh.readline().decode("ascii").rstrip("\n") for _ in range(8)]
        if lines[0] != MAGIC or lines[7] != "end":
            raise ValueError(f"{path}: not a phaseless array file")
        fields = {ln.split(" ", 1)[0]: ln.split(" ", 1)[1] if " " in ln else "" for ln in lines[1:7]}
        dtype = np.dtype(fields["dtype"])
        dims = tuple(int(d) for d in fields["dims"].split())
        raw = fh.read()
    data = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    meta = {
        "dims": dims,
        "spacing": [float(s) for s in fields["spacing"].split()],
        "origin": [float(o) for o in fields["origin"].split()],
        "kind": fields["kind"],
    }
    return data, meta


def write_spectral_csv(path: str | Path, k: np.ndarray, values: np.ndarray) -> Path:
    path = Path(path)
    arr = np.column_stack([np.real(k), np.real(values), np.imag(values)])
    np.savetxt(path, arr, delimiter=",", header="k,re,im", comments="", fmt="%.17g")
    return path


def read_spectral_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1] + 1j * arr[:, 2]


def write_modulus_csv(path: str | Path, k: np.ndarray, modulus: np.ndarray) -> Path:
    path = Path(path)
    np.savetxt(path, np.column_stack([k, modulus]), delimiter=",", header="k,modulus", comments="", fmt="%.17g")
    return path


def read_modulus_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1]


def write_sinogram_csv(
    path: str | Path, plane: Sequence[float], theta: np.ndarray, s: np.ndarray, values: np.ndarray
) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("# plane " + " ".join(repr(float(p)) for p in plane) + "\n")
        fh.write("# theta " + " ".join(repr(float(t)) for t in theta) + "\n")
        fh.write("# s " + " ".join(repr(float(v)) for v in s) + "\n")
        np.savetxt(fh, np.asarray(values), delimiter=",", fmt="%.17g")
    return path


def read_sinogram_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    with open(path) as fh:
        head = [fh.readline() for _ in range(3)]
    plane, theta, s = (np.array([float(v) for v in h.split()[2:]]) for h in head)
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return plane, theta, s, values


def _default(o: Any) -> Any:
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
