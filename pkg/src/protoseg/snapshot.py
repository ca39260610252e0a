"""Tensor snapshot container.

Format: ASCII header line `TNSR v1 <ndim> <d0> <d1> ...` terminated by a
newline, followed by the row-major payload as little-endian 64-bit floats.
Used for model checkpoints and test fixtures.
"""

import hashlib
from pathlib import Path

import numpy as np

from .errors import IoError


def save_tensor(path, array):
    array = np.asarray(array, dtype=np.float64)
    header = "TNSR v1 " + " ".join([str(array.ndim)] + [str(d) for d in array.shape]) + "\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(array.astype("<f8").tobytes(order="C"))


def load_tensor(path):
    try:
        with open(path, "rb") as f:
            header = f.readline().decode("ascii", errors="replace").split()
            if len(header) < 3 or header[0] != "TNSR" or header[1] != "v1":
                raise IoError(f"{path}: not a TNSR v1 snapshot")
            ndim = int(header[2])
            dims = [int(d) for d in header[3 : 3 + ndim]]
            if len(dims) != ndim or any(d < 1 for d in dims):
                raise IoError(f"{path}: bad dimension list {header[3:]}")
            count = int(np.prod(dims)) if dims else 1
            payload = f.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    data = np.frombuffer(payload, dtype="<f8", count=-1)
    if data.size != count:
        raise IoError(f"{path}: expected {count} values, found {data.size}")
    return data.astype(np.float64).reshape(dims)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def save_checkpoint(directory, named_arrays, manifest_extra=None):
    """Write named tensors plus a text manifest `name shape sha256` per line."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for name in sorted(named_arrays):
        path = directory / f"{name}.tnsr"
        save_tensor(path, named_arrays[name])
        shape = "x".join(str(d) for d in np.asarray(named_arrays[name]).shape)
        lines.append(f"{name} {shape} {sha256_file(path)}")
    if manifest_extra:
        for key in sorted(manifest_extra):
            lines.append(f"#{key}={manifest_extra[key]}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_checkpoint(directory):
    """Read a checkpoint directory back into (arrays dict, extra dict)."""
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.is_file():
        raise IoError(f"{directory}: missing manifest.txt")
    arrays, extra = {}, {}
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            extra[key] = value
            continue
        name, _shape, digest = line.split()
        path = directory / f"{name}.tnsr"
        if not path.is_file():
            raise IoError(f"{directory}: manifest names missing snapshot {name}")
        if sha256_file(path) != digest:
            raise IoError(f"{directory}: checksum mismatch for {name}")
        arrays[name] = load_tensor(path)
    return arrays, extra
