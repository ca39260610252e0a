"""Binary netpbm readers/writers: P6 pixmaps, P5 graymaps, P4 bitmaps."""

import numpy as np

from .errors import IoError


def _read_header(f, magic):
    if f.read(2) != magic:
        raise IoError(f"not a {magic.decode()} file")
    fields = []
    while len(fields) < (2 if magic == b"P4" else 3):
        token = b""
        ch = f.read(1)
        while ch.isspace():
            ch = f.read(1)
        if ch == b"#":
            f.readline()
            continue
        while ch and not ch.isspace():
            token += ch
            ch = f.read(1)
        if not token:
            raise IoError("truncated netpbm header")
        fields.append(int(token))
    return fields


def write_ppm(path, rgb):
    """rgb: H×W×3 floats in [0,1] or uint8."""
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8:
        rgb = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def read_ppm(path):
    """Returns H×W×3 float64 in [0,1]."""
    try:
        with open(path, "rb") as f:
            w, h, maxval = _read_header(f, b"P6")
            data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if data.size != w * h * 3:
        raise IoError(f"{path}: truncated pixel data")
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def write_pgm(path, gray):
    """gray: H×W uint8, or floats in [0,1] scaled to 0..255."""
    gray = np.asarray(gray)
    if gray.dtype != np.uint8:
        gray = np.clip(np.round(gray * 255.0), 0, 255).astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())


def read_pgm(path):
    """Returns H×W uint8."""
    try:
        with open(path, "rb") as f:
            w, h, _ = _read_header(f, b"P5")
            data = np.frombuffer(f.read(w * h), dtype=np.uint8)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if data.size != w * h:
        raise IoError(f"{path}: truncated pixel data")
    return data.reshape(h, w).copy()


def write_pbm(path, bits):
    """bits: H×W {0,1}; 1 is written as black per the P4 convention."""
    bits = np.asarray(bits).astype(np.uint8)
    h, w = bits.shape
    packed = np.packbits(bits, axis=1)
    with open(path, "wb") as f:
        f.write(f"P4\n{w} {h}\n".encode("ascii"))
        f.write(packed.tobytes())


def read_pbm(path):
    try:
        with open(path, "rb") as f:
            w, h = _read_header(f, b"P4")
            row_bytes = (w + 7) // 8
            data = np.frombuffer(f.read(row_bytes * h), dtype=np.uint8)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if data.size != row_bytes * h:
        raise IoError(f"{path}: truncated bitmap data")
    bits = np.unpackbits(data.reshape(h, row_bytes), axis=1)[:, :w]
    return bits.copy()


def prior_to_gray(prior):
    """Map cosine values in [-1,1] to 0..255 graymap levels."""
    v = np.asarray(prior, dtype=np.float64)
    return np.clip(np.round(255.0 * (v + 1.0) / 2.0), 0, 255).astype(np.uint8)


def mask_to_gray(mask):
    return (np.asarray(mask) >= 0.5).astype(np.uint8) * 255
