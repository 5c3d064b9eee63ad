"""Image stack I/O and seeded noise synthesis.

Images live in memory as float64 arrays of shape (H, W, B). On disk they
can be 8-bit PNG, binary PGM (P5) / PPM (P6), a directory of per-band PGM
files, or an MBS stack::

    b"MBS1" | u32 W | u32 H | u32 B | float32[B][H][W]      (little endian)
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

MBS_MAGIC = b"MBS1"
_MBS_HEADER = struct.Struct("<4sIII")


class ImageFormatError(ValueError):
    """Base class for image reading and writing problems."""


class UnsupportedFormatError(ImageFormatError):
    pass


class TruncatedFileError(ImageFormatError):
    """The file ends before its header is complete."""


class SizeMismatchError(ImageFormatError):
    """The payload length disagrees with the header dimensions."""


class BandCountError(ImageFormatError):
    """The stack has a band count the chosen format cannot hold."""


def as_stack(img):
    """Return ``img`` as a float64 (H, W, B) array, validating it."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or min(a.shape) < 1:
        raise ValueError(f"expected an (H, W, B) stack, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("image has non-finite samples")
    return a


def _guess_format(path):
    path = Path(path)
    if path.is_dir():
        return "pgmdir"
    ext = path.suffix.lower().lstrip(".")
    if ext in ("png", "pgm", "ppm", "mbs"):
        return ext
    if path.exists():
        with open(path, "rb") as fh:
            head = fh.read(8)
        if head.startswith(MBS_MAGIC):
            return "mbs"
        if head.startswith(b"\x89PNG"):
            return "png"
        if head[:2] == b"P5":
            return "pgm"
        if head[:2] == b"P6":
            return "ppm"
    raise UnsupportedFormatError(f"cannot tell the image format of {path}")


# -- PNM --------------------------------------------------------------------

def _pnm_tokens(buf, count):
    tokens, pos, n = [], 0, len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise TruncatedFileError("PNM header is incomplete")
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    if pos >= n:
        raise TruncatedFileError("PNM header is incomplete")
    return tokens, pos + 1  # exactly one whitespace byte ends the header


def _read_pnm(path):
    buf = Path(path).read_bytes()
    if len(buf) < 2:
        raise TruncatedFileError(f"{path} is too short to be a PNM file")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"{path}: only binary P5/P6 PNM is supported")
    tokens, start = _pnm_tokens(buf, 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise UnsupportedFormatError(f"{path}: malformed PNM header") from None
    if maxval < 1 or maxval > 255:
        raise UnsupportedFormatError(f"{path}: only 8-bit PNM is supported")
    bands = 1 if magic == b"P5" else 3
    payload = buf[start:]
    if len(payload) != w * h * bands:
        raise SizeMismatchError(
            f"{path}: header says {w * h * bands} bytes, payload has {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, bands).astype(np.float64)


def _to_u8(a):
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def _write_pnm(a, path):
    h, w, b = a.shape
    magic = {1: b"P5", 3: b"P6"}[b]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(_to_u8(a).tobytes())


# -- MBS --------------------------------------------------------------------

def _read_mbs(path):
    buf = Path(path).read_bytes()
    if len(buf) < _MBS_HEADER.size:
        if not buf.startswith(MBS_MAGIC[: len(buf)]):
            raise UnsupportedFormatError(f"{path}: not an MBS stack")
        raise TruncatedFileError(f"{path}: MBS header is incomplete")
    magic, w, h, b = _MBS_HEADER.unpack_from(buf)
    if magic != MBS_MAGIC:
        raise UnsupportedFormatError(f"{path}: not an MBS stack")
    payload = buf[_MBS_HEADER.size:]
    if len(payload) != 4 * w * h * b:
        raise SizeMismatchError(
            f"{path}: header says {4 * w * h * b} bytes, payload has {len(payload)}")
    planes = np.frombuffer(payload, dtype="<f4").reshape(b, h, w)
    return np.ascontiguousarray(planes.transpose(1, 2, 0), dtype=np.float64)


def _write_mbs(a, path):
    h, w, b = a.shape
    with open(path, "wb") as fh:
        fh.write(_MBS_HEADER.pack(MBS_MAGIC, w, h, b))
        fh.write(np.ascontiguousarray(a.transpose(2, 0, 1), dtype="<f4").tobytes())


# -- PNG --------------------------------------------------------------------

def _read_png(path):
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("P", "RGBA", "CMYK"):
                im, mode = im.convert("RGB"), "RGB"
            elif mode == "LA":
                im, mode = im.convert("L"), "L"
            if mode not in ("L", "RGB"):
                raise UnsupportedFormatError(f"{path}: PNG mode {mode} is not 8-bit gray/RGB")
            return as_stack(np.asarray(im, dtype=np.float64))
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a readable PNG") from exc
    except (OSError, SyntaxError) as exc:
        raise TruncatedFileError(f"{path}: unreadable PNG ({exc})") from exc


def _write_png(a, path):
    u8 = _to_u8(a)
    Image.fromarray(u8[:, :, 0] if a.shape[2] == 1 else u8).save(path, format="PNG")


# -- band directories --------------------------------------------------------

def _read_pgm_dir(path):
    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise UnsupportedFormatError(f"{path}: no .pgm band files found")
    bands = [_read_pnm(f) for f in files]
    if any(b.shape[2] != 1 for b in bands) or len({b.shape for b in bands}) != 1:
        raise SizeMismatchError(f"{path}: band files differ in size or are not gray")
    return np.concatenate(bands, axis=2)


def _write_pgm_dir(a, path):
    os.makedirs(path, exist_ok=True)
    width = max(3, len(str(a.shape[2] - 1)))
    for b in range(a.shape[2]):
        _write_pnm(a[:, :, b:b + 1], Path(path) / f"band_{b:0{width}d}.pgm")


_READERS = {"png": _read_png, "pgm": _read_pnm, "ppm": _read_pnm,
            "mbs": _read_mbs, "pgmdir": _read_pgm_dir}


def load(path, fmt=None):
    """Read an image stack; ``fmt`` overrides extension/magic sniffing."""
    fmt = (fmt or _guess_format(path)).lower()
    if fmt not in _READERS:
        raise UnsupportedFormatError(f"unknown format {fmt!r}")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return _READERS[fmt](path)


def save(img, path, fmt=None):
    """Write an image stack. 8-bit formats round and clamp to [0, 255]."""
    a = as_stack(img)
    fmt = (fmt or Path(path).suffix.lstrip(".") or "mbs").lower()
    allowed = {"png": (1, 3), "pgm": (1,), "ppm": (3,)}
    if fmt in allowed and a.shape[2] not in allowed[fmt]:
        raise BandCountError(f"{fmt} cannot hold {a.shape[2]} bands")
    if fmt == "png":
        _write_png(a, path)
    elif fmt in ("pgm", "ppm"):
        _write_pnm(a, path)
    elif fmt == "mbs":
        _write_mbs(a, path)
    elif fmt == "pgmdir":
        _write_pgm_dir(a, path)
    else:
        raise UnsupportedFormatError(f"unknown format {fmt!r}")


def add_awgn(img, sigmas, seed):
    """Add zero-mean Gaussian noise with per-band deviations ``sigmas``.

    Samples come from ``numpy.random.Generator(PCG64(seed))`` via
    ``standard_normal`` in band-major, then row-major order, scaled by the
    band's sigma. The result is not clamped.
    """
    a = as_stack(img)
    s = np.asarray(sigmas, dtype=np.float64).ravel()
    if s.size != a.shape[2]:
        raise ValueError(f"{s.size} noise levels for {a.shape[2]} bands")
    if np.any(s < 0):
        raise ValueError("noise levels must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    h, w, b = a.shape
    z = rng.standard_normal((b, h, w)).transpose(1, 2, 0)
    return a + z * s
