"""Minimal OpenEXR 2.0 scanline codec: uncompressed 32-bit float channels.

Covers exactly what this package emits (grayscale "Y" or "R","G","B" images,
NO_COMPRESSION, increasing-Y line order) and reads those files back. Files
are valid single-part scanline EXRs readable by standard tooling.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

_MAGIC = 20000630
_VERSION = 2
_PIXEL_FLOAT = 2  # chlist pixel type tag for 32-bit float


def _attr(name: bytes, type_: bytes, data: bytes) -> bytes:
    return name + b"\0" + type_ + b"\0" + struct.pack("<i", len(data)) + data


def write_exr(path, image: np.ndarray) -> None:
    """Write (H, W) or (H, W, 3) float data as an uncompressed FLOAT EXR."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        channels = ["Y"]
        planes = [image]
    elif image.ndim == 3 and image.shape[2] == 3:
        channels = ["B", "G", "R"]  # chlist must be alphabetical
        planes = [image[..., 2], image[..., 1], image[..., 0]]
    else:
        raise InvalidInputError("write_exr supports (H, W) or (H, W, 3) arrays")
    h, w = image.shape[:2]

    chlist = b""
    for name in channels:
        chlist += name.encode() + b"\0"
        chlist += struct.pack("<iBBBBii", _PIXEL_FLOAT, 0, 0, 0, 0, 1, 1)
    chlist += b"\0"

    box = struct.pack("<iiii", 0, 0, w - 1, h - 1)
    header = b"".join([
        _attr(b"channels", b"chlist", chlist),
        _attr(b"compression", b"compression", b"\0"),
        _attr(b"dataWindow", b"box2i", box),
        _attr(b"displayWindow", b"box2i", box),
        _attr(b"lineOrder", b"lineOrder", b"\0"),
        _attr(b"pixelAspectRatio", b"float", struct.pack("<f", 1.0)),
        _attr(b"screenWindowCenter", b"v2f", struct.pack("<ff", 0.0, 0.0)),
        _attr(b"screenWindowWidth", b"float", struct.pack("<f", 1.0)),
        b"\0",
    ])

    preamble = struct.pack("<ii", _MAGIC, _VERSION) + header
    table_pos = len(preamble)
    data_start = table_pos + 8 * h
    row_bytes = 4 * w * len(channels)
    chunk_bytes = 8 + row_bytes

    with open(path, "wb") as fh:
        fh.write(preamble)
        offsets = [data_start + y * chunk_bytes for y in range(h)]
        fh.write(struct.pack(f"<{h}Q", *offsets))
        for y in range(h):
            fh.write(struct.pack("<ii", y, row_bytes))
            for plane in planes:
                fh.write(plane[y].astype("<f4").tobytes())


def _read_cstring(buf: bytes, pos: int) -> tuple[bytes, int]:
    end = buf.index(b"\0", pos)
    return buf[pos:end], end + 1


def read_exr(path) -> np.ndarray:
    """Read an uncompressed scanline FLOAT EXR written by write_exr.

    Returns (H, W) for a single channel and (H, W, 3) in R, G, B order for
    three-channel images.
    """
    buf = Path(path).read_bytes()
    magic, version = struct.unpack_from("<ii", buf, 0)
    if magic != _MAGIC:
        raise InvalidInputError(f"{path}: not an EXR file")
    if version & 0x0200 or version & 0x1000:
        raise InvalidInputError(f"{path}: tiled or multi-part EXR is not supported")
    pos = 8

    channels = []
    data_window = None
    compression = None
    while True:
        if buf[pos] == 0:
            pos += 1
            break
        name, pos = _read_cstring(buf, pos)
        type_, pos = _read_cstring(buf, pos)
        (size,) = struct.unpack_from("<i", buf, pos)
        pos += 4
        payload = buf[pos:pos + size]
        pos += size
        if name == b"channels":
            cp = 0
            while payload[cp] != 0:
                ch_name, cp = _read_cstring(payload, cp)
                pixel_type, = struct.unpack_from("<i", payload, cp)
                cp += 16
                channels.append((ch_name.decode(), pixel_type))
        elif name == b"dataWindow":
            data_window = struct.unpack("<iiii", payload)
        elif name == b"compression":
            compression = payload[0]

    if data_window is None or compression is None or not channels:
        raise InvalidInputError(f"{path}: missing required EXR attributes")
    if compression != 0:
        raise InvalidInputError(f"{path}: only uncompressed EXR is supported")
    if any(pt != _PIXEL_FLOAT for _, pt in channels):
        raise InvalidInputError(f"{path}: only FLOAT channels are supported")

    x_min, y_min, x_max, y_max = data_window
    w = x_max - x_min + 1
    h = y_max - y_min + 1
    n_ch = len(channels)

    offsets = struct.unpack_from(f"<{h}Q", buf, pos)
    rows = np.empty((h, n_ch, w), dtype=np.float32)
    for y_i, off in enumerate(offsets):
        y, row_bytes = struct.unpack_from("<ii", buf, off)
        if row_bytes != 4 * w * n_ch:
            raise InvalidInputError(f"{path}: unexpected scanline size")
        row = np.frombuffer(buf, dtype="<f4", count=w * n_ch, offset=off + 8)
        rows[y - y_min] = row.reshape(n_ch, w)

    names = [c for c, _ in channels]
    if names == ["Y"]:
        return rows[:, 0, :].copy()
    if sorted(names) == ["B", "G", "R"]:
        out = np.empty((h, w, 3), dtype=np.float32)
        for i, ch in enumerate(names):
            out[..., {"R": 0, "G": 1, "B": 2}[ch]] = rows[:, i, :]
        return out
    return np.moveaxis(rows, 1, 2).copy()
