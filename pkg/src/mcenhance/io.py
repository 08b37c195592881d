"""Audio and matrix serialization.

WAV support is limited to 16-bit PCM and 32-bit IEEE float. Masks and
feature matrices use TFM1, a minimal little-endian container::

    offset  size  field
    0       4     magic b"TFM1"
    4       4     rows (uint32 LE)
    8       4     cols (uint32 LE)
    12      1     dtype (0 = float32 LE)
    13      4*rows*cols  row-major payload
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

__all__ = [
    "Waveform",
    "FormatError",
    "MaskRangeError",
    "read_wav",
    "write_wav",
    "read_mask",
    "write_mask",
    "read_manifest",
    "write_manifest",
]

TFM1_MAGIC = b"TFM1"
TFM1_HEADER = struct.Struct("<4sIIB")
TFM1_FLOAT32 = 0

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class FormatError(ValueError):
    """Malformed or truncated file. ``offset`` is the byte where parsing failed."""

    def __init__(self, path, offset: int, reason: str):
        self.path = str(path)
        self.offset = offset
        self.reason = reason
        super().__init__(f"{self.path}: byte {offset}: {reason}")


class MaskRangeError(ValueError):
    """A mask value lies outside [0, 1]."""

    def __init__(self, path, row: int, col: int, value: float):
        self.path = str(path)
        self.row, self.col, self.value = row, col, value
        super().__init__(
            f"{self.path}: mask value {value!r} at (row={row}, col={col}) outside [0, 1]"
        )


@dataclass(frozen=True)
class Waveform:
    """PCM samples shaped (channels, samples) with a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain non-finite values")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def channel(self, index: int) -> "Waveform":
        return Waveform(self.samples[index : index + 1], self.sample_rate)


def _chunks(path, data: bytes) -> Iterator[tuple[bytes, int, int]]:
    """Yield (chunk id, payload offset, payload size) for a RIFF/WAVE byte string."""
    if len(data) < 12:
        raise FormatError(path, len(data), "file shorter than the 12-byte RIFF header")
    riff, _, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF":
        raise FormatError(path, 0, f"expected b'RIFF', found {riff!r}")
    if wave != b"WAVE":
        raise FormatError(path, 8, f"expected b'WAVE', found {wave!r}")
    pos = 12
    while pos < len(data):
        if pos + 8 > len(data):
            raise FormatError(path, pos, "truncated chunk header")
        cid, size = struct.unpack_from("<4sI", data, pos)
        start = pos + 8
        if start + size > len(data):
            raise FormatError(
                path, len(data),
                f"chunk {cid!r} at byte {pos} declares {size} bytes but only "
                f"{len(data) - start} remain",
            )
        yield cid, start, size
        pos = start + size + (size & 1)


def read_wav(path) -> Waveform:
    """Read a PCM16 or float32 WAV file into a float64 :class:`Waveform`."""
    path = Path(path)
    data = path.read_bytes()
    fmt = None
    payload = None
    for cid, start, size in _chunks(path, data):
        if cid == b"fmt ":
            if size < 16:
                raise FormatError(path, start, f"fmt chunk too short ({size} bytes)")
            tag, channels, rate, _, block_align, bits = struct.unpack_from(
                "<HHIIHH", data, start
            )
            if tag == _WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise FormatError(path, start, "extensible fmt chunk too short")
                tag = struct.unpack_from("<H", data, start + 24)[0]
            fmt = (start, tag, channels, rate, block_align, bits)
        elif cid == b"data":
            payload = (start, size)
    if fmt is None:
        raise FormatError(path, 12, "no fmt chunk")
    if payload is None:
        raise FormatError(path, len(data), "no data chunk")
    fmt_offset, tag, channels, rate, block_align, bits = fmt
    if channels == 0:
        raise FormatError(path, fmt_offset + 2, "zero channels")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype = np.dtype("<i2")
        scale = 1.0 / 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype = np.dtype("<f4")
        scale = None
    else:
        raise FormatError(
            path, fmt_offset, f"unsupported encoding (format tag {tag}, {bits} bits)"
        )
    if block_align != channels * dtype.itemsize:
        raise FormatError(path, fmt_offset + 12, f"block_align {block_align} inconsistent")
    start, size = payload
    if size % block_align:
        raise FormatError(
            path, start + size - size % block_align,
            f"data size {size} is not a whole number of {channels}-channel frames",
        )
    frames = np.frombuffer(data, dtype=dtype, count=size // dtype.itemsize, offset=start)
    samples = frames.reshape(-1, channels).T.astype(np.float64)
    if scale is not None:
        samples *= scale
    return Waveform(samples, rate)


def write_wav(path, wave: Waveform, encoding: str = "float32") -> None:
    """Write ``wave`` as ``pcm16`` or ``float32``."""
    x = wave.samples
    if encoding == "pcm16":
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        tag, bits = _WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        q = x.astype("<f4")
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unsupported encoding {encoding!r}; use 'pcm16' or 'float32'")
    channels = x.shape[0]
    block_align = channels * bits // 8
    body = q.T.tobytes()
    fmt = struct.pack(
        "<HHIIHH", tag, channels, wave.sample_rate,
        wave.sample_rate * block_align, block_align, bits,
    )
    out = b"".join([
        b"RIFF", struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(body) + (len(body) & 1)),
        b"WAVE",
        b"fmt ", struct.pack("<I", len(fmt)), fmt,
        b"data", struct.pack("<I", len(body)), body,
        b"\x00" if len(body) & 1 else b"",
    ])
    Path(path).write_bytes(out)


def write_mask(path, matrix) -> None:
    """Write a real 2-D matrix as TFM1 (float32)."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError(f"TFM1 holds 2-D matrices, got shape {m.shape}")
    if np.iscomplexobj(m):
        raise ValueError("TFM1 holds real matrices")
    rows, cols = m.shape
    header = TFM1_HEADER.pack(TFM1_MAGIC, rows, cols, TFM1_FLOAT32)
    Path(path).write_bytes(header + np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_mask(path, strict: bool = False) -> np.ndarray:
    """Read a TFM1 file as a float32 (rows, cols) array.

    With ``strict=True`` the values are validated as a TF mask and the first
    cell outside [0, 1] (or non-finite) raises :class:`MaskRangeError`.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < TFM1_HEADER.size:
        raise FormatError(path, len(data), f"file shorter than the {TFM1_HEADER.size}-byte header")
    magic, rows, cols, dtype = TFM1_HEADER.unpack_from(data, 0)
    if magic != TFM1_MAGIC:
        raise FormatError(path, 0, f"bad magic {magic!r}, expected {TFM1_MAGIC!r}")
    if dtype != TFM1_FLOAT32:
        raise FormatError(path, 12, f"unsupported dtype code {dtype}")
    expected = rows * cols * 4
    got = len(data) - TFM1_HEADER.size
    if got != expected:
        raise FormatError(
            path, TFM1_HEADER.size + min(got, expected),
            f"header declares {rows}x{cols} ({expected} payload bytes) but file has {got}",
        )
    m = np.frombuffer(data, dtype="<f4", offset=TFM1_HEADER.size).reshape(rows, cols).copy()
    if strict:
        bad = ~((m >= 0) & (m <= 1))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise MaskRangeError(path, int(r), int(c), float(m[r, c]))
    return m


def read_manifest(path) -> list[dict]:
    """Read a line-delimited JSON manifest; blank lines are skipped."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(path, exc.pos, f"line {lineno}: {exc.msg}") from None
    return records


def write_manifest(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
