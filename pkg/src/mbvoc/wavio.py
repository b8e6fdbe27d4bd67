"""Minimal RIFF/WAVE reader and writer for 16-bit PCM and 32-bit float.

Errors carry the byte offset where parsing stopped, which the stdlib ``wave``
module and ``scipy.io.wavfile`` do not report.
"""
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import WavFormatError

FORMAT_PCM = 1
FORMAT_FLOAT = 3
FORMAT_EXTENSIBLE = 0xFFFE
_GUID_TAIL = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


@dataclass(frozen=True)
class WavData:
    samples: np.ndarray  # float64, (frames,) for mono or (frames, channels)
    sample_rate: int
    sample_format: str  # "pcm16" or "float32"

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]


def _chunks(buf):
    pos = 12
    while pos + 8 <= len(buf):
        cid, size = struct.unpack_from("<4sI", buf, pos)
        body = pos + 8
        if body + size > len(buf):
            raise WavFormatError(f"chunk {cid!r} declares {size} bytes but the file ends first", pos + 4)
        yield cid, body, size
        pos = body + size + (size & 1)
    if pos < len(buf) and len(buf) - pos not in (0, 1):
        raise WavFormatError("truncated chunk header", pos)


def parse(buf: bytes) -> WavData:
    if len(buf) < 12:
        raise WavFormatError("file shorter than the RIFF header", len(buf))
    riff, _, wave = struct.unpack_from("<4sI4s", buf, 0)
    if riff != b"RIFF":
        raise WavFormatError(f"expected 'RIFF', found {riff!r}", 0)
    if wave != b"WAVE":
        raise WavFormatError(f"expected 'WAVE', found {wave!r}", 8)
    fmt = None
    data = None
    for cid, body, size in _chunks(buf):
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"fmt chunk of {size} bytes is too short", body - 4)
            tag, channels, rate, _, align, bits = struct.unpack_from("<HHIIHH", buf, body)
            if tag == FORMAT_EXTENSIBLE:
                if size < 40:
                    raise WavFormatError("extensible fmt chunk shorter than 40 bytes", body - 4)
                guid = buf[body + 24:body + 40]
                if guid[2:] != _GUID_TAIL:
                    raise WavFormatError("unknown extensible sub-format GUID", body + 24)
                tag = struct.unpack_from("<H", guid, 0)[0]
            fmt = (tag, channels, rate, align, bits, body)
        elif cid == b"data":
            data = (body, size)
    if fmt is None:
        raise WavFormatError("no fmt chunk", len(buf))
    if data is None:
        raise WavFormatError("no data chunk", len(buf))
    tag, channels, rate, align, bits, fmt_at = fmt
    if channels == 0:
        raise WavFormatError("zero channels", fmt_at + 2)
    if rate == 0:
        raise WavFormatError("zero sample rate", fmt_at + 4)
    if (tag, bits) == (FORMAT_PCM, 16):
        dtype, kind, scale = "<i2", "pcm16", 1.0 / 32768.0
    elif (tag, bits) == (FORMAT_FLOAT, 32):
        dtype, kind, scale = "<f4", "float32", 1.0
    else:
        raise WavFormatError(f"unsupported format tag {tag} with {bits} bits", fmt_at)
    if align != channels * bits // 8:
        raise WavFormatError(f"block align {align} does not match {channels} x {bits} bits", fmt_at + 12)
    body, size = data
    if size % align:
        raise WavFormatError(f"data size {size} is not a multiple of the {align}-byte frame", body - 4)
    x = np.frombuffer(buf, dtype=dtype, count=size // (bits // 8), offset=body).astype(np.float64) * scale
    if channels > 1:
        x = x.reshape(-1, channels)
    if not np.all(np.isfinite(x)):
        raise WavFormatError("non-finite float samples", body)
    return WavData(x, int(rate), kind)


def read(path) -> WavData:
    return parse(Path(path).read_bytes())


def encode(samples, sample_rate: int, sample_format: str = "pcm16") -> bytes:
    """Encode ``(frames,)`` or ``(frames, channels)`` floats; PCM16 clips to [-1, 1)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError("samples must be (frames,) or (frames, channels)")
    channels = x.shape[1]
    if sample_format == "pcm16":
        payload = np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = FORMAT_PCM, 16
    elif sample_format == "float32":
        payload = x.astype("<f4").tobytes()
        tag, bits = FORMAT_FLOAT, 32
    else:
        raise ValueError(f"unknown sample format {sample_format!r}")
    align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, int(sample_rate), int(sample_rate) * align, align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write(path, samples, sample_rate: int, sample_format: str = "pcm16") -> None:
    Path(path).write_bytes(encode(samples, sample_rate, sample_format))
