"""Flat binary parameter container.

Layout, all integers little-endian u32 unless noted::

    b"MBWR" | version | gru_size affine_size num_bands sample_rate conditioning_dim | count
    count x ( name_len | name (utf-8) | kind (u8) | rank | dims[rank] | payload )

``kind`` 0 is a float32 tensor, payload ``prod(dims)`` little-endian float32.
``kind`` 1 is a quantized tensor, payload ``prod(dims)`` int8 values followed
by ``prod(dims[:-1])`` float32 row scales.
"""
import struct
from pathlib import Path

import numpy as np

from .errors import ParamsFormatError, ValidationError
from .quant import QuantizedTensor
from .wavernn import MbWaveRnnConfig, MbWaveRnnParams

MAGIC = b"MBWR"
VERSION = 1
KIND_F32 = 0
KIND_INT8 = 1
_HEADER = struct.Struct("<4s7I")
_U32 = struct.Struct("<I")


def _u32(v):
    return _U32.pack(int(v))


def dumps(params: MbWaveRnnParams) -> bytes:
    cfg = params.config
    tensors = params.tensors()
    chunks = [_HEADER.pack(MAGIC, VERSION, cfg.gru_size, cfg.affine_size, cfg.num_bands,
                           cfg.sample_rate, cfg.conditioning_dim, len(tensors))]
    for name, value in tensors.items():
        raw = name.encode("utf-8")
        chunks += [_u32(len(raw)), raw]
        if isinstance(value, QuantizedTensor):
            dims = value.dims
            chunks += [bytes([KIND_INT8]), _u32(len(dims))] + [_u32(d) for d in dims]
            chunks += [value.data.tobytes(), value.scales.astype("<f4").tobytes()]
        else:
            arr = np.asarray(value, dtype="<f4")
            chunks += [bytes([KIND_F32]), _u32(arr.ndim)] + [_u32(d) for d in arr.shape]
            chunks.append(arr.tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise ParamsFormatError(f"truncated {what} at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def loads(buf: bytes) -> MbWaveRnnParams:
    r = _Reader(buf)
    magic, version, g, f, b, sr, c, count = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise ParamsFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ParamsFormatError(f"unsupported version {version}")
    try:
        config = MbWaveRnnConfig(g, f, b, sr, c)
    except ValidationError as exc:
        raise ParamsFormatError(f"bad config in header: {exc}") from None
    tensors = {}
    for _ in range(count):
        name = r.take(r.u32("name length"), "name").decode("utf-8", errors="replace")
        kind = r.take(1, "kind")[0]
        dims = tuple(r.u32("dims") for _ in range(r.u32("rank")))
        size = int(np.prod(dims, dtype=np.int64))
        if kind == KIND_F32:
            value = np.frombuffer(r.take(4 * size, name), dtype="<f4").reshape(dims).astype(np.float32)
        elif kind == KIND_INT8:
            if not dims:
                raise ParamsFormatError(f"{name}: quantized tensor needs rank >= 1")
            data = np.frombuffer(r.take(size, name), dtype=np.int8).reshape(dims).copy()
            rows = int(np.prod(dims[:-1], dtype=np.int64))
            scales = np.frombuffer(r.take(4 * rows, name + " scales"), dtype="<f4").astype(np.float32)
            try:
                value = QuantizedTensor(data, scales)
            except ValidationError as exc:
                raise ParamsFormatError(f"{name}: {exc}") from None
        else:
            raise ParamsFormatError(f"{name}: unknown tensor kind {kind}")
        if name in tensors:
            raise ParamsFormatError(f"duplicate tensor {name!r}")
        tensors[name] = value
    if r.pos != len(buf):
        raise ParamsFormatError(f"{len(buf) - r.pos} trailing bytes")
    try:
        return MbWaveRnnParams.from_tensors(config, tensors)
    except ValidationError as exc:
        raise ParamsFormatError(str(exc)) from None


def save(path, params: MbWaveRnnParams) -> None:
    Path(path).write_bytes(dumps(params))


def load(path) -> MbWaveRnnParams:
    return loads(Path(path).read_bytes())


def write_random(path, config: MbWaveRnnConfig, seed: int) -> MbWaveRnnParams:
    """Write seeded random float parameters, e.g. for benchmarks."""
    params = MbWaveRnnParams.random(config, seed)
    save(path, params)
    return params
