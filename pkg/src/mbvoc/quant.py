"""Symmetric per-row int8 weight quantization and the reference int8 matvec.

Rows are every axis but the last, so a ``(bands, 256, width)`` head stack gets
one scale per output unit.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .kernels import round_half_away

QMAX = 127
# largest column count whose worst-case int32 accumulation cannot overflow
MAX_ACCUM_COLS = (2**31 - 1) // (QMAX * QMAX)


@dataclass(frozen=True)
class QuantizedTensor:
    """int8 payload in ``[-127, 127]`` with one float32 scale per row."""

    data: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        scales = np.asarray(self.scales, dtype=np.float32)
        if data.dtype != np.int8:
            raise ValidationError(f"payload must be int8, got {data.dtype}")
        if data.ndim < 1:
            raise ValidationError("payload must have at least one axis")
        rows = int(np.prod(data.shape[:-1], dtype=np.int64))
        if scales.shape != (rows,):
            raise ValidationError(f"expected {rows} scales, got shape {scales.shape}")
        if np.any(data == -128):
            raise ValidationError("payload value -128 is outside the symmetric range")
        if np.any(scales < 0) or not np.all(np.isfinite(scales)):
            raise ValidationError("scales must be finite and non-negative")
        data.flags.writeable = False
        scales.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "scales", scales)

    @property
    def dims(self):
        return self.data.shape

    def rows(self):
        """Payload as a 2-D ``(rows, cols)`` view."""
        return self.data.reshape(-1, self.data.shape[-1])


def _f32_scales(peak):
    """float32 scales with ``|w - q*s| <= s/2`` guaranteed after the cast.

    Rounding the scale down keeps exact ties (``w/s == k + 1/2``) on the far
    side of the tie, so they still round away from zero; the peak element then
    clips at 127 with an error of at most ``127 * ulp``. Where that slack is not
    below ``s/2`` (subnormal scales, or underflow to 0) the scale is rounded up
    instead, which keeps ``|w/s| <= 127``.
    """
    exact = peak / QMAX
    with np.errstate(over="ignore"):
        near = exact.astype(np.float32)
    if not np.all(np.isfinite(near)):
        raise ValidationError("row magnitude too large for a float32 scale")
    down = near.copy()
    high = down.astype(np.float64) > exact
    down[high] = np.nextafter(down[high], np.float32(0))
    up = near.copy()
    low = up.astype(np.float64) < exact
    up[low] = np.nextafter(up[low], np.float32(np.inf))
    slack = QMAX * (exact - down.astype(np.float64))
    use_up = (exact > 0) & ((down == 0) | (slack > down.astype(np.float64) / 2))
    return np.where(use_up, up, down)


def quantize(weights) -> QuantizedTensor:
    """Quantize ``weights`` row by row: ``q = round(w / s)`` with ``s = max|row| / 127``.

    Ties round away from zero. All-zero rows get scale 0 and a zero payload.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim < 1:
        raise ValidationError("cannot quantize a scalar")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weights contain non-finite values")
    if w.shape[-1] == 0:
        raise ValidationError("cannot quantize rows of width 0")
    w2 = w.reshape(-1, w.shape[-1])
    peak = np.abs(w2).max(axis=1) if w2.shape[0] else np.zeros(0)
    scales = _f32_scales(peak)
    safe = np.where(scales > 0, scales.astype(np.float64), 1.0)
    q = np.clip(round_half_away(w2 / safe[:, None]), -QMAX, QMAX)
    q[scales == 0] = 0
    return QuantizedTensor(q.astype(np.int8).reshape(w.shape), scales)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    """Float64 reconstruction ``q * scale`` (exact: int8 times float32 fits a double)."""
    rows = q.rows().astype(np.float64) * q.scales.astype(np.float64)[:, None]
    return rows.reshape(q.dims)


def quantize_activation(x):
    """Symmetric per-vector int8 quantization; returns ``(int8 values, scale)``."""
    x = np.asarray(x, dtype=np.float64)
    peak = np.abs(x).max() if x.size else 0.0
    if peak == 0:
        return np.zeros(x.shape, np.int8), 0.0
    scale = peak / QMAX
    return np.clip(round_half_away(x / scale), -QMAX, QMAX).astype(np.int8), scale


def qmatvec(q: QuantizedTensor, x) -> np.ndarray:
    """Integer matrix-vector product of a 2-D quantized matrix with a float vector.

    ``x`` is quantized on the fly with its own scale, products are accumulated
    in int32 and the result is rescaled by ``row_scale * x_scale``.
    """
    if q.data.ndim != 2:
        raise ValidationError("qmatvec needs a 2-D quantized matrix")
    x = np.asarray(x, dtype=np.float64)
    rows, cols = q.dims
    if x.shape != (cols,):
        raise ValidationError(f"vector length {x.shape} does not match {cols} columns")
    if cols > MAX_ACCUM_COLS:
        raise ValidationError(f"{cols} columns could overflow the int32 accumulator")
    if not np.all(np.isfinite(x)):
        raise ValidationError("vector contains non-finite values")
    xq, sx = quantize_activation(x)
    acc = q.data.astype(np.int32) @ xq.astype(np.int32)
    return acc.astype(np.float64) * q.scales.astype(np.float64) * sx


def qmatvec_error_bound(q: QuantizedTensor, w, x) -> np.ndarray:
    """Per-row worst case of ``|qmatvec(q, x) - w @ x|`` from the two rounding stages."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _, sx = quantize_activation(x)
    sw = q.scales.astype(np.float64)
    ax = np.abs(x).sum()
    aw = np.abs(w).sum(axis=1)
    cols = w.shape[1]
    return sw / 2 * ax + sx / 2 * aw + sw * sx / 4 * cols
