"""Pseudo-QMF cosine-modulated filter bank design.

Frequencies are normalized to the sample rate: 0.5 is Nyquist. The prototype
is a Kaiser-window lowpass whose cutoff is tuned so that
``|H(1/(4N))|^2 == 1/2``, the crossover condition for adjacent bands.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, signal

from .errors import DesignError, ValidationError

DEFAULT_ORDER = 63
DEFAULT_BETA = 9.0
DEFAULT_GRID = 8192
DB_FLOOR = -300.0


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PrototypeFilter:
    taps: np.ndarray
    num_bands: int
    order: int
    cutoff: float = float("nan")
    beta: float = float("nan")
    residual: float = float("nan")

    def __post_init__(self):
        taps = _frozen(self.taps)
        if taps.ndim != 1 or taps.size != self.order + 1:
            raise ValidationError(f"expected {self.order + 1} taps, got shape {taps.shape}")
        if self.num_bands < 2:
            raise ValidationError("num_bands must be >= 2")
        if not np.all(np.isfinite(taps)):
            raise ValidationError("taps must be finite")
        if not np.array_equal(taps, taps[::-1]):
            raise ValidationError("prototype taps must be symmetric")
        object.__setattr__(self, "taps", taps)

    @property
    def length(self) -> int:
        return self.taps.size


@dataclass(frozen=True)
class FilterBank:
    analysis: np.ndarray  # (bands, length)
    synthesis: np.ndarray  # (bands, length)
    num_bands: int
    prototype: PrototypeFilter

    def __post_init__(self):
        shape = (self.num_bands, self.prototype.length)
        analysis, synthesis = _frozen(self.analysis), _frozen(self.synthesis)
        if analysis.shape != shape or synthesis.shape != shape:
            raise ValidationError(f"analysis and synthesis banks must both be {shape}")
        object.__setattr__(self, "analysis", analysis)
        object.__setattr__(self, "synthesis", synthesis)

    @property
    def length(self) -> int:
        return self.prototype.length

    @property
    def delay(self) -> int:
        """End-to-end analysis/synthesis delay in fullband samples."""
        return self.length - 1


@dataclass(frozen=True)
class FrequencyResponse:
    grid: np.ndarray
    magnitude_db: np.ndarray

    def __post_init__(self):
        grid, mag = _frozen(self.grid), _frozen(self.magnitude_db)
        if grid.shape != mag.shape:
            raise ValidationError("grid and magnitude lengths differ")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "magnitude_db", mag)


def dtft(taps, freqs):
    """Complex DTFT of ``taps`` at normalized frequencies ``freqs``."""
    _, h = signal.freqz(np.asarray(taps, dtype=np.float64), worN=np.atleast_1d(freqs), fs=1.0)
    return h


def power_complementarity_residual(taps, num_bands: int, num_points: int = 4096) -> float:
    """``max | |H(f)|^2 + |H(1/(2N) - f)|^2 - 1 |`` over ``f`` in ``[0, 1/(2N)]``."""
    f = np.linspace(0.0, 1.0 / (2 * num_bands), num_points)
    a = np.abs(dtft(taps, f)) ** 2
    b = np.abs(dtft(taps, f[::-1])) ** 2
    return float(np.max(np.abs(a + b - 1.0)))


def _kaiser_lowpass(length, cutoff, beta):
    h = signal.firwin(length, cutoff, window=("kaiser", beta), fs=1.0)
    # bitwise symmetry: a + b == b + a in IEEE arithmetic
    return 0.5 * (h + h[::-1])


def design_prototype(num_bands: int = 4, order: int = DEFAULT_ORDER, beta: float = DEFAULT_BETA) -> PrototypeFilter:
    """Design the linear-phase lowpass prototype for an ``num_bands`` pseudo-QMF bank.

    ``beta`` is the Kaiser window shape: larger values trade a wider transition
    band for deeper stopband attenuation. The cutoff is found by root search on
    the crossover condition at ``1/(4N)``.
    """
    if num_bands < 2:
        raise ValidationError("num_bands must be >= 2")
    if order % 2 == 0:
        raise ValidationError(f"order must be odd so the filter length is even, got {order}")
    if order < 4 * num_bands - 1:
        raise ValidationError(f"order {order} too small for {num_bands} bands (need >= {4 * num_bands - 1})")
    if not beta >= 0:
        raise ValidationError("Kaiser beta must be >= 0")
    length = order + 1
    crossover = 1.0 / (4 * num_bands)

    def gap(cutoff):
        return abs(dtft(_kaiser_lowpass(length, cutoff, beta), crossover)[0]) ** 2 - 0.5

    lo, hi = 0.25 * crossover, min(3.0 * crossover, 0.499)
    try:
        cutoff = optimize.brentq(gap, lo, hi, xtol=1e-12)
    except ValueError:
        grid = np.linspace(lo, hi, 257)
        gaps = np.array([abs(gap(c)) for c in grid])
        best = int(np.argmin(gaps))
        raise DesignError("cutoff search did not bracket the crossover condition",
                          float(gaps[best]), float(grid[best])) from None
    taps = _kaiser_lowpass(length, cutoff, beta)
    residual = power_complementarity_residual(taps, num_bands)
    return PrototypeFilter(taps, num_bands, order, float(cutoff), float(beta), residual)


def modulate(prototype: PrototypeFilter) -> FilterBank:
    """Cosine-modulate the prototype into analysis and synthesis banks.

    ``h_k(n) = 2 p(n) cos(pi/N (k+1/2) (n - (L-1)/2) + (-1)^k pi/4)``; the synthesis
    filters flip the sign of the phase term, which makes them the time reverse
    of the analysis filters.
    """
    n_bands, length = prototype.num_bands, prototype.length
    n = np.arange(length) - (length - 1) / 2.0
    k = np.arange(n_bands)[:, None]
    arg = np.pi / n_bands * (k + 0.5) * n[None, :]
    phase = (-1.0) ** k * np.pi / 4
    analysis = 2.0 * prototype.taps * np.cos(arg + phase)
    synthesis = 2.0 * prototype.taps * np.cos(arg - phase)
    return FilterBank(analysis, synthesis, n_bands, prototype)


def design_bank(num_bands: int = 4, order: int = DEFAULT_ORDER, beta: float = DEFAULT_BETA) -> FilterBank:
    return modulate(design_prototype(num_bands, order, beta))


def frequency_response(taps, num_points: int = DEFAULT_GRID) -> FrequencyResponse:
    """Magnitude response in dB on ``num_points`` uniform frequencies in ``[0, 0.5]``.

    Magnitudes below -300 dB are clamped to -300 dB.
    """
    taps = np.asarray(taps, dtype=np.float64)
    if taps.size == 0:
        raise ValidationError("taps are empty")
    if num_points < 2 * taps.size:
        raise ValidationError(f"num_points must be >= {2 * taps.size}")
    grid = np.linspace(0.0, 0.5, num_points)
    mag = np.abs(dtft(taps, grid))
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    return FrequencyResponse(grid, np.maximum(db, DB_FLOOR))


def stopband_attenuation(taps, edge: float, num_points: int = DEFAULT_GRID) -> float:
    """Peak response at or above normalized frequency ``edge``, in dB relative to the peak gain."""
    resp = frequency_response(taps, max(num_points, 2 * len(taps)))
    peak = resp.magnitude_db.max()
    return float(resp.magnitude_db[resp.grid >= edge].max() - peak)


def prototype_stopband(prototype: PrototypeFilter, num_points: int = DEFAULT_GRID) -> float:
    """Prototype stopband in dB, measured from ``1/(2N)`` (twice the crossover) upwards."""
    return stopband_attenuation(prototype.taps, 1.0 / (2 * prototype.num_bands), num_points)


def analysis_stopband(bank: FilterBank, band: int = 0, num_points: int = DEFAULT_GRID) -> float:
    """Stopband of one analysis filter, excluding its band and half a band width either side."""
    n = bank.num_bands
    lo = (band - 0.5) / (2 * n)
    hi = (band + 1.5) / (2 * n)
    resp = frequency_response(bank.analysis[band], max(num_points, 2 * bank.length))
    outside = (resp.grid <= lo) | (resp.grid >= hi)
    return float(resp.magnitude_db[outside].max() - resp.magnitude_db.max())


def bank_power_sum(bank: FilterBank, num_points: int = DEFAULT_GRID):
    """``(grid, sum_k |H_k(f)|^2)`` for the analysis filters."""
    grid = np.linspace(0.0, 0.5, num_points)
    total = np.zeros(num_points)
    for h in bank.analysis:
        total += np.abs(dtft(h, grid)) ** 2
    return grid, total


def bank_power_deviation(bank: FilterBank, guard: float = 0.02, num_points: int = DEFAULT_GRID) -> float:
    """Peak-to-peak spread of the analysis power sum, ignoring ``guard`` * 0.5 at both ends."""
    grid, total = bank_power_sum(bank, num_points)
    keep = (grid >= guard * 0.5) & (grid <= 0.5 * (1 - guard))
    return float(total[keep].max() - total[keep].min())


# --------------------------------------------------------------------------
# plain-text export
# --------------------------------------------------------------------------


def save_taps(path, taps) -> None:
    """One tap per line with round-trip precision."""
    Path(path).write_text("".join(f"{float(t)!r}\n" for t in np.asarray(taps, dtype=np.float64)))


def load_taps(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    try:
        return np.array([float(ln) for ln in lines if ln], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def save_response_csv(path, response: FrequencyResponse) -> None:
    rows = ["normalized_frequency,magnitude_db"]
    rows += [f"{f!r},{m!r}" for f, m in zip(response.grid.tolist(), response.magnitude_db.tolist())]
    Path(path).write_text("\n".join(rows) + "\n")
