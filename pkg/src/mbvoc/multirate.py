"""Critically sampled subband analysis and synthesis around a :class:`FilterBank`."""
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import ValidationError


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValidationError("audio must be mono (1-D)")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise ValidationError("audio contains non-finite samples")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SubbandSignals:
    bands: np.ndarray  # (num_bands, length)
    num_bands: int
    parent_sample_rate: int

    def __post_init__(self):
        bands = np.array(self.bands, dtype=np.float64)
        if bands.ndim != 2 or bands.shape[0] != self.num_bands:
            raise ValidationError(f"bands must have shape ({self.num_bands}, length)")
        if self.parent_sample_rate <= 0:
            raise ValidationError("parent_sample_rate must be positive")
        bands.flags.writeable = False
        object.__setattr__(self, "bands", bands)

    @property
    def length(self) -> int:
        return self.bands.shape[1]

    @property
    def band_sample_rate(self) -> float:
        return self.parent_sample_rate / self.num_bands


def analyze(sig: AudioSignal, bank) -> SubbandSignals:
    """Filter with each analysis filter (full linear convolution) and keep samples 0, N, 2N, ..."""
    if len(sig) == 0:
        raise ValidationError("cannot analyze an empty signal")
    n = bank.num_bands
    bands = np.stack([np.convolve(sig.samples, h)[::n] for h in bank.analysis])
    return SubbandSignals(bands, n, sig.sample_rate)


def synthesize(subbands: SubbandSignals, bank) -> AudioSignal:
    """Zero-stuff each band by N (with interpolation gain N), filter, and sum.

    The output has ``length * N + L - 1`` samples and lags the original by ``L - 1``.
    """
    n = bank.num_bands
    if subbands.num_bands != n:
        raise ValidationError(f"{subbands.num_bands} subbands given to a {n}-band filter bank")
    m = subbands.length
    out = np.zeros(m * n + bank.length - 1)
    up = np.zeros(m * n)
    for band, g in zip(subbands.bands, bank.synthesis):
        up[::n] = n * band
        out += np.convolve(up, g)
    return AudioSignal(out, subbands.parent_sample_rate)


def snr_db(reference, estimate) -> float:
    reference = np.asarray(reference, dtype=np.float64)
    err = reference - np.asarray(estimate, dtype=np.float64)
    noise = float(np.sum(err * err))
    power = float(np.sum(reference * reference))
    if noise == 0:
        return float("inf")
    return 10.0 * np.log10(power / noise)


def roundtrip_snr(sig: AudioSignal, bank) -> float:
    """SNR in dB of analyze -> synthesize, aligned by ``L - 1`` with ``L`` edge samples trimmed."""
    length = bank.length
    if len(sig) < 4 * length:
        raise ValidationError(f"signal needs at least {4 * length} samples")
    y = synthesize(analyze(sig, bank), bank).samples
    d = bank.delay
    aligned = y[d:d + len(sig)]
    return snr_db(sig.samples[length:-length], aligned[length:-length])


def estimate_delay(reference, delayed) -> int:
    """Lag (in samples) of the cross-correlation peak of ``delayed`` against ``reference``."""
    reference = np.asarray(reference, dtype=np.float64)
    delayed = np.asarray(delayed, dtype=np.float64)
    corr = sps.correlate(delayed, reference, mode="full", method="fft")
    lags = sps.correlation_lags(delayed.size, reference.size, mode="full")
    return int(lags[np.argmax(corr)])


def compensate_delay(out: AudioSignal, bank, length=None) -> AudioSignal:
    """Drop the ``L - 1`` leading samples of a synthesis output (and trim to ``length``)."""
    d = bank.delay
    stop = out.samples.size if length is None else d + length
    return AudioSignal(out.samples[d:stop], out.sample_rate)
