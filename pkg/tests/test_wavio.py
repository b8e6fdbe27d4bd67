import struct
import wave

import numpy as np
import pytest
from scipy.io import wavfile

from mbvoc import wavio
from mbvoc.errors import WavFormatError


def test_pcm16_round_trip(tmp_path, rng):
    x = np.round(rng.uniform(-1, 1, 999) * 32767) / 32768
    wavio.write(tmp_path / "a.wav", x, 16000)
    w = wavio.read(tmp_path / "a.wav")
    assert (w.sample_rate, w.sample_format, w.channels) == (16000, "pcm16", 1)
    np.testing.assert_array_equal(w.samples, x)


def test_float32_multichannel_round_trip(tmp_path, rng):
    x = rng.standard_normal((100, 4)).astype(np.float32).astype(np.float64)
    wavio.write(tmp_path / "b.wav", x, 4000, "float32")
    w = wavio.read(tmp_path / "b.wav")
    assert w.channels == 4 and w.sample_format == "float32"
    np.testing.assert_array_equal(w.samples, x)


def test_interoperates_with_stdlib_and_scipy(tmp_path, rng):
    x = rng.integers(-32768, 32768, 500).astype(np.int16)
    with wave.open(str(tmp_path / "std.wav"), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(22050)
        f.writeframes(x.tobytes())
    w = wavio.read(tmp_path / "std.wav")
    np.testing.assert_array_equal(w.samples, x / 32768)
    y = rng.standard_normal(77).astype(np.float32)
    wavio.write(tmp_path / "f.wav", y, 8000, "float32")
    rate, data = wavfile.read(tmp_path / "f.wav")
    assert rate == 8000
    np.testing.assert_array_equal(data, y)


def test_pcm16_clips(tmp_path):
    wavio.write(tmp_path / "c.wav", [2.0, -2.0, 0.5], 100)
    np.testing.assert_array_equal(wavio.read(tmp_path / "c.wav").samples, [32767 / 32768, -1.0, 0.5])


def test_extensible_float(tmp_path):
    data = np.array([0.25, -0.5], "<f4").tobytes()
    guid = struct.pack("<H", 3) + b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
    fmt = struct.pack("<HHIIHHHHI", 0xFFFE, 1, 8000, 32000, 4, 32, 22, 32, 4) + guid
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    w = wavio.parse(b"RIFF" + struct.pack("<I", len(body)) + body)
    np.testing.assert_array_equal(w.samples, [0.25, -0.5])


def test_skips_unknown_chunks():
    good = wavio.encode([0.5, -0.5], 1000)
    extra = b"LIST" + struct.pack("<I", 3) + b"abc\x00"
    patched = good[:12] + extra + good[12:]
    np.testing.assert_array_equal(wavio.parse(patched).samples, [0.5, -0.5])


def _offset(buf):
    with pytest.raises(WavFormatError) as info:
        wavio.parse(buf)
    return info.value.offset


def test_error_offsets():
    good = wavio.encode([0.1, 0.2, 0.3], 1000)
    assert _offset(b"RIFX" + good[4:]) == 0
    assert _offset(good[:8] + b"WAVX" + good[12:]) == 8
    assert _offset(good[:5]) == 5
    # data chunk truncated: offset points at its size field
    data_at = good.index(b"data")
    assert _offset(good[:-2]) == data_at + 4
    # 24-bit PCM is unsupported: offset points at the fmt body
    fmt_at = good.index(b"fmt ") + 8
    bad = bytearray(good)
    struct.pack_into("<H", bad, fmt_at + 14, 24)
    assert _offset(bytes(bad)) == fmt_at
    # no data chunk at all
    assert _offset(good[:data_at]) == data_at


def test_block_align_mismatch():
    good = bytearray(wavio.encode([0.1, 0.2], 1000))
    fmt_at = good.index(b"fmt ") + 8
    struct.pack_into("<H", good, fmt_at + 12, 3)
    with pytest.raises(WavFormatError, match="align"):
        wavio.parse(bytes(good))
