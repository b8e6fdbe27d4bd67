import os
import subprocess
import sys

import numpy as np
import pytest

from mbvoc import _accel, kernels
from mbvoc.quant import quantize
from mbvoc.wavernn import MbWaveRnnConfig, MbWaveRnnParams, PreparedModel

numba_only = pytest.mark.skipif(not _accel.NUMBA_AVAILABLE, reason="numba disabled")
SHAPES = [(1, 1), (3, 5), (16, 16), (17, 33), (48, 3), (64, 7), (576, 192), (1024, 192), (80, 70)]


def int8_kernels():
    names = ["portable"]
    if _accel.HAS_VNNI:
        names.append("vnni")
    return names


def test_round_half_away():
    v = np.array([-2.5, -1.5, -0.5, 0.0, 0.5, 1.5, 2.4, 2.6])
    np.testing.assert_array_equal(kernels.round_half_away(v), [-3, -2, -1, 0, 1, 2, 2, 3])


@numba_only
@pytest.mark.parametrize("shape", SHAPES)
def test_float_panel_matvec(shape, rng):
    rows, cols = shape
    w = rng.standard_normal(shape).astype(np.float32)
    x = rng.standard_normal(cols).astype(np.float32)
    out = np.zeros(rows, np.float32)
    kernels._mv_f32_nb(kernels.float_layer(w, "numba"), x, out)
    ref = w.astype(np.float64) @ x.astype(np.float64)
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-5 * np.sqrt(cols) * np.abs(ref).max())


@numba_only
@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("kind", int8_kernels())
def test_int8_kernels_bit_exact_with_numpy(shape, kind, rng):
    rows, cols = shape
    w = rng.standard_normal(shape)
    x = rng.standard_normal(cols).astype(np.float32)
    q = quantize(w)
    ref = np.zeros(rows, np.float32)
    kernels._mv_q8_np(kernels.int8_layer(q.rows(), q.scales, "numpy"), x, ref)
    out = np.zeros(rows, np.float32)
    fn = kernels._mv_q8_vnni_nb if kind == "vnni" else kernels._mv_q8_portable_nb
    fn(kernels.int8_layer(q.rows(), q.scales, "numba", kind), x, out)
    np.testing.assert_array_equal(out, ref)


@numba_only
@pytest.mark.parametrize("kind", int8_kernels())
def test_int8_kernel_extreme_values(kind):
    # all-127 weights and activations exercise the u8 offset and int32 headroom
    w = np.ones((32, 4096))
    x = -np.ones(4096, np.float32)
    q = quantize(w)
    out = np.zeros(32, np.float32)
    fn = kernels._mv_q8_vnni_nb if kind == "vnni" else kernels._mv_q8_portable_nb
    fn(kernels.int8_layer(q.rows(), q.scales, "numba", kind), x, out)
    np.testing.assert_allclose(out, -4096.0, rtol=1e-6)


@numba_only
def test_int8_kernel_zero_vector(rng):
    q = quantize(rng.standard_normal((20, 9)))
    for kind in int8_kernels():
        out = np.full(20, 7, np.float32)
        fn = kernels._mv_q8_vnni_nb if kind == "vnni" else kernels._mv_q8_portable_nb
        fn(kernels.int8_layer(q.rows(), q.scales, "numba", kind), np.zeros(9, np.float32), out)
        assert not out.any()


@numba_only
def test_int8_matches_quant_reference(rng):
    from mbvoc.quant import qmatvec

    w = rng.standard_normal((40, 30))
    x = rng.standard_normal(30).astype(np.float32)
    q = quantize(w)
    out = np.zeros(40, np.float32)
    kernels.get_ops("numba").mv_q8(kernels.int8_layer(q.rows(), q.scales, "numba",
                                                      kernels.get_ops("numba").int8_kernel), x, out)
    np.testing.assert_allclose(out, qmatvec(q, x), rtol=1e-5, atol=1e-6)


@numba_only
def test_fast_tanh_accuracy():
    x = np.linspace(-12, 12, 200001).astype(np.float32)
    approx = np.array([kernels._tanh_f32(v) for v in x[::50]])
    assert np.max(np.abs(approx - np.tanh(x[::50].astype(np.float64)))) < 1e-6


@numba_only
def test_fast_exp_accuracy():
    x = -np.linspace(0, 40, 4001)
    approx = np.array([kernels._exp_neg(v) for v in x])
    np.testing.assert_allclose(approx, np.exp(x), rtol=1e-10)


@numba_only
def test_gru_kernels_agree(rng):
    g = 37
    gi = rng.standard_normal(3 * g).astype(np.float32) * 3
    gh = rng.standard_normal(3 * g).astype(np.float32) * 3
    h0 = rng.uniform(-1, 1, g).astype(np.float32)
    a, b = h0.copy(), h0.copy()
    kernels._gru_np(gi, gh, a)
    kernels._gru_nb(gi, gh, b)
    np.testing.assert_allclose(a, b, atol=2e-6)


@numba_only
def test_draw_kernels_agree(rng):
    work = np.empty(256)
    for _ in range(2000):
        logits = (rng.standard_normal(512) * rng.uniform(0.1, 20)).astype(np.float32)
        u = rng.random()
        off = 256 * int(rng.integers(0, 2))
        inv_t = float(rng.uniform(0.5, 2))
        assert kernels._draw_np(logits, off, inv_t, u, work) == kernels._draw_nb(logits, off, inv_t, u, work)


@numba_only
def test_logprob_kernels_agree(rng):
    logits = (rng.standard_normal(256) * 5).astype(np.float32)
    for t in (0, 17, 255):
        assert kernels._logprob_np(logits, 0, t) == pytest.approx(kernels._logprob_nb(logits, 0, t), abs=1e-12)


@numba_only
@pytest.mark.parametrize("arithmetic", ["float", "int8"])
def test_backend_logits_agree_under_teacher_forcing(arithmetic, rng):
    from mbvoc.multirate import SubbandSignals

    cfg = MbWaveRnnConfig(40, 24, 4, 16000, 2)
    p = MbWaveRnnParams.random(cfg, 1)
    targets = SubbandSignals(rng.uniform(-1, 1, (4, 120)), 4, 16000)
    cond = rng.standard_normal((120, 2))
    a = PreparedModel(p, arithmetic, "numpy").teacher_forced_nll(targets, cond)
    b = PreparedModel(p, arithmetic, "numba").teacher_forced_nll(targets, cond)
    assert a == pytest.approx(b, rel=1e-5)


@numba_only
def test_vnni_and_portable_generate_identically():
    if not _accel.HAS_VNNI:
        pytest.skip("host lacks AVX512-VNNI")
    cfg = MbWaveRnnConfig(32, 32, 2, 16000)
    p = MbWaveRnnParams.random(cfg, 2)
    a = PreparedModel(p, "int8", "numba", "vnni").generate_categories(200, rng=1)
    b = PreparedModel(p, "int8", "numba", "portable").generate_categories(200, rng=1)
    np.testing.assert_array_equal(a, b)


def test_unknown_backend_rejected():
    from mbvoc.errors import ValidationError

    with pytest.raises(ValidationError):
        _accel.resolve_backend("gpu")


def test_numpy_fallback_in_fresh_interpreter():
    env = dict(os.environ, MBVOC_DISABLE_NUMBA="1")
    code = ("import sys, mbvoc._accel as a, mbvoc.wavernn as w; "
            "assert not a.NUMBA_AVAILABLE and 'numba' not in sys.modules; "
            "c = w.MbWaveRnnConfig(8, 8, 2, 2000); "
            "s = w.generate(w.MbWaveRnnParams.random(c, 0), 20, rng=0, arithmetic='int8'); "
            "print(s.bands.shape)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "(2, 20)"
