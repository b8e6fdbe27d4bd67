"""Hot inner loops of autoregressive generation.

Each kernel exists as an explicit-loop version compiled with numba and a
vectorised numpy version. ``get_ops`` bundles one consistent set. The
generation loop itself is written once and either compiled or run as plain
Python around the numpy kernels.

Layer layouts handed to the matvec kernels:

* float32 (numpy): ``(W,)`` with ``W`` C-contiguous ``float32[rows, cols]``.
* float32 (numba): ``(P, scratch)``; ``P`` is ``float32[panels, cols, 16]``, rows
  padded to a multiple of 16 and interleaved so one vector holds 16 rows.
* int8 (numba): ``(Q, rowsum, scale, xq, u, acc)``. For the VNNI kernel ``Q`` is
  ``int8[panels, cols/4, 16, 4]`` (columns padded to a multiple of 4); for the
  portable kernel it is ``int8[rows, cols_padded]`` padded to 64 columns.
  ``rowsum`` holds int32 row sums, ``scale`` float32 row scales and
  ``xq``/``u``/``acc`` are per-layer workspaces.
* int8 (numpy): ``(Q32, scale)``; numpy has no int8 GEMV with wide accumulation so
  the payload is widened once at preparation time.
"""
from types import SimpleNamespace

import numpy as np

from . import _accel
from ._accel import njit

# --------------------------------------------------------------------------
# numpy kernels
# --------------------------------------------------------------------------


def round_half_away(v):
    """Round to nearest integer, ties away from zero."""
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def _mv_f32_np(layer, x, out):
    np.dot(layer[0], x, out=out)


def _mv_q8_np(layer, x, out):
    q32, scale = layer
    m = np.float32(np.max(np.abs(x)))
    if m == 0:
        out[:] = 0
        return
    sx = m / np.float32(127.0)
    xq = np.minimum(round_half_away(x / sx), 127).astype(np.int32)
    acc = q32 @ xq
    out[:] = acc.astype(np.float32) * scale * sx


def _gru_np(gi, gh, h):
    g = h.shape[0]
    r = 1.0 / (1.0 + np.exp(-(gi[:g] + gh[:g])))
    z = 1.0 / (1.0 + np.exp(-(gi[g:2 * g] + gh[g:2 * g])))
    n = np.tanh(gi[2 * g:] + r * gh[2 * g:])
    h[:] = (1.0 - z) * n + z * h


def _relu_np(a):
    np.maximum(a, 0, out=a)


def _draw_np(logits, off, inv_temp, u, work):
    v = logits[off:off + 256].astype(np.float64) * inv_temp
    e = np.exp(v - v.max())
    cdf = np.cumsum(e)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    if i > 255:
        i = int(np.flatnonzero(e)[-1])
    return i


def _logprob_np(logits, off, target):
    v = logits[off:off + 256].astype(np.float64)
    m = v.max()
    return v[target] - m - np.log(np.sum(np.exp(v - m)))


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------
#
# Both matvec kernels use a panel layout: 16 consecutive output rows are
# interleaved so one 512-bit vector accumulates 16 row sums at once and no
# horizontal reductions are needed. Four row panels are processed per pass to
# keep four independent accumulator chains in flight.

PANEL = 16
PANELS_PER_PASS = 4


@njit
def _quantize_activation_nb(x, xq, u):
    # returns the activation scale; 0 means x is all zeros
    n = x.shape[0]
    m = np.float32(0.0)
    for j in range(n):
        a = abs(x[j])
        if a > m:
            m = a
    if m == 0:
        return np.float32(0.0)
    sx = m / np.float32(127.0)
    for j in range(n):
        v = x[j] / sx
        r = np.floor(abs(v) + np.float32(0.5))
        if r > 127:
            r = np.float32(127.0)
        q = np.int32(r)
        if v < 0:
            q = -q
        xq[j] = q
        u[j] = q + 128
    return sx


if _accel.NUMBA_AVAILABLE:
    from llvmlite import ir
    from numba import types
    from numba.core import cgutils
    from numba.extending import intrinsic

    def _splat(builder, scalar, vty):
        vec = builder.insert_element(ir.Constant(vty, ir.Undefined), scalar, ir.Constant(ir.IntType(32), 0))
        mask = ir.Constant(ir.VectorType(ir.IntType(32), vty.count), [0] * vty.count)
        return builder.shuffle_vector(vec, ir.Constant(vty, ir.Undefined), mask)

    def _emit_panels(builder, npanels, emit_pass):
        # full passes of PANELS_PER_PASS panels, then single-panel remainder
        ity = npanels.type
        groups = builder.udiv(npanels, ir.Constant(ity, PANELS_PER_PASS))
        with cgutils.for_range(builder, groups) as loop:
            emit_pass(builder.mul(loop.index, ir.Constant(ity, PANELS_PER_PASS)), PANELS_PER_PASS)
        done = builder.mul(groups, ir.Constant(ity, PANELS_PER_PASS))
        with cgutils.for_range(builder, builder.sub(npanels, done)) as loop:
            emit_pass(builder.add(done, loop.index), 1)

    @intrinsic
    def _panel_f32(typingctx, wp, x, out):
        """``out[:16*panels] = W @ x`` for float32 panels ``wp[panel, col, 16]`` via FMA."""
        sig = types.void(wp, x, out)

        def codegen(context, builder, signature, args):
            wa = context.make_array(signature.args[0])(context, builder, args[0])
            xa = context.make_array(signature.args[1])(context, builder, args[1])
            oa = context.make_array(signature.args[2])(context, builder, args[2])
            npanels, ncols, _ = cgutils.unpack_tuple(builder, wa.shape, 3)
            f32 = ir.FloatType()
            v16 = ir.VectorType(f32, PANEL)
            fma = cgutils.get_or_insert_function(
                builder.module, ir.FunctionType(v16, [v16, v16, v16]), "llvm.fma.v16f32")
            wptr = builder.bitcast(wa.data, f32.as_pointer())
            xptr = builder.bitcast(xa.data, f32.as_pointer())
            optr = builder.bitcast(oa.data, f32.as_pointer())
            ity = ncols.type
            zero = ir.Constant(v16, None)
            accs = [cgutils.alloca_once(builder, v16) for _ in range(PANELS_PER_PASS)]

            def emit_pass(first, count):
                for a in accs[:count]:
                    builder.store(zero, a)
                with cgutils.for_range(builder, ncols) as loop:
                    j = loop.index
                    xv = _splat(builder, builder.load(builder.gep(xptr, [j])), v16)
                    for p, a in enumerate(accs[:count]):
                        panel = builder.add(first, ir.Constant(ity, p))
                        off = builder.mul(builder.add(builder.mul(panel, ncols), j), ir.Constant(ity, PANEL))
                        wv = builder.load(builder.bitcast(builder.gep(wptr, [off]), v16.as_pointer()), align=4)
                        builder.store(builder.call(fma, [wv, xv, builder.load(a)]), a)
                for p, a in enumerate(accs[:count]):
                    off = builder.mul(builder.add(first, ir.Constant(ity, p)), ir.Constant(ity, PANEL))
                    builder.store(builder.load(a), builder.bitcast(builder.gep(optr, [off]), v16.as_pointer()), align=4)

            _emit_panels(builder, npanels, emit_pass)
            return context.get_dummy_value()

        return sig, codegen

    @intrinsic
    def _panel_u8i8(typingctx, qp, u, out):
        """``out[:16*panels] = sum(q * u)`` for int8 panels ``qp[panel, col/4, 16, 4]`` via vpdpbusd.

        ``u`` holds unsigned activation bytes; each group of four is broadcast to
        all 16 lanes, and every lane accumulates one row in int32.
        """
        sig = types.void(qp, u, out)

        def codegen(context, builder, signature, args):
            qa = context.make_array(signature.args[0])(context, builder, args[0])
            ua = context.make_array(signature.args[1])(context, builder, args[1])
            oa = context.make_array(signature.args[2])(context, builder, args[2])
            npanels, ngroups, _, _ = cgutils.unpack_tuple(builder, qa.shape, 4)
            i8, i32 = ir.IntType(8), ir.IntType(32)
            v16 = ir.VectorType(i32, PANEL)
            v64 = ir.VectorType(i8, 4 * PANEL)
            dp = cgutils.get_or_insert_function(
                builder.module, ir.FunctionType(v16, [v16, v16, v16]), "llvm.x86.avx512.vpdpbusd.512")
            qptr = builder.bitcast(qa.data, i8.as_pointer())
            uptr = builder.bitcast(ua.data, i8.as_pointer())
            optr = builder.bitcast(oa.data, i32.as_pointer())
            ity = ngroups.type
            zero = ir.Constant(v16, None)
            accs = [cgutils.alloca_once(builder, v16) for _ in range(PANELS_PER_PASS)]

            def emit_pass(first, count):
                for a in accs[:count]:
                    builder.store(zero, a)
                with cgutils.for_range(builder, ngroups) as loop:
                    k = loop.index
                    up = builder.bitcast(builder.gep(uptr, [builder.mul(k, ir.Constant(ity, 4))]), i32.as_pointer())
                    uv = _splat(builder, builder.load(up, align=1), v16)
                    for p, a in enumerate(accs[:count]):
                        panel = builder.add(first, ir.Constant(ity, p))
                        off = builder.mul(builder.add(builder.mul(panel, ngroups), k), ir.Constant(ity, 4 * PANEL))
                        wv = builder.load(builder.bitcast(builder.gep(qptr, [off]), v64.as_pointer()), align=1)
                        builder.store(builder.call(dp, [builder.load(a), uv, builder.bitcast(wv, v16)]), a)
                for p, a in enumerate(accs[:count]):
                    off = builder.mul(builder.add(first, ir.Constant(ity, p)), ir.Constant(ity, PANEL))
                    builder.store(builder.load(a), builder.bitcast(builder.gep(optr, [off]), v16.as_pointer()), align=4)

            _emit_panels(builder, npanels, emit_pass)
            return context.get_dummy_value()

        return sig, codegen

    @intrinsic
    def _mac_i8(typingctx, acc, a, b):
        """``acc + int32(a) * int32(b)`` kept in 32 bits so LLVM can use vpmaddwd."""
        sig = types.int32(types.int32, types.int8, types.int8)

        def codegen(context, builder, signature, args):
            acc, a, b = args
            i32 = ir.IntType(32)
            return builder.add(acc, builder.mul(builder.sext(a, i32), builder.sext(b, i32)))

        return sig, codegen

    @njit
    def _mv_f32_nb(layer, x, out):
        wp, scratch = layer
        rows = out.shape[0]
        if rows == scratch.shape[0]:
            _panel_f32(wp, x, out)
        else:
            _panel_f32(wp, x, scratch)
            out[:] = scratch[:rows]

    @njit
    def _mv_q8_vnni_nb(layer, x, out):
        qp, rowsum, scale, xq, u, acc = layer
        sx = _quantize_activation_nb(x, xq, u)
        if sx == 0:
            out[:] = 0
            return
        # u = xq + 128, so sum(q*u) - 128*sum(q) == sum(q*xq)
        _panel_u8i8(qp, u, acc)
        for i in range(out.shape[0]):
            out[i] = np.float32(acc[i] - 128 * rowsum[i]) * scale[i] * sx

    @njit
    def _mv_q8_portable_nb(layer, x, out):
        q, rowsum, scale, xq, u, acc = layer
        sx = _quantize_activation_nb(x, xq, u)
        if sx == 0:
            out[:] = 0
            return
        rows, cols = q.shape
        for i in range(rows):
            s = np.int32(0)
            for j in range(cols):
                s = _mac_i8(s, q[i, j], xq[j])
            out[i] = np.float32(s) * scale[i] * sx

else:  # pragma: no cover - exercised only with MBVOC_DISABLE_NUMBA=1
    _mv_f32_nb = _mv_q8_vnni_nb = _mv_q8_portable_nb = None


# rational minimax tanh (odd 13/even 6), |error| < 4e-7 in float32; pure
# arithmetic so the gate loop vectorizes without a vector math library
_TANH_CLAMP = 7.99881172180175781
_TA = (4.89352455891786e-03, 6.37261928875436e-04, 1.48572235717979e-05, 5.12229709037114e-08,
       -8.60467152213735e-11, 2.00018790482477e-13, -2.76076847742355e-16)
_TB = (4.89352518554385e-03, 2.26843463243900e-03, 1.18534705686654e-04, 1.19825839466702e-06)


@njit(fastmath=True)
def _tanh_f32(x):
    c = np.float32(_TANH_CLAMP)
    x = min(max(x, -c), c)
    x2 = x * x
    p = np.float32(_TA[6])
    p = x2 * p + np.float32(_TA[5])
    p = x2 * p + np.float32(_TA[4])
    p = x2 * p + np.float32(_TA[3])
    p = x2 * p + np.float32(_TA[2])
    p = x2 * p + np.float32(_TA[1])
    p = x2 * p + np.float32(_TA[0])
    q = np.float32(_TB[3])
    q = x2 * q + np.float32(_TB[2])
    q = x2 * q + np.float32(_TB[1])
    q = x2 * q + np.float32(_TB[0])
    return x * p / q


@njit(fastmath=True)
def _exp_neg(x):
    # exp(x) for x <= 0 in float64: Taylor on x/1024 then ten squarings;
    # relative error < 1e-10 on [-40, 0], inputs below -40 are treated as -40
    y = max(x, -40.0) * (1.0 / 1024.0)
    p = 1.0 + y * (1.0 + y * (0.5 + y * (1.0 / 6 + y * (1.0 / 24 + y * (1.0 / 120 + y * (1.0 / 720))))))
    for _ in range(10):
        p = p * p
    return p


@njit(fastmath=True)
def _gru_nb(gi, gh, h):
    g = h.shape[0]
    half = np.float32(0.5)
    one = np.float32(1.0)
    for j in range(g):
        r = half * _tanh_f32(half * (gi[j] + gh[j])) + half
        z = half * _tanh_f32(half * (gi[g + j] + gh[g + j])) + half
        n = _tanh_f32(gi[2 * g + j] + r * gh[2 * g + j])
        h[j] = (one - z) * n + z * h[j]


@njit
def _relu_nb(a):
    for j in range(a.shape[0]):
        if a[j] < 0:
            a[j] = 0


@njit(fastmath=True)
def _draw_nb(logits, off, inv_temp, u, work):
    m = -np.inf
    for i in range(256):
        v = logits[off + i] * inv_temp
        if v > m:
            m = v
    total = 0.0
    for i in range(256):
        e = _exp_neg(np.float64(logits[off + i]) * inv_temp - m)
        work[i] = e
        total += e
    target = u * total
    cum = 0.0
    last = 0
    for i in range(256):
        cum += work[i]
        if work[i] > 0:
            last = i
        if cum > target:
            return i
    return last


@njit
def _logprob_nb(logits, off, target):
    m = -np.inf
    for i in range(256):
        if logits[off + i] > m:
            m = np.float64(logits[off + i])
    s = 0.0
    for i in range(256):
        s += np.exp(np.float64(logits[off + i]) - m)
    return np.float64(logits[off + target]) - m - np.log(s)


# --------------------------------------------------------------------------
# generation loop, shared by both backends
# --------------------------------------------------------------------------


def _generate_loop(coarse, fine, mv, gru, relu, draw, logprob,
                   num_bands, cond, uniforms, forced, inv_temp, samples, counts):
    """Run the two-path recurrence for ``samples.shape[0]`` steps.

    ``coarse``/``fine`` are ``(w_in, b_in, w_h, b_h, w_a, b_a, w_o, b_o)`` with
    weights in the backend's layer layout. ``samples[t, b]`` receives the
    (coarse, fine) categories. When ``forced`` is non-empty it supplies the
    categories instead of sampling and the summed log-likelihood is returned.
    ``counts[0]`` accumulates input-projection multiplies, ``counts[1]`` all
    other matvec multiplies.
    """
    cw_in, cb_in, cw_h, cb_h, cw_a, cb_a, cw_o, cb_o = coarse
    fw_in, fb_in, fw_h, fb_h, fw_a, fb_a, fw_o, fb_o = fine
    steps = samples.shape[0]
    nb = num_bands
    g = cb_h.shape[0] // 3
    f = cb_a.shape[0]
    nc = cond.shape[1]
    nin = 2 * nb + nc
    hc = np.zeros(g, np.float32)
    hf = np.zeros(g, np.float32)
    xc = np.zeros(nin, np.float32)
    xf = np.zeros(nin + nb, np.float32)
    gi = np.empty(3 * g, np.float32)
    gh = np.empty(3 * g, np.float32)
    a = np.empty(f, np.float32)
    logits = np.empty(256 * nb, np.float32)
    work = np.empty(256, np.float64)
    prev_c = np.full(nb, 128, np.int64)
    prev_f = np.full(nb, 128, np.int64)
    forcing = forced.shape[0] > 0
    total = 0.0
    for t in range(steps):
        for b in range(nb):
            xc[b] = prev_c[b] / 127.5 - 1.0
            xc[nb + b] = prev_f[b] / 127.5 - 1.0
        for j in range(nc):
            xc[2 * nb + j] = cond[t, j]

        # coarse path
        mv(cw_in, xc, gi)
        gi += cb_in
        mv(cw_h, hc, gh)
        gh += cb_h
        gru(gi, gh, hc)
        mv(cw_a, hc, a)
        a += cb_a
        relu(a)
        mv(cw_o, a, logits)
        logits += cb_o
        counts[0] += 3 * g * nin
        counts[1] += 3 * g * g + f * g + 256 * nb * f
        for b in range(nb):
            if forcing:
                c = forced[t, b, 0]
                total += logprob(logits, 256 * b, c)
            else:
                c = draw(logits, 256 * b, inv_temp, uniforms[t, b, 0], work)
            samples[t, b, 0] = c
            prev_c[b] = c

        # fine path sees this step's coarse samples of every band
        for j in range(nin):
            xf[j] = xc[j]
        for b in range(nb):
            xf[nin + b] = prev_c[b] / 127.5 - 1.0
        mv(fw_in, xf, gi)
        gi += fb_in
        mv(fw_h, hf, gh)
        gh += fb_h
        gru(gi, gh, hf)
        mv(fw_a, hf, a)
        a += fb_a
        relu(a)
        mv(fw_o, a, logits)
        logits += fb_o
        counts[0] += 3 * g * (nin + nb)
        counts[1] += 3 * g * g + f * g + 256 * nb * f
        for b in range(nb):
            if forcing:
                c = forced[t, b, 1]
                total += logprob(logits, 256 * b, c)
            else:
                c = draw(logits, 256 * b, inv_temp, uniforms[t, b, 1], work)
            samples[t, b, 1] = c
            prev_f[b] = c
    return total


_generate_loop_nb = njit(_generate_loop) if _accel.NUMBA_AVAILABLE else None


def get_ops(backend=None, int8_kernel=None):
    """Return the kernel set for ``backend`` ('numba' or 'numpy').

    ``int8_kernel`` picks the numba int8 matvec: 'vnni', 'portable' or ``None``
    for the best one the host supports.
    """
    backend = _accel.resolve_backend(backend)
    if backend == "numpy":
        return SimpleNamespace(
            backend="numpy", int8_kernel="numpy", loop=_generate_loop,
            mv_f32=_mv_f32_np, mv_q8=_mv_q8_np, gru=_gru_np, relu=_relu_np,
            draw=_draw_np, logprob=_logprob_np,
        )
    if int8_kernel is None:
        int8_kernel = "vnni" if _accel.HAS_VNNI else "portable"
    if int8_kernel == "vnni" and not _accel.HAS_VNNI:
        from .errors import ValidationError

        raise ValidationError("host CPU lacks AVX512-VNNI")
    mv_q8 = _mv_q8_vnni_nb if int8_kernel == "vnni" else _mv_q8_portable_nb
    return SimpleNamespace(
        backend="numba", int8_kernel=int8_kernel, loop=_generate_loop_nb,
        mv_f32=_mv_f32_nb, mv_q8=mv_q8, gru=_gru_nb, relu=_relu_nb,
        draw=_draw_nb, logprob=_logprob_nb,
    )


def _ceil_to(n, m):
    return -(-n // m) * m


def float_layer(w, backend):
    """Pack a float32 ``rows x cols`` matrix for ``backend``."""
    w = np.ascontiguousarray(w, dtype=np.float32)
    if backend == "numpy":
        return (w,)
    rows, cols = w.shape
    padded = np.zeros((_ceil_to(rows, PANEL), cols), np.float32)
    padded[:rows] = w
    panels = np.ascontiguousarray(padded.reshape(-1, PANEL, cols).transpose(0, 2, 1))
    return (panels, np.zeros(padded.shape[0], np.float32))


def int8_layer(data, scales, backend, int8_kernel="vnni"):
    """Pack an int8 payload (rows x cols) and its row scales for ``backend``."""
    data = np.asarray(data, dtype=np.int8)
    scales = np.ascontiguousarray(scales, dtype=np.float32)
    rows, cols = data.shape
    if backend == "numpy":
        return (np.ascontiguousarray(data, dtype=np.int32), scales)
    rowsum = data.astype(np.int32).sum(axis=1).astype(np.int32)
    if int8_kernel == "vnni":
        width = _ceil_to(max(cols, 1), 4)
        padded = np.zeros((_ceil_to(rows, PANEL), width), np.int8)
        padded[:rows, :cols] = data
        q = np.ascontiguousarray(padded.reshape(-1, PANEL, width // 4, 4).transpose(0, 2, 1, 3))
        acc = np.zeros(padded.shape[0], np.int32)
    else:
        width = _ceil_to(max(cols, 1), 64)
        q = np.zeros((rows, width), np.int8)
        q[:, :cols] = data
        acc = np.zeros(1, np.int32)
    xq = np.zeros(width, np.int8)
    u = np.full(width, 128, np.uint8)
    return (q, rowsum, scales, xq, u, acc)
