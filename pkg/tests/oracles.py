"""Independent straight-line reference implementations used as test oracles.

Nothing here imports the package under test; everything is scalar loops over
plain Python floats so that it shares no code path with the vectorised
implementation.
"""
import math


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def matvec(w, x):
    out = []
    for row in w:
        s = 0.0
        for wij, xj in zip(row, x):
            s += wij * xj
        out.append(s)
    return out


def gru_path(w_in, b_in, w_h, b_h, w_a, b_a, w_o, b_o, x, h):
    """One GRU path step with (r, z, n) gate order; returns (logits per band, new h)."""
    g = len(h)
    gi = [a + b for a, b in zip(matvec(w_in, x), b_in)]
    gh = [a + b for a, b in zip(matvec(w_h, h), b_h)]
    h_new = []
    for i in range(g):
        r = sigmoid(gi[i] + gh[i])
        z = sigmoid(gi[g + i] + gh[g + i])
        n = math.tanh(gi[2 * g + i] + r * gh[2 * g + i])
        h_new.append((1.0 - z) * n + z * h[i])
    a = [max(0.0, v + b) for v, b in zip(matvec(w_a, h_new), b_a)]
    logits = []
    for head, bias in zip(w_o, b_o):
        logits.append([v + b for v, b in zip(matvec(head, a), bias)])
    return logits, h_new


def centre(c):
    return c / 127.5 - 1.0


def mbwavernn_step(p, hc, hf, prev_coarse, prev_fine, current_coarse, cond):
    """Both paths of one step. ``p`` maps ``"coarse.w_input"``-style names to nested lists."""
    x = [centre(c) for c in prev_coarse] + [centre(c) for c in prev_fine] + list(cond)
    args = [p[f"coarse.{k}"] for k in ("w_input", "b_input", "w_hidden", "b_hidden",
                                       "w_affine", "b_affine", "w_out", "b_out")]
    cl, hc2 = gru_path(*args, x, hc)
    xf = x + [centre(c) for c in current_coarse]
    args = [p[f"fine.{k}"] for k in ("w_input", "b_input", "w_hidden", "b_hidden",
                                     "w_affine", "b_affine", "w_out", "b_out")]
    fl, hf2 = gru_path(*args, xf, hf)
    return cl, fl, hc2, hf2


def l1_loss(y, y_pre, residual):
    total = 0.0
    for i in range(len(y)):
        for j in range(len(y[i])):
            total += abs(y[i][j] - y_pre[i][j])
            total += abs(y[i][j] - (y_pre[i][j] + residual[i][j]))
    return total


def convolve(x, h):
    out = [0.0] * (len(x) + len(h) - 1)
    for i, xi in enumerate(x):
        for j, hj in enumerate(h):
            out[i + j] += xi * hj
    return out


def dtft_mag(taps, f):
    re = im = 0.0
    for n, t in enumerate(taps):
        re += t * math.cos(2 * math.pi * f * n)
        im -= t * math.sin(2 * math.pi * f * n)
    return math.hypot(re, im)


def run_length(values):
    runs = []
    for v in values:
        if runs and runs[-1][0] == v:
            runs[-1][1] += 1
        else:
            runs.append([v, 1])
    return runs
