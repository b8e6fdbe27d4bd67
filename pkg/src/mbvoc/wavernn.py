"""Shared multi-band WaveRNN: parameters, reference step, fast generation, FLOPs.

The model has two GRU paths. The coarse path sees the previous (coarse, fine)
categories of every band plus an optional conditioning vector; the fine path
additionally sees the coarse categories drawn in the current step. Each path
ends in a ReLU affine layer and one 256-way output head per band.

A 16-bit sample is split into a coarse high byte and a fine low byte of its
offset-binary value and mapped to ``[-1, 1)``.
"""
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from . import kernels
from ._accel import resolve_backend
from .errors import ValidationError
from .multirate import SubbandSignals
from .quant import MAX_ACCUM_COLS, QuantizedTensor, dequantize, quantize

NUM_CLASSES = 256
MIDPOINT = 128
WEIGHT_FIELDS = ("w_input", "w_hidden", "w_affine", "w_out")
BIAS_FIELDS = ("b_input", "b_hidden", "b_affine", "b_out")


def flops_per_second(gru_size: int, affine_size: int, num_bands: int, sample_rate: int):
    """Multiplies per second of generated audio, additions ignored.

    ``2 * (2*G*G*3 + G*F + 256*G*B) * rate / B`` evaluated in exact integer
    arithmetic (a float is returned only when ``B`` does not divide the total).
    """
    g, f, b, sr = int(gru_size), int(affine_size), int(num_bands), int(sample_rate)
    if b <= 0:
        raise ValidationError("num_bands must be positive")
    total = 2 * (2 * g * g * 3 + g * f + NUM_CLASSES * g * b) * sr
    return total // b if total % b == 0 else total / b


@dataclass(frozen=True)
class MbWaveRnnConfig:
    gru_size: int
    affine_size: int
    num_bands: int
    sample_rate: int
    conditioning_dim: int = 0

    def __post_init__(self):
        for name in ("gru_size", "affine_size", "num_bands", "sample_rate"):
            if int(getattr(self, name)) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.conditioning_dim < 0:
            raise ValidationError("conditioning_dim must be >= 0")
        if self.sample_rate % self.num_bands:
            raise ValidationError("sample_rate must be divisible by num_bands")

    @property
    def coarse_input_dim(self) -> int:
        return 2 * self.num_bands + self.conditioning_dim

    @property
    def fine_input_dim(self) -> int:
        return 3 * self.num_bands + self.conditioning_dim

    @property
    def band_rate(self) -> int:
        return self.sample_rate // self.num_bands

    def flops_per_second(self):
        return flops_per_second(self.gru_size, self.affine_size, self.num_bands, self.sample_rate)

    def path_shapes(self, path: str) -> dict:
        g, f, b = self.gru_size, self.affine_size, self.num_bands
        nin = self.coarse_input_dim if path == "coarse" else self.fine_input_dim
        return {
            "w_input": (3 * g, nin),
            "b_input": (3 * g,),
            "w_hidden": (3 * g, g),
            "b_hidden": (3 * g,),
            "w_affine": (f, g),
            "b_affine": (f,),
            "w_out": (b, NUM_CLASSES, f),
            "b_out": (b, NUM_CLASSES),
        }


@dataclass(frozen=True)
class PathParams:
    """One GRU path. Weights are float32 arrays or, once quantized, QuantizedTensors."""

    w_input: object
    b_input: np.ndarray
    w_hidden: object
    b_hidden: np.ndarray
    w_affine: object
    b_affine: np.ndarray
    w_out: object
    b_out: np.ndarray


@dataclass(frozen=True)
class MbWaveRnnParams:
    config: MbWaveRnnConfig
    coarse: PathParams
    fine: PathParams

    def __post_init__(self):
        for path in ("coarse", "fine"):
            shapes = self.config.path_shapes(path)
            pp = getattr(self, path)
            for name, shape in shapes.items():
                value = getattr(pp, name)
                actual = value.dims if isinstance(value, QuantizedTensor) else np.shape(value)
                if tuple(actual) != shape:
                    raise ValidationError(f"{path}.{name}: expected shape {shape}, got {tuple(actual)}")
                if not isinstance(value, QuantizedTensor) and not np.all(np.isfinite(value)):
                    raise ValidationError(f"{path}.{name} contains non-finite values")

    @property
    def is_quantized(self) -> bool:
        return any(isinstance(getattr(self.coarse, n), QuantizedTensor) for n in WEIGHT_FIELDS)

    @classmethod
    def zeros(cls, config: MbWaveRnnConfig) -> "MbWaveRnnParams":
        def path(name):
            return PathParams(**{k: np.zeros(s, np.float32) for k, s in config.path_shapes(name).items()})

        return cls(config, path("coarse"), path("fine"))

    @classmethod
    def random(cls, config: MbWaveRnnConfig, seed: int, gain: float = 1.0) -> "MbWaveRnnParams":
        """Seeded uniform Glorot-style initialisation."""
        rng = np.random.default_rng(seed)

        def path(name):
            arrays = {}
            for k, shape in config.path_shapes(name).items():
                fan_in = shape[-1] if k.startswith("w") else config.gru_size
                bound = gain * np.sqrt(3.0 / fan_in)
                arrays[k] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
            return PathParams(**arrays)

        return cls(config, path("coarse"), path("fine"))

    def tensors(self) -> dict:
        """Flat ``{"coarse.w_input": array-or-QuantizedTensor, ...}`` mapping."""
        out = {}
        for path in ("coarse", "fine"):
            pp = getattr(self, path)
            for f in fields(PathParams):
                out[f"{path}.{f.name}"] = getattr(pp, f.name)
        return out

    @classmethod
    def from_tensors(cls, config: MbWaveRnnConfig, tensors: dict) -> "MbWaveRnnParams":
        paths = {}
        for path in ("coarse", "fine"):
            values = {}
            for f in fields(PathParams):
                key = f"{path}.{f.name}"
                if key not in tensors:
                    raise ValidationError(f"missing tensor {key!r}")
                value = tensors[key]
                if not isinstance(value, QuantizedTensor):
                    value = np.asarray(value, dtype=np.float32)
                values[f.name] = value
            paths[path] = PathParams(**values)
        return cls(config, paths["coarse"], paths["fine"])

    def dequantized(self) -> "MbWaveRnnParams":
        def path(pp):
            return replace(pp, **{
                n: dequantize(getattr(pp, n)).astype(np.float32)
                for n in WEIGHT_FIELDS if isinstance(getattr(pp, n), QuantizedTensor)
            })

        return MbWaveRnnParams(self.config, path(self.coarse), path(self.fine))


def quantize_params(params: MbWaveRnnParams) -> MbWaveRnnParams:
    """int8-quantize every weight matrix (GRU input and recurrent, affine, heads); biases stay float."""
    def path(pp):
        return replace(pp, **{
            n: getattr(pp, n) if isinstance(getattr(pp, n), QuantizedTensor) else quantize(getattr(pp, n))
            for n in WEIGHT_FIELDS
        })

    return MbWaveRnnParams(params.config, path(params.coarse), path(params.fine))


# --------------------------------------------------------------------------
# sample representation
# --------------------------------------------------------------------------


def categories_to_unit(coarse, fine):
    """(high byte, low byte) of offset-binary 16-bit -> float in [-1, 1)."""
    v = np.asarray(coarse, dtype=np.int64) * 256 + np.asarray(fine, dtype=np.int64)
    return v / 32768.0 - 1.0


def unit_to_categories(x):
    """Inverse of :func:`categories_to_unit`, rounding and clipping to 16 bits."""
    v = np.clip(np.rint((np.asarray(x, dtype=np.float64) + 1.0) * 32768.0), 0, 65535).astype(np.int64)
    return v >> 8, v & 0xFF


def _centre(categories):
    return np.asarray(categories, dtype=np.float64) / 127.5 - 1.0


# --------------------------------------------------------------------------
# reference single step (float64, readable)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepOutput:
    coarse_logits: np.ndarray  # (bands, 256)
    fine_logits: np.ndarray  # (bands, 256)
    new_state: tuple  # (coarse hidden, fine hidden)


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def _path_forward(pp: PathParams, x, h):
    g = h.shape[0]
    w_in, w_h = np.asarray(pp.w_input, np.float64), np.asarray(pp.w_hidden, np.float64)
    gi = w_in @ x + pp.b_input
    gh = w_h @ h + pp.b_hidden
    r = _sigmoid(gi[:g] + gh[:g])
    z = _sigmoid(gi[g:2 * g] + gh[g:2 * g])
    n = np.tanh(gi[2 * g:] + r * gh[2 * g:])
    h_new = (1.0 - z) * n + z * h
    a = np.maximum(np.asarray(pp.w_affine, np.float64) @ h_new + pp.b_affine, 0.0)
    logits = np.einsum("bkf,f->bk", np.asarray(pp.w_out, np.float64), a) + pp.b_out
    return logits, h_new


def _check_float(params):
    if params.is_quantized:
        raise ValidationError("step() needs float parameters; call params.dequantized() first")


def _step_inputs(params, state, prev_samples, conditioning):
    cfg = params.config
    prev = np.asarray(prev_samples)
    if prev.size != 2 * cfg.num_bands:
        raise ValidationError(f"expected {2 * cfg.num_bands} previous samples, got {prev.size}")
    prev = prev.reshape(2, cfg.num_bands)
    if np.any(prev < 0) or np.any(prev >= NUM_CLASSES):
        raise ValidationError("previous sample categories must lie in [0, 255]")
    cond = np.zeros(cfg.conditioning_dim) if conditioning is None else np.asarray(conditioning, np.float64)
    if cond.shape != (cfg.conditioning_dim,):
        raise ValidationError(f"conditioning must have shape ({cfg.conditioning_dim},)")
    h = np.asarray(state, dtype=np.float64)
    if h.shape != (cfg.gru_size,):
        raise ValidationError(f"state must have shape ({cfg.gru_size},)")
    return np.concatenate([_centre(prev[0]), _centre(prev[1]), cond]), h


def step_coarse(params, h, prev_samples, conditioning=None):
    """Coarse path only: returns ``(logits (bands, 256), new hidden)``."""
    _check_float(params)
    x, h = _step_inputs(params, h, prev_samples, conditioning)
    return _path_forward(params.coarse, x, h)


def step_fine(params, h, prev_samples, current_coarse, conditioning=None):
    """Fine path only, fed this step's coarse categories for every band."""
    _check_float(params)
    x, h = _step_inputs(params, h, prev_samples, conditioning)
    cur = np.asarray(current_coarse)
    if cur.shape != (params.config.num_bands,):
        raise ValidationError("current_coarse needs one category per band")
    if np.any(cur < 0) or np.any(cur >= NUM_CLASSES):
        raise ValidationError("current coarse categories must lie in [0, 255]")
    return _path_forward(params.fine, np.concatenate([x, _centre(cur)]), h)


def step(params, state, prev_samples, current_coarse, conditioning=None) -> StepOutput:
    """One full step with both paths.

    ``prev_samples`` holds the previous coarse categories of all bands followed by
    the previous fine ones. The fine path needs ``current_coarse``, the coarse
    categories the caller drew from this step's coarse logits.
    """
    if len(state) != 2:
        raise ValidationError("state is a (coarse hidden, fine hidden) pair")
    cl, hc = step_coarse(params, state[0], prev_samples, conditioning)
    fl, hf = step_fine(params, state[1], prev_samples, current_coarse, conditioning)
    return StepOutput(cl, fl, (hc, hf))


def sample_categorical(logits, rng, temperature: float = 1.0) -> int:
    """Draw one category from ``softmax(logits / temperature)`` by inverse CDF."""
    v = np.asarray(logits, dtype=np.float64)
    if v.shape != (NUM_CLASSES,):
        raise ValidationError(f"expected {NUM_CLASSES} logits")
    if not np.all(np.isfinite(v)):
        raise ValidationError("logits contain non-finite values")
    if not temperature > 0:
        raise ValidationError("temperature must be positive")
    return kernels._draw_np(v, 0, 1.0 / temperature, rng.random(), None)


# --------------------------------------------------------------------------
# fast path
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiplyCount:
    """Matvec multiplies observed during one run."""

    config: MbWaveRnnConfig
    steps: int
    input_projection: int
    other: int

    @property
    def total(self) -> int:
        return self.input_projection + self.other

    @property
    def per_step(self) -> float:
        return self.total / self.steps if self.steps else 0.0

    @property
    def formula_equivalent_per_step(self) -> float:
        """Per-step count with each GRU input projection charged at width ``gru_size``.

        This is the convention of :func:`flops_per_second`; recurrent, affine and
        head multiplies are taken from the counter unchanged.
        """
        g = self.config.gru_size
        return (self.other / self.steps if self.steps else 0.0) + 2 * 3 * g * g


def _rng(rng):
    if rng is None:
        raise ValidationError("an explicit seed or numpy Generator is required")
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


class PreparedModel:
    """Parameters packed for one backend and arithmetic, ready for repeated runs.

    ``arithmetic`` is ``'float'`` (float32 kernels) or ``'int8'`` (quantized
    weights and activations). Quantized parameters imply ``'int8'`` unless
    ``'float'`` is requested, in which case they are dequantized.
    """

    def __init__(self, params: MbWaveRnnParams, arithmetic: Optional[str] = None,
                 backend: Optional[str] = None, int8_kernel: Optional[str] = None):
        if arithmetic is None:
            arithmetic = "int8" if params.is_quantized else "float"
        if arithmetic not in ("float", "int8"):
            raise ValidationError(f"arithmetic must be 'float' or 'int8', not {arithmetic!r}")
        backend = resolve_backend(backend)
        if arithmetic == "float" and params.is_quantized:
            params = params.dequantized()
        elif arithmetic == "int8" and not params.is_quantized:
            params = quantize_params(params)
        self.params = params
        self.config = params.config
        self.arithmetic = arithmetic
        self.ops = kernels.get_ops(backend, int8_kernel)
        self.backend = self.ops.backend
        self.mv = self.ops.mv_f32 if arithmetic == "float" else self.ops.mv_q8
        self._coarse = self._pack(params.coarse)
        self._fine = self._pack(params.fine)
        self.last_counts: Optional[MultiplyCount] = None

    def _pack(self, pp: PathParams):
        packed = []
        for wname, bname in zip(WEIGHT_FIELDS, BIAS_FIELDS):
            w = getattr(pp, wname)
            if self.arithmetic == "float":
                layer = kernels.float_layer(np.asarray(w).reshape(-1, np.shape(w)[-1]), self.backend)
            else:
                if w.dims[-1] > MAX_ACCUM_COLS:
                    raise ValidationError("layer too wide for int32 accumulation")
                layer = kernels.int8_layer(w.rows(), w.scales, self.backend, self.ops.int8_kernel)
            packed += [layer, np.ascontiguousarray(np.ravel(getattr(pp, bname)), dtype=np.float32)]
        return tuple(packed)

    def _conditioning(self, conditioning, steps):
        c = self.config.conditioning_dim
        if conditioning is None:
            return np.zeros((steps, c), np.float32)
        cond = np.ascontiguousarray(conditioning, dtype=np.float32)
        if cond.shape != (steps, c):
            raise ValidationError(f"conditioning must have shape ({steps}, {c}), got {cond.shape}")
        if not np.all(np.isfinite(cond)):
            raise ValidationError("conditioning contains non-finite values")
        return cond

    def run(self, steps, conditioning=None, uniforms=None, forced=None, temperature=1.0):
        """Low-level loop call; returns ``(categories[steps, bands, 2], summed log-likelihood)``."""
        b = self.config.num_bands
        cond = self._conditioning(conditioning, steps)
        uniforms = np.zeros((0, b, 2)) if uniforms is None else np.ascontiguousarray(uniforms, np.float64)
        forced = np.zeros((0, b, 2), np.int64) if forced is None else np.ascontiguousarray(forced, np.int64)
        samples = np.zeros((steps, b, 2), np.int64)
        counts = np.zeros(2, np.int64)
        ops = self.ops
        total = ops.loop(self._coarse, self._fine, self.mv, ops.gru, ops.relu, ops.draw, ops.logprob,
                         b, cond, uniforms, forced, 1.0 / temperature, samples, counts)
        self.last_counts = MultiplyCount(self.config, steps, int(counts[0]), int(counts[1]))
        return samples, float(total)

    def generate_categories(self, num_steps, conditioning=None, rng=None, temperature=1.0):
        if num_steps < 0:
            raise ValidationError("num_steps must be >= 0")
        if not temperature > 0:
            raise ValidationError("temperature must be positive")
        uniforms = _rng(rng).random((num_steps, self.config.num_bands, 2))
        samples, _ = self.run(num_steps, conditioning, uniforms=uniforms, temperature=temperature)
        return samples

    def generate(self, num_steps, conditioning=None, rng=None, temperature=1.0) -> SubbandSignals:
        samples = self.generate_categories(num_steps, conditioning, rng, temperature)
        bands = categories_to_unit(samples[:, :, 0], samples[:, :, 1]).T
        return SubbandSignals(bands, self.config.num_bands, self.config.sample_rate)

    def teacher_forced_nll(self, targets: SubbandSignals, conditioning=None) -> float:
        if targets.num_bands != self.config.num_bands:
            raise ValidationError("target band count does not match the model")
        steps = targets.length
        if steps == 0:
            raise ValidationError("targets are empty")
        coarse, fine = unit_to_categories(targets.bands)
        forced = np.stack([coarse.T, fine.T], axis=-1)
        _, total = self.run(steps, conditioning, forced=forced)
        return -total / (steps * self.config.num_bands * 2)


def generate(params, num_steps, conditioning=None, rng=None, temperature=1.0,
             arithmetic=None, backend=None) -> SubbandSignals:
    """Autoregressively sample ``num_steps`` 16-bit samples per band."""
    model = PreparedModel(params, arithmetic, backend)
    return model.generate(num_steps, conditioning, rng, temperature)


def teacher_forced_nll(params, targets: SubbandSignals, conditioning=None,
                       arithmetic=None, backend=None) -> float:
    """Mean negative log-likelihood per softmax over steps, bands and both heads."""
    model = PreparedModel(params, arithmetic, backend)
    return model.teacher_forced_nll(targets, conditioning)
