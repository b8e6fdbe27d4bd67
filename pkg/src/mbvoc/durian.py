"""DurIAN front-end procedures: prosodic symbols, skip filtering, state expansion,
style-code scaling and the dual l1 loss.

Boundary markers are ``#S`` (syllable), ``#1`` (prosodic word), ``#2``
(prosodic phrase) and ``#3`` (intonational phrase). Every other token is a
phoneme.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .errors import ParseError, ValidationError

BOUNDARY_LEVELS = ("S", "1", "2", "3")


@dataclass(frozen=True)
class Phoneme:
    id: str


@dataclass(frozen=True)
class Boundary:
    level: str

    def __post_init__(self):
        if self.level not in BOUNDARY_LEVELS:
            raise ValidationError(f"boundary level must be one of {BOUNDARY_LEVELS}")

    @property
    def token(self) -> str:
        return "#" + self.level


Symbol = Union[Phoneme, Boundary]


@dataclass(frozen=True)
class SymbolSequence:
    symbols: Tuple[Symbol, ...]

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if not symbols:
            raise ValidationError("symbol sequence is empty")
        for i in range(1, len(symbols)):
            a, b = symbols[i - 1], symbols[i]
            if isinstance(a, Boundary) and isinstance(b, Boundary) and a.level == b.level:
                raise ParseError(f"adjacent #{a.level} boundaries", i)
        object.__setattr__(self, "symbols", symbols)

    def __len__(self):
        return len(self.symbols)

    @property
    def num_phonemes(self) -> int:
        return sum(isinstance(s, Phoneme) for s in self.symbols)

    @property
    def phoneme_positions(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.symbols) if isinstance(s, Phoneme)], dtype=np.int64)

    def tokens(self):
        return [s.id if isinstance(s, Phoneme) else s.token for s in self.symbols]


@dataclass(frozen=True)
class StyleCode:
    embedding: np.ndarray
    scale: float
    code: np.ndarray


def parse_symbols(tokens) -> SymbolSequence:
    tokens = list(tokens)
    if not tokens:
        raise ParseError("no tokens", 0)
    out = []
    for i, tok in enumerate(tokens):
        if not isinstance(tok, str) or not tok:
            raise ParseError(f"bad token {tok!r}", i)
        if tok.startswith("#"):
            if tok[1:] not in BOUNDARY_LEVELS:
                raise ParseError(f"unknown boundary {tok!r}", i)
            if out and isinstance(out[-1], Boundary) and out[-1].level == tok[1:]:
                raise ParseError(f"adjacent {tok} boundaries", i)
            out.append(Boundary(tok[1:]))
        else:
            out.append(Phoneme(tok))
    return SymbolSequence(tuple(out))


def _states(states, name="states"):
    a = np.asarray(states, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D (count, dim) array")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contain non-finite values")
    return a


def skip_filter(states, seq: SymbolSequence) -> np.ndarray:
    """Keep only the rows of ``states`` that sit at phoneme positions."""
    a = _states(states)
    if a.shape[0] != len(seq):
        raise ValidationError(f"{a.shape[0]} states for {len(seq)} symbols")
    return a[seq.phoneme_positions]


def _durations(durations):
    d = np.asarray(durations)
    if d.ndim != 1:
        raise ValidationError("durations must be 1-D")
    if d.size and not np.issubdtype(d.dtype, np.integer):
        if not np.all(np.isfinite(d)) or np.any(d != np.round(d)):
            raise ValidationError("durations must be integers")
    d = d.astype(np.int64)
    if np.any(d < 0):
        raise ValidationError(f"negative duration at phoneme {int(np.argmax(d < 0))}")
    return d


def state_expand(states, durations) -> np.ndarray:
    """Repeat phoneme ``i`` for ``d_i`` frames and append position ``j / d_i``, ``j = 1..d_i``.

    Returns a ``(sum(d), dim + 1)`` array.
    """
    a = _states(states)
    d = _durations(durations)
    if a.shape[0] != d.size:
        raise ValidationError(f"{a.shape[0]} states for {d.size} durations")
    total = int(d.sum())
    if total == 0:
        raise ValidationError("durations sum to zero frames")
    rep = np.repeat(a, d, axis=0)
    run_start = np.repeat(np.cumsum(d) - d, d)
    j = np.arange(total) - run_start + 1
    pos = j / np.repeat(d, d)
    return np.column_stack([rep, pos])


def style_code(embedding, scale: float) -> StyleCode:
    e = np.asarray(embedding, dtype=np.float64)
    if e.ndim != 1:
        raise ValidationError("embedding must be a vector")
    if not np.all(np.isfinite(e)) or not np.isfinite(scale):
        raise ValidationError("embedding and scale must be finite")
    if scale < 0:
        raise ValidationError("scale must be >= 0")
    e = e.copy()
    code = scale * e
    e.flags.writeable = False
    code.flags.writeable = False
    return StyleCode(e, float(scale), code)


def durian_loss(y, y_pre, residual) -> float:
    """``sum|y - y_pre| + sum|y - (y_pre + residual)|``: l1 before and after the post-net."""
    y, y_pre, residual = (np.asarray(v, dtype=np.float64) for v in (y, y_pre, residual))
    if not (y.shape == y_pre.shape == residual.shape):
        raise ValidationError(f"shape mismatch: {y.shape}, {y_pre.shape}, {residual.shape}")
    return float(np.abs(y - y_pre).sum() + np.abs(y - (y_pre + residual)).sum())


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------


def read_symbols(path) -> SymbolSequence:
    return parse_symbols(Path(path).read_text(encoding="utf-8").split())


def read_durations(path) -> np.ndarray:
    values = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        for tok in line.split():
            try:
                values.append(int(tok))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: not an integer: {tok!r}") from None
    return _durations(np.array(values, dtype=np.int64))


def expanded_csv(expanded) -> str:
    a = np.asarray(expanded, dtype=np.float64)
    header = [f"h{i}" for i in range(a.shape[1] - 1)] + ["position"]
    rows = [",".join(header)] + [",".join(repr(float(v)) for v in row) for row in a]
    return "\n".join(rows) + "\n"
