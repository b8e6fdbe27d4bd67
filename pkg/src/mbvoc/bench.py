"""Single-core real-time-factor benchmark of sample generation."""
import time
from dataclasses import asdict, dataclass

from threadpoolctl import threadpool_limits

from .errors import BenchContractError
from .wavernn import MbWaveRnnConfig, MbWaveRnnParams, PreparedModel

SCHEMA = "mbvoc.bench/1"
WARMUP_STEPS = 64


@dataclass(frozen=True)
class BenchReport:
    config: MbWaveRnnConfig
    arithmetic: str
    backend: str
    steps: int
    wall_seconds: float
    audio_seconds: float
    rtf: float
    samples_per_second: float

    def __post_init__(self):
        if not (self.wall_seconds > 0 and self.audio_seconds > 0):
            raise BenchContractError("wall and audio durations must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["schema"] = SCHEMA
        return d


def run_bench(params: MbWaveRnnParams, steps: int, arithmetic: str = "float", seed: int = 0,
              threads: int = 1, backend=None, repeats: int = 1) -> BenchReport:
    """Time ``steps`` generation steps on one thread; the best of ``repeats`` runs is kept.

    Model preparation (packing, quantization) and a short warm-up run are
    excluded from the timed region. ``audio_seconds`` counts fullband audio:
    ``steps * num_bands / sample_rate``.
    """
    cfg = params.config
    if threads != 1:
        raise BenchContractError(f"the benchmark runs on exactly one thread, not {threads}")
    if steps * cfg.num_bands < cfg.sample_rate:
        raise BenchContractError(
            f"{steps} steps give {steps * cfg.num_bands / cfg.sample_rate:.3f} s of audio; at least 1 s is required")
    if repeats < 1:
        raise BenchContractError("repeats must be >= 1")
    model = PreparedModel(params, arithmetic, backend)
    with threadpool_limits(limits=1):
        model.generate(WARMUP_STEPS, rng=seed)
        wall = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            model.generate(steps, rng=seed)
            wall = min(wall, time.perf_counter() - t0)
    audio = steps * cfg.num_bands / cfg.sample_rate
    return BenchReport(cfg, model.arithmetic, model.backend, steps, wall, audio,
                       wall / audio, steps * cfg.num_bands / wall)
