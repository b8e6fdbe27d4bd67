"""``mbvoc`` command line. Reports go to stdout as JSON, diagnostics to stderr.

Exit codes: 0 success, 2 validation error, 3 I/O or file-format error,
4 benchmark-contract violation.
"""
import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import durian, multirate, params_io, qmf, wavio
from .bench import run_bench
from .errors import BenchContractError, DesignError, ParamsFormatError, ValidationError, WavFormatError
from .wavernn import MbWaveRnnConfig, MbWaveRnnParams, PreparedModel, flops_per_second, quantize_params

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_BENCH = 0, 2, 3, 4
SEED_ENV = "MBVOC_SEED"


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, default=_jsonable)
    sys.stdout.write("\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _seed(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        raise ValidationError(f"this command needs --seed (or {SEED_ENV})")
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"{SEED_ENV}={env!r} is not an integer") from None


# --------------------------------------------------------------------------
# filter bank files
# --------------------------------------------------------------------------


def _band_file(prefix, kind, k):
    return Path(f"{prefix}_{kind}{k}.txt")


def _write_design(bank: qmf.FilterBank, out_dir: Path, num_points: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    proto = bank.prototype
    files = [out_dir / "prototype.txt"]
    qmf.save_taps(files[0], proto.taps)
    for kind, taps in (("analysis", bank.analysis), ("synthesis", bank.synthesis)):
        for k, h in enumerate(taps):
            path = _band_file(out_dir / "filter", kind, k)
            qmf.save_taps(path, h)
            files.append(path)
    response = out_dir / "response.csv"
    qmf.save_response_csv(response, qmf.frequency_response(proto.taps, num_points))
    meta = out_dir / "bank.json"
    meta.write_text(json.dumps({
        "num_bands": proto.num_bands, "order": proto.order, "beta": proto.beta,
        "cutoff": proto.cutoff, "residual": proto.residual, "prototype": "prototype.txt",
    }, indent=2) + "\n")
    return files, response, meta


def _load_bank(path) -> qmf.FilterBank:
    path = Path(path)
    meta = json.loads(path.read_text())
    try:
        taps = qmf.load_taps(path.parent / meta["prototype"])
        proto = qmf.PrototypeFilter(taps, int(meta["num_bands"]), int(meta["order"]),
                                    float(meta.get("cutoff", "nan")), float(meta.get("beta", "nan")),
                                    float(meta.get("residual", "nan")))
    except KeyError as exc:
        raise ValidationError(f"{path}: missing key {exc}") from None
    return qmf.modulate(proto)


def _bank(args) -> qmf.FilterBank:
    if args.bank:
        return _load_bank(args.bank)
    return qmf.design_bank(args.bands, args.order, args.beta)


def _mono(wav: wavio.WavData, path):
    if wav.channels != 1:
        raise ValidationError(f"{path}: expected mono audio, found {wav.channels} channels")
    return multirate.AudioSignal(wav.samples, wav.sample_rate)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_design(args):
    proto = qmf.design_prototype(args.bands, args.order, args.beta)
    bank = qmf.modulate(proto)
    files, response, meta = _write_design(bank, Path(args.out), args.points)
    _emit({
        "num_bands": proto.num_bands, "order": proto.order, "beta": proto.beta, "cutoff": proto.cutoff,
        "prototype_stopband_db": qmf.prototype_stopband(proto, args.points),
        "analysis_stopband_db": qmf.analysis_stopband(bank, 0, args.points),
        "power_complementarity_residual": proto.residual,
        "bank_power_deviation": qmf.bank_power_deviation(bank),
        "coefficient_files": [str(f) for f in files], "response_csv": str(response), "bank": str(meta),
    })


def cmd_split(args):
    bank = _bank(args)
    sig = _mono(wavio.read(args.input), args.input)
    n = bank.num_bands
    if sig.sample_rate % n:
        raise ValidationError(f"sample rate {sig.sample_rate} is not divisible by {n} bands")
    sub = multirate.analyze(sig, bank)
    rate = sig.sample_rate // n
    if args.multichannel:
        outputs = [Path(f"{args.out_prefix}.wav")]
        wavio.write(outputs[0], sub.bands.T, rate, "float32")
    else:
        outputs = [Path(f"{args.out_prefix}_band{k}.wav") for k in range(n)]
        for path, band in zip(outputs, sub.bands):
            wavio.write(path, band, rate, "float32")
    merged = multirate.compensate_delay(multirate.synthesize(sub, bank), bank, len(sig))
    _emit({
        "num_bands": n, "band_sample_rate": rate, "band_length": sub.length,
        "outputs": [str(p) for p in outputs],
        "roundtrip_snr_db": multirate.snr_db(sig.samples[bank.length:-bank.length],
                                             merged.samples[bank.length:-bank.length])
        if len(sig) > 2 * bank.length else None,
    })


def _read_subbands(args, n) -> multirate.SubbandSignals:
    if args.multichannel:
        wav = wavio.read(f"{args.in_prefix}.wav")
        if wav.channels != n:
            raise ValidationError(f"{args.in_prefix}.wav has {wav.channels} channels, expected {n}")
        return multirate.SubbandSignals(wav.samples.T, n, wav.sample_rate * n)
    paths = [Path(f"{args.in_prefix}_band{k}.wav") for k in range(n)]
    for k, p in enumerate(paths):
        if not p.exists():
            raise FileNotFoundError(f"missing band {k}: {p}")
    waves = [wavio.read(p) for p in paths]
    rates = {w.sample_rate for w in waves}
    lengths = {w.samples.shape[0] for w in waves}
    if len(rates) != 1 or len(lengths) != 1 or any(w.channels != 1 for w in waves):
        raise ValidationError("band files must be mono with equal rates and lengths")
    return multirate.SubbandSignals(np.stack([w.samples for w in waves]), n, rates.pop() * n)


def cmd_merge(args):
    bank = _bank(args)
    sub = _read_subbands(args, bank.num_bands)
    out = multirate.synthesize(sub, bank)
    length = args.length if args.length is not None else sub.length * bank.num_bands - bank.delay
    if length <= 0:
        raise ValidationError("subbands are too short to hold any delay-compensated output")
    audio = multirate.compensate_delay(out, bank, length)
    wavio.write(args.output, audio.samples, audio.sample_rate, args.format)
    _emit({"output": args.output, "sample_rate": audio.sample_rate, "length": len(audio)})


def _test_signal(kind, length, rate, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    if kind == "white":
        return 0.3 * rng.standard_normal(length)
    if kind == "sine":
        return 0.5 * np.sin(2 * np.pi * 1000.0 * t / rate)
    spectrum = np.fft.rfft(rng.standard_normal(length))
    f = np.arange(spectrum.size)
    f[0] = 1
    x = np.fft.irfft(spectrum / np.sqrt(f), length)
    return 0.5 * x / np.abs(x).max()


def cmd_roundtrip(args):
    bank = _bank(args)
    if args.input:
        sig = _mono(wavio.read(args.input), args.input)
        source = args.input
    else:
        seed = _seed(args) if args.signal != "sine" else 0
        sig = multirate.AudioSignal(_test_signal(args.signal, args.length, args.rate, seed), args.rate)
        source = args.signal
    y = multirate.synthesize(multirate.analyze(sig, bank), bank)
    _emit({
        "source": source, "num_bands": bank.num_bands,
        "snr_db": multirate.roundtrip_snr(sig, bank),
        "expected_delay": bank.delay,
        "measured_delay": multirate.estimate_delay(sig.samples, y.samples),
    })


def cmd_flops(args):
    _emit({"gru_size": args.gru, "affine_size": args.affine, "num_bands": args.bands,
           "sample_rate": args.rate, "flops_per_second": flops_per_second(args.gru, args.affine, args.bands, args.rate)})


def _config(args):
    return MbWaveRnnConfig(args.gru, args.affine, args.bands, args.rate, args.cond)


def cmd_init(args):
    params = params_io.write_random(args.output, _config(args), _seed(args))
    _emit({"output": args.output, "config": params.config})


def cmd_quantize(args):
    params = params_io.load(args.input)
    q = quantize_params(params)
    params_io.save(args.output, q)
    _emit({"input": args.input, "output": args.output, "config": q.config,
           "bytes_in": Path(args.input).stat().st_size, "bytes_out": Path(args.output).stat().st_size})


def cmd_bench(args):
    if args.params:
        params = params_io.load(args.params)
    else:
        if args.random_seed is None:
            raise ValidationError("bench needs --params or --random-seed")
        params = MbWaveRnnParams.random(_config(args), args.random_seed)
    steps = args.steps if args.steps is not None else params.config.band_rate
    seed = args.random_seed if args.random_seed is not None else _seed(args)
    report = run_bench(params, steps, args.arithmetic, seed=seed,
                       threads=args.threads, backend=args.backend, repeats=args.repeats)
    _emit(report.to_json())


def cmd_gen(args):
    params = params_io.load(args.params)
    cfg = params.config
    bank = _load_bank(args.bank) if args.bank else qmf.design_bank(cfg.num_bands, args.order, args.beta)
    if bank.num_bands != cfg.num_bands:
        raise ValidationError(f"filter bank has {bank.num_bands} bands, model has {cfg.num_bands}")
    model = PreparedModel(params, args.arithmetic, args.backend)
    sub = model.generate(args.steps, rng=_seed(args), temperature=args.temperature)
    band_files = []
    if args.band_prefix:
        for k, band in enumerate(sub.bands):
            path = Path(f"{args.band_prefix}_band{k}.wav")
            wavio.write(path, band, cfg.band_rate, "float32")
            band_files.append(str(path))
    audio = multirate.compensate_delay(multirate.synthesize(sub, bank), bank)
    wavio.write(args.output, np.clip(audio.samples, -1.0, 1.0), cfg.sample_rate, args.format)
    _emit({"output": args.output, "band_files": band_files, "steps": args.steps,
           "sample_rate": cfg.sample_rate, "length": len(audio)})


def cmd_expand(args):
    seq = durian.read_symbols(args.symbols)
    durations = durian.read_durations(args.durations)
    # each symbol's state is its index in the sequence, so skipped boundaries stay visible
    states = np.arange(len(seq), dtype=np.float64)[:, None]
    kept = durian.skip_filter(states, seq)
    if kept.shape[0] == 0:
        raise ValidationError("sequence has no phonemes to expand")
    expanded = durian.state_expand(kept, durations)
    sys.stdout.write(durian.expanded_csv(expanded))


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _bank_args(p):
    p.add_argument("--bank", help="bank.json written by 'design' (default: design on the fly)")
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--order", type=int, default=qmf.DEFAULT_ORDER)
    p.add_argument("--beta", type=float, default=qmf.DEFAULT_BETA, help="Kaiser window shape")


def _model_args(p):
    p.add_argument("--gru", type=int, default=192)
    p.add_argument("--affine", type=int, default=192)
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--cond", type=int, default=0, help="conditioning width")


def build_parser():
    parser = argparse.ArgumentParser(prog="mbvoc", description="Multi-band WaveRNN vocoder toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="design a pseudo-QMF bank and write its coefficients")
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--order", type=int, default=qmf.DEFAULT_ORDER)
    p.add_argument("--beta", type=float, default=qmf.DEFAULT_BETA)
    p.add_argument("--points", type=int, default=qmf.DEFAULT_GRID)
    p.add_argument("--out", default="bank")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("split", help="analyze a WAV file into subband WAVs")
    p.add_argument("input")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--multichannel", action="store_true", help="one N-channel file instead of N mono files")
    _bank_args(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("merge", help="synthesize subband WAVs back to fullband")
    p.add_argument("--in-prefix", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--multichannel", action="store_true")
    p.add_argument("--length", type=int)
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    _bank_args(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("roundtrip", help="analysis/synthesis SNR and delay")
    p.add_argument("input", nargs="?")
    p.add_argument("--signal", choices=("white", "sine", "pink"), default="white")
    p.add_argument("--length", type=int, default=16384)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--seed", type=int)
    _bank_args(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("flops", help="multiplies per second of generated audio")
    p.add_argument("--gru", type=int, default=192)
    p.add_argument("--affine", type=int, default=192)
    p.add_argument("--bands", type=int, default=1)
    p.add_argument("--rate", type=int, default=16000)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("init", help="write seeded random parameters")
    _model_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("quantize", help="int8-quantize a parameter file")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("bench", help="single-core real-time-factor benchmark")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--params")
    src.add_argument("--random-seed", type=int)
    _model_args(p)
    p.add_argument("--steps", type=int, help="subband steps (default: one second of audio)")
    p.add_argument("--arithmetic", choices=("float", "int8"), default="float")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--backend", choices=("numba", "numpy"))
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, help="sampling seed when --params is used")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="generate audio from a parameter file")
    p.add_argument("--params", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--arithmetic", choices=("float", "int8"))
    p.add_argument("--backend", choices=("numba", "numpy"))
    p.add_argument("--output", required=True)
    p.add_argument("--band-prefix")
    p.add_argument("--format", choices=("pcm16", "float32"), default="pcm16")
    p.add_argument("--bank")
    p.add_argument("--order", type=int, default=qmf.DEFAULT_ORDER)
    p.add_argument("--beta", type=float, default=qmf.DEFAULT_BETA)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("expand", help="skip-filter and duration-expand a symbol file to CSV")
    p.add_argument("symbols")
    p.add_argument("durations")
    p.set_defaults(func=cmd_expand)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except BenchContractError as exc:
        print(f"mbvoc: benchmark contract: {exc}", file=sys.stderr)
        return EXIT_BENCH
    except (WavFormatError, ParamsFormatError, OSError, json.JSONDecodeError) as exc:
        print(f"mbvoc: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, DesignError) as exc:
        print(f"mbvoc: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
