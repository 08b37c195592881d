"""Command-line driver: ``mcenhance <subcommand> ...``.

Exit codes: 0 success, 1 one or more per-file failures, 2 invalid config or usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import pipeline as pl
from .beamform import (
    apply_beamformer,
    ban_postfilter,
    gev_weights,
    mvdr_weights,
    pmwf_weights,
    select_reference,
    steering_vector,
)
from .cgmm import CgmmError, cgmm_fit
from .io import (
    FormatError,
    MaskRangeError,
    Waveform,
    read_manifest,
    read_mask,
    read_wav,
    write_manifest,
    write_mask,
    write_wav,
)
from .masks import estimate_covariances, oracle_mask
from .omlsa import OmlsaConfig, omlsa_denoise
from .simulate import MixSpec, derive_seed, energy_vad, mix, snr_db
from .stft import StftConfig, istft, stft
from .wpe import WpeConfig, WpeError, wpe_dereverb

EXIT_OK, EXIT_FAILURES, EXIT_USAGE = 0, 1, 2
FILE_ERRORS = (OSError, FormatError, MaskRangeError, ValueError, CgmmError, WpeError)


class UsageError(Exception):
    pass


def _load_raw_config(path):
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a mapping")
    return raw


def _stft_config(args, sample_rate):
    block = _load_raw_config(args.config).get("stft") or {}
    try:
        return StftConfig(sample_rate=sample_rate, **block)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid stft block: {exc}") from None


def _block(args, name, cls):
    """Config block ``name`` overlaid with any explicitly given CLI options."""
    params = dict(_load_raw_config(args.config).get(name) or {})
    for f in cls.__dataclass_fields__:
        v = getattr(args, f, None)
        if v is not None:
            params[f] = v
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {name} parameters: {exc}") from None


def _print_errors(errors):
    if not errors:
        return
    width = max(len(name) for name, _ in errors)
    print(f"{'file':<{width}}  error", file=sys.stderr)
    for name, msg in errors:
        print(f"{name:<{width}}  {msg}", file=sys.stderr)


def _speech_noise_masks(args, spec):
    shape = (spec.num_frames, spec.num_bins)
    speech = read_mask(args.speech_mask, strict=True).astype(np.float64)
    noise = None if args.noise_mask is None else read_mask(args.noise_mask, strict=True).astype(np.float64)
    for m in (speech, noise):
        if m is not None and m.shape != shape:
            raise ValueError(f"mask shape {m.shape} does not match spectrogram {shape}")
    return speech, noise


# subcommands ---------------------------------------------------------------

def cmd_wpe(args):
    wave = read_wav(args.input)
    spec = stft(wave, _stft_config(args, wave.sample_rate))
    out = wpe_dereverb(spec, _block(args, "wpe", WpeConfig))
    write_wav(args.output, istft(out))
    return EXIT_OK


def cmd_cgmm(args):
    wave = read_wav(args.input)
    spec = stft(wave, _stft_config(args, wave.sample_rate))
    res = cgmm_fit(spec, args.iterations, seed=args.seed)
    write_mask(args.speech_mask, res.speech_mask.data)
    if args.noise_mask:
        write_mask(args.noise_mask, res.noise_mask.data)
    print(json.dumps({"log_likelihood": res.log_likelihood_trace}))
    return EXIT_OK


def cmd_mask(args):
    target = read_wav(args.target)
    mixture = read_wav(args.mixture)
    cfg = _stft_config(args, mixture.sample_rate)
    m = oracle_mask(args.kind, stft(target, cfg), stft(mixture, cfg), args.channel)
    write_mask(args.output, m.data)
    return EXIT_OK


def cmd_beamform(args):
    wave = read_wav(args.input)
    spec = stft(wave, _stft_config(args, wave.sample_rate))
    speech, noise = _speech_noise_masks(args, spec)
    cov = estimate_covariances(spec, speech, noise)
    if args.ref == "auto":
        ref = select_reference(cov)
    elif args.ref.isdigit():
        ref = int(args.ref)
    else:
        raise UsageError(f"--ref must be 'auto' or a channel index, got {args.ref!r}")
    if not 0 <= ref < spec.num_channels:
        raise UsageError(f"--ref {ref} out of range for {spec.num_channels} channels")
    if args.kind == "mvdr":
        w = mvdr_weights(cov, steering_vector(cov, ref), reference=ref)
    elif args.kind == "pmwf":
        w = pmwf_weights(cov, args.beta, ref)
    else:
        w = gev_weights(cov, ref)
        if args.ban:
            w = ban_postfilter(w, cov)
    write_wav(args.output, istft(apply_beamformer(w, spec)))
    print(json.dumps({"reference": ref, "flagged_bins": cov.flagged_bins}))
    return EXIT_OK


def cmd_omlsa(args):
    wave = read_wav(args.input)
    if args.channel >= wave.num_channels:
        raise UsageError(f"--channel {args.channel} out of range")
    mono = wave.channel(args.channel)
    spec = stft(mono, _stft_config(args, wave.sample_rate))
    if args.gain_floor_db is not None:
        args.gain_floor = 10 ** (args.gain_floor_db / 20)
    write_wav(args.output, istft(omlsa_denoise(spec, _block(args, "omlsa", OmlsaConfig))))
    return EXIT_OK


def _list_wavs(d):
    files = sorted(Path(d).glob("*.wav"))
    if not files:
        raise UsageError(f"no .wav files in {d}")
    return files


def _active_noise(wave, min_segment_s):
    segs = energy_vad(wave, min_segment_s=min_segment_s)
    if not segs:
        return None
    return Waveform(np.concatenate([wave.samples[:, s.start:s.end] for s in segs], axis=1), wave.sample_rate)


def cmd_simulate(args):
    block = _load_raw_config(args.config).get("simulate") or {}
    sdr = tuple(args.sdr_range or block.get("sdr_range", (0.0, 10.0)))
    snr = tuple(args.snr_range or block.get("snr_range", (-5.0, 10.0)))
    n_int = args.n_interferers or block.get("n_interferers", "random")
    min_seg = args.min_segment if args.min_segment is not None else block.get("min_segment_s", 2.0)
    try:
        MixSpec(sdr, snr)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if n_int not in ("random", 1, 2, "1", "2"):
        raise UsageError(f"n_interferers must be 1, 2 or random, got {n_int!r}")
    errors = []

    def load(paths, keep):
        out = []
        for p in paths:
            try:
                w = keep(read_wav(p))
                if w is not None:
                    out.append((p, w))
            except FILE_ERRORS as exc:
                errors.append((str(p), str(exc)))
        return out

    targets = load(_list_wavs(args.targets), lambda w: w if w.duration >= min_seg else None)
    interferers = load(_list_wavs(args.interferers), lambda w: w)
    noises = load(_list_wavs(args.noises), lambda w: _active_noise(w, min_seg))
    if not targets or not interferers or not noises:
        _print_errors(errors)
        print("not enough usable targets, interferers and noise files", file=sys.stderr)
        return EXIT_FAILURES
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(args.num):
        seed = derive_seed(args.seed, i)
        rng = np.random.default_rng(seed)
        tp, target = targets[rng.integers(len(targets))]
        k = int(rng.integers(1, 3)) if n_int == "random" else int(n_int)
        picks = rng.choice(len(interferers), size=k, replace=len(interferers) < k)
        npath, noise = noises[rng.integers(len(noises))]
        rid = f"mix{i:05d}"
        try:
            rec = mix(target, [interferers[j][1] for j in picks], noise, MixSpec(sdr, snr, k, seed))
        except ValueError as exc:
            errors.append((rid, str(exc)))
            continue
        paths = {}
        for name, wave in (("mixture", rec.mixture), ("target", rec.target),
                           ("interference", rec.interference_sum), ("noise", rec.noise)):
            paths[name] = str(out_dir / f"{rid}.{name}.wav")
            write_wav(paths[name], wave)
        records.append({
            "id": rid, **paths, "seed": seed,
            "applied_sdr": rec.applied_sdr, "applied_snr": rec.applied_snr,
            "target_source": str(tp), "interferer_sources": [str(interferers[j][0]) for j in picks],
            "noise_source": str(npath), **rec.extra,
        })
    write_manifest(out_dir / "manifest.jsonl", records)
    _print_errors(errors)
    return EXIT_FAILURES if errors else EXIT_OK


def cmd_metrics(args):
    est = read_wav(args.estimate)
    ref = read_wav(args.reference)
    if args.channel >= ref.num_channels:
        raise UsageError(f"--channel {args.channel} out of range")
    e = est.samples[min(args.channel, est.num_channels - 1)]
    r = ref.samples[args.channel]
    n = min(e.size, r.size)
    out = {"snr_db": snr_db(e[:n], r[:n])}
    if args.mixture:
        mx = read_wav(args.mixture).samples[args.channel][:n]
        out["input_snr_db"] = snr_db(mx, r[:n])
        out["improvement_db"] = out["snr_db"] - out["input_snr_db"]
    print(json.dumps(out))
    return EXIT_OK


def _pipeline_inputs(args):
    try:
        config = pl.load_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if args.seed is not None:
        config.seed = args.seed
    manifest = None
    if getattr(args, "manifest", None):
        try:
            manifest = read_manifest(args.manifest)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
    return config, manifest


def cmd_validate(args):
    if not args.config:
        raise UsageError("validate needs --config")
    try:
        config, manifest = _pipeline_inputs(args)
    except pl.ConfigError as exc:
        diags = exc.diagnostics
    else:
        diags = pl.validate_config(config, manifest)
    for d in diags:
        print(d)
    if diags:
        return EXIT_USAGE
    print("config ok")
    return EXIT_OK


def cmd_pipeline(args):
    if not args.config:
        raise UsageError("pipeline needs --config")
    config, manifest = _pipeline_inputs(args)
    diags = pl.validate_config(config, manifest)
    if diags:
        for d in diags:
            print(d, file=sys.stderr)
        return EXIT_USAGE
    reports = pl.run_pipeline(config, manifest, args.out_dir, jobs=args.jobs, strict=args.strict)
    failed = [(r["id"], r["error"]) for r in reports if r["status"] != "ok"]
    ok = len(reports) - len(failed)
    print(f"{ok}/{len(manifest)} utterances processed; report: {Path(args.out_dir) / 'report.jsonl'}")
    _print_errors(failed)
    return EXIT_FAILURES if failed or ok < len(manifest) else EXIT_OK


# parser --------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker processes (default: $MCENHANCE_JOBS or 1)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--strict", action="store_true", help="stop at the first per-file failure")

    p = argparse.ArgumentParser(prog="mcenhance", description="Multichannel speech enhancement front-end")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("wpe", parents=[common], help="WPE dereverberation")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--taps", type=int)
    s.add_argument("--delay", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--regularization", type=float)
    s.set_defaults(func=cmd_wpe)

    s = sub.add_parser("cgmm", parents=[common], help="CGMM mask estimation")
    s.add_argument("input")
    s.add_argument("--speech-mask", required=True)
    s.add_argument("--noise-mask")
    s.add_argument("--iterations", type=int, default=10)
    s.set_defaults(func=cmd_cgmm)

    s = sub.add_parser("mask", parents=[common], help="oracle IRM/PSM from target and mixture")
    s.add_argument("output")
    s.add_argument("--kind", choices=("irm", "psm"), default="irm")
    s.add_argument("--target", required=True)
    s.add_argument("--mixture", required=True)
    s.add_argument("--channel", type=int, default=0)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("beamform", parents=[common], help="mask-driven beamforming")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--speech-mask", required=True)
    s.add_argument("--noise-mask")
    s.add_argument("--kind", choices=("mvdr", "pmwf", "gev"), default="mvdr")
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--ban", action="store_true", help="apply the BAN post-filter (gev only)")
    s.add_argument("--ref", default="auto", help="reference channel index or 'auto'")
    s.set_defaults(func=cmd_beamform)

    s = sub.add_parser("omlsa", parents=[common], help="single-channel OMLSA post-filter")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--channel", type=int, default=0)
    s.add_argument("--gain-floor-db", type=float)
    s.set_defaults(func=cmd_omlsa)

    s = sub.add_parser("simulate", parents=[common], help="build a simulated mixture set")
    s.add_argument("--targets", required=True, help="directory of target .wav files")
    s.add_argument("--interferers", required=True)
    s.add_argument("--noises", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--num", type=int, default=10)
    s.add_argument("--n-interferers", choices=("1", "2", "random"))
    s.add_argument("--sdr-range", type=float, nargs=2)
    s.add_argument("--snr-range", type=float, nargs=2)
    s.add_argument("--min-segment", type=float, help="seconds; shorter targets/noise segments are dropped")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("metrics", parents=[common], help="SNR of an estimate against a reference")
    s.add_argument("--estimate", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--mixture", help="also report input SNR and improvement")
    s.add_argument("--channel", type=int, default=0)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("pipeline", parents=[common], help="run a config-driven chain over a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("validate", parents=[common], help="check a pipeline config")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs is not None and args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.seed is None and args.command in ("cgmm", "simulate"):
        args.seed = 0
    try:
        if args.config and args.command not in ("pipeline", "validate"):
            # fail on a bad config before touching any input file
            _stft_config(args, 16000)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except pl.ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_USAGE
    except FILE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
