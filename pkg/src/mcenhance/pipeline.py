"""Config-driven batch chain: STFT -> stages -> ISTFT, with per-utterance reports.

A config is YAML::

    stft: {fft_size: 1024, hop: 256, window: sqrt_hann}
    seed: 0
    stages:
      - wpe: {taps: 10, delay: 3, iterations: 3}
      - mask: {source: cgmm, iterations: 10}
      - beamform: {kind: mvdr, ref: auto}
      - omlsa: {}

Mask sources are ``oracle-irm``, ``oracle-psm`` (need a ``target`` in the
manifest record), ``cgmm``, or ``file:<template>`` where ``{id}`` and
``{stem}`` are substituted per utterance.
"""

from __future__ import annotations

import concurrent.futures
import copy
import datetime
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .beamform import (
    apply_beamformer,
    ban_postfilter,
    gev_weights,
    mvdr_weights,
    pmwf_weights,
    select_reference,
    steering_vector,
)
from .cgmm import cgmm_fit
from .io import read_mask, read_wav, write_wav
from .masks import estimate_covariances, oracle_mask
from .omlsa import OmlsaConfig, omlsa_denoise
from .simulate import snr_db
from .stft import StftConfig, istft, stft
from .wpe import WpeConfig, wpe_dereverb

__all__ = [
    "Stage",
    "PipelineConfig",
    "Diagnostic",
    "ConfigError",
    "load_config",
    "parse_config",
    "dump_config",
    "validate_config",
    "process_utterance",
    "run_pipeline",
]

STAGE_KINDS = ("stft", "wpe", "mask", "beamform", "omlsa", "istft")
BEAMFORMERS = ("mvdr", "pmwf", "gev")
ORACLE_SOURCES = ("oracle-irm", "oracle-psm")
STAGE_KEYS = {
    "stft": {f.name for f in fields(StftConfig)} - {"sample_rate"},
    "wpe": {f.name for f in fields(WpeConfig)},
    "mask": {"source", "iterations", "channel"},
    "beamform": {"kind", "beta", "ban", "ref"},
    "omlsa": {f.name for f in fields(OmlsaConfig)},
    "istft": set(),
}


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    stage: int | None
    field: str | None
    message: str

    def __str__(self):
        where = "config" if self.stage is None else f"stage {self.stage}"
        if self.field:
            where += f" ({self.field})"
        return f"{where}: {self.message}"


@dataclass
class Stage:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class PipelineConfig:
    stft: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "stft": dict(self.stft),
            "seed": self.seed,
            "stages": [{s.kind: dict(s.params)} for s in self.stages],
        }

    def chain_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:10]

    def stft_config(self, sample_rate: int = 16000) -> StftConfig:
        params = dict(self.stft)
        for s in self.stages:
            if s.kind == "stft":
                params.update(s.params)
        return StftConfig(sample_rate=sample_rate, **params)


def parse_config(raw) -> PipelineConfig:
    """Build a config from a mapping; structural errors raise :class:`ConfigError`."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([Diagnostic(None, None, "config must be a mapping")])
    diags = []
    unknown = set(raw) - {"stft", "stages", "seed"}
    for key in sorted(unknown):
        diags.append(Diagnostic(None, key, "unknown top-level key"))
    stft_block = raw.get("stft") or {}
    if not isinstance(stft_block, dict):
        diags.append(Diagnostic(None, "stft", "must be a mapping"))
        stft_block = {}
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        diags.append(Diagnostic(None, "seed", f"must be an integer, got {seed!r}"))
        seed = 0
    stages = []
    raw_stages = raw.get("stages") or []
    if not isinstance(raw_stages, list):
        diags.append(Diagnostic(None, "stages", "must be a list"))
        raw_stages = []
    for i, entry in enumerate(raw_stages):
        if isinstance(entry, str):
            entry = {entry: {}}
        if not isinstance(entry, dict) or len(entry) != 1:
            diags.append(Diagnostic(i, None, "each stage must be a single-key mapping {kind: params}"))
            continue
        (kind, params), = entry.items()
        params = params or {}
        if not isinstance(params, dict):
            diags.append(Diagnostic(i, kind, "stage parameters must be a mapping"))
            params = {}
        stages.append(Stage(str(kind), dict(params)))
    if diags:
        raise ConfigError(diags)
    return PipelineConfig(dict(stft_block), stages, seed)


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([Diagnostic(None, None, f"YAML parse error: {exc}")]) from None
    return parse_config(raw)


def dump_config(config: PipelineConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def _check_params(i, kind, params, diags):
    for key in sorted(set(params) - STAGE_KEYS[kind]):
        diags.append(Diagnostic(i, key, f"unknown parameter for {kind} stage"))
    known = {k: v for k, v in params.items() if k in STAGE_KEYS[kind]}
    try:
        if kind == "stft":
            StftConfig(**known)
        elif kind == "wpe":
            WpeConfig(**known)
        elif kind == "omlsa":
            OmlsaConfig(**known)
    except (TypeError, ValueError) as exc:
        diags.append(Diagnostic(i, None, str(exc)))


def _check_beamform(i, params, diags):
    kind = params.get("kind", "mvdr")
    if kind not in BEAMFORMERS:
        diags.append(Diagnostic(i, "kind", f"must be one of {BEAMFORMERS}, got {kind!r}"))
    if "beta" in params:
        beta = params["beta"]
        if not isinstance(beta, (int, float)) or isinstance(beta, bool):
            diags.append(Diagnostic(i, "beta", f"must be a number, got {beta!r}"))
        elif beta < 0:
            diags.append(Diagnostic(i, "beta", f"must be >= 0, got {beta}"))
        elif kind != "pmwf":
            diags.append(Diagnostic(i, "beta", "only used by the pmwf beamformer"))
    if params.get("ban") and kind != "gev":
        diags.append(Diagnostic(i, "ban", "BAN post-filter applies only to gev"))
    ref = params.get("ref", "auto")
    if ref != "auto" and not (isinstance(ref, int) and not isinstance(ref, bool) and ref >= 0):
        diags.append(Diagnostic(i, "ref", f"must be 'auto' or a channel index >= 0, got {ref!r}"))


def _mask_path(source: str, record: dict) -> Path:
    template = source[len("file:"):]
    rid = str(record.get("id", Path(record.get("mixture", "")).stem))
    stem = Path(record.get("mixture", rid)).stem
    return Path(template.format(id=rid, stem=stem))


def validate_config(config, manifest=None) -> list[Diagnostic]:
    """All problems with ``config`` (and the manifest's files, if given); no side effects."""
    if not isinstance(config, PipelineConfig):
        try:
            config = parse_config(config)
        except ConfigError as exc:
            return exc.diagnostics
    diags = []
    try:
        StftConfig(**config.stft)
    except (TypeError, ValueError) as exc:
        diags.append(Diagnostic(None, "stft", str(exc)))
    n = len(config.stages)
    has_mask = False
    beamformed = False
    for i, st in enumerate(config.stages):
        if st.kind not in STAGE_KINDS:
            diags.append(Diagnostic(i, None, f"unknown stage kind {st.kind!r}; expected one of {STAGE_KINDS}"))
            continue
        _check_params(i, st.kind, st.params, diags)
        if st.kind == "stft" and i != 0:
            diags.append(Diagnostic(i, None, "stft must be the first stage"))
        elif st.kind == "istft" and i != n - 1:
            diags.append(Diagnostic(i, None, "istft must be the last stage"))
        elif st.kind == "mask":
            source = st.params.get("source")
            if source is None:
                diags.append(Diagnostic(i, "source", "mask stage needs a source"))
            elif not isinstance(source, str) or not (
                source in ORACLE_SOURCES or source == "cgmm" or source.startswith("file:")
            ):
                diags.append(Diagnostic(
                    i, "source",
                    f"must be oracle-irm, oracle-psm, cgmm or file:<path>, got {source!r}",
                ))
            else:
                if source == "cgmm" and beamformed:
                    diags.append(Diagnostic(i, "source", "cgmm needs multichannel input but follows a beamform stage"))
                if source.startswith("file:") and manifest is not None:
                    for rec in manifest:
                        p = _mask_path(source, rec)
                        if not p.exists():
                            diags.append(Diagnostic(i, "source", f"mask file {p} does not exist"))
            it = st.params.get("iterations", 10)
            if not isinstance(it, int) or isinstance(it, bool) or it < 1:
                diags.append(Diagnostic(i, "iterations", f"must be an integer >= 1, got {it!r}"))
            ch = st.params.get("channel", 0)
            if not isinstance(ch, int) or isinstance(ch, bool) or ch < 0:
                diags.append(Diagnostic(i, "channel", f"must be a channel index >= 0, got {ch!r}"))
            has_mask = True
        elif st.kind == "beamform":
            if not has_mask:
                diags.append(Diagnostic(i, None, "beamform stage has no preceding mask stage"))
            _check_beamform(i, st.params, diags)
            beamformed = True
            has_mask = False
        elif st.kind == "omlsa" and not beamformed and manifest is not None:
            for rec in manifest:
                try:
                    channels = read_wav(rec["mixture"]).num_channels
                except Exception:  # noqa: BLE001 - unreadable files are reported per utterance
                    continue
                if channels > 1:
                    diags.append(Diagnostic(
                        i, None, f"omlsa needs a single channel but {rec['mixture']} has {channels}; "
                        "add a beamform stage before it"))
                    break
    if manifest is not None:
        needs_target = any(
            s.kind == "mask" and s.params.get("source") in ORACLE_SOURCES for s in config.stages
        )
        for j, rec in enumerate(manifest):
            for key in ("mixture",) + (("target",) if needs_target else ()):
                if key not in rec:
                    diags.append(Diagnostic(None, f"manifest[{j}].{key}", "missing"))
                elif not Path(rec[key]).exists():
                    diags.append(Diagnostic(None, f"manifest[{j}].{key}", f"file {rec[key]} does not exist"))
    return diags


def process_utterance(config: PipelineConfig, record: dict, out_dir=None) -> dict:
    """Run the chain on one manifest record and return its report entry.

    Writes ``<stem>.<chain-hash>.wav`` into ``out_dir`` when given.
    """
    mixture = read_wav(record["mixture"])
    target = read_wav(record["target"]) if record.get("target") else None
    cfg = config.stft_config(mixture.sample_rate)
    spec = stft(mixture, cfg)
    original = spec
    speech = noise = None
    reference = None
    flagged = []
    applied = []
    for st in config.stages:
        p = st.params
        if st.kind in ("stft", "istft"):
            continue
        if st.kind == "wpe":
            wcfg = WpeConfig(**p)
            spec = wpe_dereverb(spec, wcfg)
            applied.append({"wpe": vars(wcfg)})
        elif st.kind == "mask":
            source = p["source"]
            if source == "cgmm":
                res = cgmm_fit(spec, p.get("iterations", 10), seed=config.seed)
                speech, noise = res.speech_mask.data, res.noise_mask.data
                applied.append({"mask": {"source": "cgmm", "iterations": p.get("iterations", 10),
                                         "final_log_likelihood": res.log_likelihood_trace[-1]}})
            elif source in ORACLE_SOURCES:
                if target is None:
                    raise ValueError(f"{source} needs a 'target' entry in the manifest record")
                ch = p.get("channel", 0)
                m = oracle_mask(source.split("-")[1], stft(target, cfg), original, ch)
                speech, noise = m.data, 1.0 - m.data
                applied.append({"mask": {"source": source, "channel": ch}})
            else:
                path = _mask_path(source, record)
                m = read_mask(path, strict=True).astype(np.float64)
                shape = (spec.num_frames, spec.num_bins)
                if m.shape != shape:
                    raise ValueError(f"mask {path} has shape {m.shape}, spectrogram needs {shape}")
                speech, noise = m, 1.0 - m
                applied.append({"mask": {"source": "file", "path": str(path)}})
        elif st.kind == "beamform":
            cov = estimate_covariances(spec, speech, noise)
            flagged = cov.flagged_bins
            ref = p.get("ref", "auto")
            reference = select_reference(cov) if ref == "auto" else int(ref)
            if reference >= spec.num_channels:
                raise ValueError(f"reference channel {reference} out of range for {spec.num_channels} channels")
            kind = p.get("kind", "mvdr")
            if kind == "mvdr":
                w = mvdr_weights(cov, steering_vector(cov, reference), reference=reference)
            elif kind == "pmwf":
                w = pmwf_weights(cov, p.get("beta", 1.0), reference)
            else:
                w = gev_weights(cov, reference)
                if p.get("ban", True):
                    w = ban_postfilter(w, cov)
            spec = apply_beamformer(w, spec)
            applied.append({"beamform": {"kind": w.kind, "beta": w.beta, "reference": reference}})
        elif st.kind == "omlsa":
            ocfg = OmlsaConfig(**p)
            spec = omlsa_denoise(spec, ocfg)
            applied.append({"omlsa": vars(ocfg)})
    out = istft(spec)
    rid = str(record.get("id", Path(record["mixture"]).stem))
    report = {
        "type": "utterance",
        "id": rid,
        "status": "ok",
        "input": str(record["mixture"]),
        "chain_hash": config.chain_hash(),
        "stages": applied,
        "flagged_bins": flagged,
    }
    if out_dir is not None:
        dest = Path(out_dir) / f"{Path(record['mixture']).stem}.{config.chain_hash()}.wav"
        write_wav(dest, out, "float32")
        report["output"] = str(dest)
    if target is not None:
        ch = reference if reference is not None else 0
        ref_sig = target.channel(ch)
        est = out.channel(0) if out.num_channels == 1 else out.channel(ch)
        report["metrics"] = {
            "reference_channel": ch,
            "input_snr_db": snr_db(mixture.channel(ch), ref_sig),
            "output_snr_db": snr_db(est, ref_sig),
        }
    return report


def _worker(args):
    config, record, out_dir = args
    try:
        return process_utterance(config, record, out_dir)
    except Exception as exc:  # noqa: BLE001 - isolate per-file failures
        rid = str(record.get("id", Path(str(record.get("mixture", "?"))).stem))
        return {"type": "utterance", "id": rid, "status": "error",
                "input": str(record.get("mixture")), "error": f"{type(exc).__name__}: {exc}"}


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("MCENHANCE_JOBS", "1")))
    except ValueError:
        return 1


def run_pipeline(config: PipelineConfig, manifest, out_dir, jobs: int | None = None,
                 strict: bool = False, report_path=None) -> list[dict]:
    """Process every manifest record; returns the per-utterance reports in input order.

    The report file (default ``out_dir/report.jsonl``) starts with a header
    line; its ``created`` field is the only non-deterministic content.
    """
    diags = validate_config(config, manifest)
    if diags:
        raise ConfigError(diags)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = jobs or default_jobs()
    tasks = [(copy.deepcopy(config), rec, out_dir) for rec in manifest]
    reports = []
    if jobs > 1 and not strict:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_worker, tasks))
    else:
        for task in tasks:
            rep = _worker(task)
            reports.append(rep)
            if strict and rep["status"] != "ok":
                break
    report_path = Path(report_path) if report_path else out_dir / "report.jsonl"
    header = {
        "type": "header",
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "chain_hash": config.chain_hash(),
        "config": config.to_dict(),
    }
    with open(report_path, "w", encoding="utf-8") as fh:
        for rec in [header] + reports:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return reports
