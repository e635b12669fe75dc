"""Command line front door.

    anchorvid run --config exp.ini --out out/ [--seed S] [--ablation MODE] [--anchor-image x.lat]
    anchorvid ablate | audit-schedule | study-snr | train-denoiser | bench-cost ...

Every subcommand writes ``manifest.json`` plus CSV / latent artifacts under
``--out``. Set ``ANCHORVID_THREADS`` to parallelise seed sweeps.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, emit_config, parse_config, parse_config_text
from .latents import (LatentFormatError, RandomStream, STUDY, latent_to_bytes, latent_to_csv,
                      write_atomic)
from .learned import checkpoint_bytes
from .metrics import frame_correlations, separability_study
from .pipeline import (ABLATION_MODES, StageError, ablation_config, build_context, run_baseline,
                       run_i4vgen, run_mode, train_denoisers, _stage)
from .prior import means_to_csv
from .schedule import schedule_table_csv, terminal_snr

SUBCOMMANDS = ("run", "ablate", "audit-schedule", "study-snr", "train-denoiser", "bench-cost")
DEFAULT_ABLATIONS = ("full", "skip_selection", "skip_nivsds")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_FILE = 4
EXIT_STAGE = 5
EXIT_FORMAT = 6


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ANCHORVID_THREADS", "1")))
    except ValueError:
        return 1


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


class Writer:
    """Collects artifacts under ``out_dir`` (paths recorded relative to it)."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = {}

    def write(self, name: str, data) -> Path:
        path = write_atomic(self.out / name, data)
        self.artifacts[name] = hashlib.sha256(
            data if isinstance(data, bytes) else data.encode()).hexdigest()
        return path

    def latent(self, name: str, v) -> None:
        if v is not None:
            self.write(name, latent_to_bytes(v))


def _manifest(cmd, cfg: PipelineConfig, writer: Writer, **payload) -> dict:
    man = {
        "tool": "anchorvid",
        "version": __version__,
        "subcommand": cmd,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.pipeline.seed,
        "artifacts": dict(sorted(writer.artifacts.items())),
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    man.update(payload)
    writer.write("manifest.json", _json(man))
    return man


def _metric_row(res) -> dict:
    m = res.metrics
    return {"dynamic_degree": m.dynamic_degree, "temporal_consistency": m.temporal_consistency,
            "video_loglik": m.video_loglik, "anchor_reward": _finite_or_none(m.anchor_reward)}


# -- subcommands -----------------------------------------------------------

def cmd_run(cfg, writer, ablation=None, **_):
    mode = ablation or "full"
    cfg = ablation_config(cfg, mode)
    writer.write("config.ini", emit_config(cfg))
    res = run_baseline(cfg) if mode == "baseline" else run_i4vgen(cfg)
    writer.latent("video.lat", res.video)
    writer.write("video.csv", latent_to_csv(res.video))
    writer.latent("anchor.lat", res.anchor)
    writer.latent("animated.lat", None if res.trace is None else res.animated_video)
    if res.trace is not None:
        writer.write("nivsds_trace.csv", res.trace.to_csv())
    payload = {"mode": mode, "ledger": res.ledger.as_dict(), "metrics": _metric_row(res)}
    if res.anchor_scores is not None:
        payload["anchor"] = {"index": res.anchor_index, "scores": res.anchor_scores.tolist()}
    return cfg, payload


def cmd_ablate(cfg, writer, ablation=None, **_):
    modes = tuple(ablation.split(",")) if ablation else DEFAULT_ABLATIONS
    for m in modes:
        if m not in ABLATION_MODES and m != "baseline":
            raise ConfigError(f"--ablation: unknown mode {m!r}")
    ctx = build_context(cfg)
    seeds = [cfg.pipeline.seed + i for i in range(cfg.ablate.seeds)]
    jobs = [(m, s) for m in modes for s in seeds]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda job: run_mode(cfg, job[0], job[1], ctx), jobs))
    header = ["mode", "seed", "dynamic_degree", "temporal_consistency", "video_loglik",
              "anchor_reward", "image_calls", "nivsds_calls", "regen_calls", "baseline_calls",
              "cost_in_c"]
    lines = [",".join(header)]
    for (m, s), res in zip(jobs, results):
        row = _metric_row(res)
        led = res.ledger
        vals = [m, s, row["dynamic_degree"], row["temporal_consistency"], row["video_loglik"],
                res.metrics.anchor_reward, led.image_calls, led.nivsds_calls, led.regen_calls,
                led.baseline_calls, led.cost_in_c]
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in vals))
        writer.latent(f"latents/{m}_{s}.lat", res.video)
    writer.write("ablation.csv", "\n".join(lines) + "\n")
    return cfg, {"modes": list(modes), "seeds": seeds}


def cmd_audit_schedule(cfg, writer, **_):
    ctx_schedule = build_context(cfg).schedule
    writer.write("schedule.csv", schedule_table_csv(ctx_schedule))
    snr = terminal_snr(ctx_schedule)
    print(f"terminal_snr,{snr!r}")
    return cfg, {"terminal_snr": snr, "terminal_alpha_bar": float(ctx_schedule.alpha_bars[-1])}


def cmd_study_snr(cfg, writer, **_):
    ctx = build_context(cfg)
    stream = RandomStream(cfg.pipeline.seed).child(STUDY)
    report, data = separability_study(ctx.prior, ctx.schedule, cfg.study.n_videos, stream,
                                      return_data=True)
    writer.write("separability.csv", report.to_csv())
    writer.write("separability.json", _json(report.as_dict()))
    lines = ["group,video,within,between"]
    for group, videos in data.items():
        within, between = frame_correlations(videos)
        for i, (w, b) in enumerate(zip(within, between)):
            lines.append(f"{group},{i},{w!r},{b!r}")
    writer.write("separability_scatter.csv", "\n".join(lines) + "\n")
    writer.write("prior_means.csv", means_to_csv(ctx.prior))
    print(report.to_csv(), end="")
    return cfg, {"separability": report.as_dict()}


def cmd_train_denoiser(cfg, writer, **_):
    ctx = build_context(cfg.replace(pipeline={"denoiser": "oracle"}))
    models = _stage("train", train_denoisers, cfg, ctx.schedule, ctx.prior, ctx.image_prior)
    reports = {}
    for name, model, rep in zip(("video", "image"), models[:2], (models[2]["video"], models[2]["image"])):
        writer.write(f"{name}_denoiser.bin", checkpoint_bytes(model))
        reports[name] = rep.as_dict()
        lines = ["epoch,heldout_loss,oracle_gap"]
        lines += [f"{e},{l!r},{g!r}" for e, (l, g) in enumerate(zip(rep.epoch_losses, rep.oracle_gaps))]
        writer.write(f"{name}_train.csv", "\n".join(lines) + "\n")
    return cfg, {"train": reports}


def cmd_bench_cost(cfg, writer, **_):
    ctx = build_context(cfg)
    rows = [("baseline", run_baseline(cfg, ctx).ledger)]
    for mode in ("full", "skip_selection", "skip_nivsds"):
        rows.append((f"i4vgen_{mode}" if mode != "full" else "i4vgen",
                     run_mode(cfg, mode, cfg.pipeline.seed, ctx).ledger))
    lines = ["method,image_calls,image_cost_c,nivsds_calls,regen_calls,baseline_calls,cost_in_c"]
    for name, led in rows:
        lines.append(f"{name},{led.image_calls},{led.image_cost},{led.nivsds_calls},"
                     f"{led.regen_calls},{led.baseline_calls},{led.cost_in_c}")
    table = "\n".join(lines) + "\n"
    writer.write("bench_cost.csv", table)
    print(table, end="")
    return cfg, {"ledgers": {name: led.as_dict() for name, led in rows}}


COMMANDS = {
    "run": cmd_run,
    "ablate": cmd_ablate,
    "audit-schedule": cmd_audit_schedule,
    "study-snr": cmd_study_snr,
    "train-denoiser": cmd_train_denoiser,
    "bench-cost": cmd_bench_cost,
}


def run_subcommand(name: str, cfg: PipelineConfig, out_dir, ablation: Optional[str] = None,
                   anchor_image=None) -> dict:
    if name not in COMMANDS:
        raise ValueError(f"unknown subcommand {name!r}")
    if anchor_image is not None:
        cfg = cfg.replace(anchor={"override_path": str(anchor_image)})
    writer = Writer(out_dir)
    cfg, payload = COMMANDS[name](cfg, writer, ablation=ablation)
    return _manifest(name, cfg, writer, **payload)


def replay_manifest(manifest_path, out_dir) -> dict:
    """Re-execute a manifest from its recorded config; the hash must match."""
    man = json.loads(Path(manifest_path).read_text())
    cfg = PipelineConfig.from_dict(man["config"])
    if cfg.hash() != man["config_hash"]:
        raise ConfigError("manifest config does not match its config_hash")
    ablation = man.get("mode") or ",".join(man.get("modes", [])) or None
    return run_subcommand(man["subcommand"], cfg, out_dir, ablation=ablation)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anchorvid", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="INI config file (defaults apply when omitted)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, help="master seed (overrides pipeline.seed)")
    ap.add_argument("--ablation", help="run: one mode; ablate: comma-separated modes")
    ap.add_argument("--anchor-image", help="latent file replacing anchor generation")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        overrides = {} if args.seed is None else {"pipeline.seed": args.seed}
        if args.config:
            cfg = parse_config(args.config, overrides)
        else:
            cfg = parse_config_text("", overrides)
        if args.ablation and args.subcommand == "run" and args.ablation not in ABLATION_MODES \
                and args.ablation != "baseline":
            raise ConfigError(f"--ablation: unknown mode {args.ablation!r}")
        run_subcommand(args.subcommand, cfg, args.out, args.ablation, args.anchor_image)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except LatentFormatError as exc:
        print(f"bad latent file: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
