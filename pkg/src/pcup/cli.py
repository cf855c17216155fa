"""Command-line front end: dataset prep, training, up-sampling, evaluation.

Exit codes: 0 success, 1 runtime error, 2 usage error. Every subcommand
is deterministic for a fixed --seed (patch seeds are derived per patch,
so even --threads > 1 cannot reorder results). Report-writing commands
emit the human-readable report, a structured twin, and a rendered figure
side by side.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import core, metrics, partition, pipeline, plots
from . import io as io_mod
from .coarse import BaselineGeometryUpsampler, GroundTruthGeometryUpsampler
from .errors import (
    CloudTooSmall,
    IncompatibleCheckpoint,
    MissingCheckpoint,
    PcupError,
)
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .neural.nets import NetworkConfig
from .neural.training import train as train_networks


class UsageError(Exception):
    """Bad flag combination caught after parsing; maps to exit code 2."""


_ALLOWED = {
    "downsample": {"input", "rate", "output"},
    "upsample": {"input", "rate", "method", "aem", "k1", "k2", "overlap",
                 "patch", "geometry", "output", "report"},
    "train": {"manifest", "rate", "method", "epochs", "batch", "lr", "out",
              "patch", "overlap", "k1", "k2", "width", "max_pairs", "augment"},
    "eval": {"pred", "gt", "out"},
    "stats": {"manifest", "out"},
    "sweep": {"input", "rate", "param", "values", "patch", "overlap", "width",
              "epochs", "max_pairs", "out"},
}


@dataclass
class RunConfig:
    """One validated CLI invocation: subcommand, its parameters, run knobs."""

    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    checkpoint: str | None = None

    def __post_init__(self):
        if self.command not in _ALLOWED:
            raise UsageError(f"unknown command {self.command!r}")
        extra = set(self.params) - _ALLOWED[self.command]
        if extra:
            raise UsageError(f"unknown parameters for {self.command}: {sorted(extra)}")
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")


def _run_config(ns: argparse.Namespace) -> RunConfig:
    fields = dict(vars(ns))
    command = fields.pop("command")
    seed = fields.pop("seed", 0)
    threads = fields.pop("threads", 1)
    checkpoint = fields.pop("checkpoint", None)
    return RunConfig(command, fields, seed=seed, threads=threads, checkpoint=checkpoint)


def _write_report(report: metrics.MetricReport, out: str):
    Path(out).write_text(report.to_text())
    Path(out + ".json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    plots.psnr_bars(report.to_dict(), out + ".png", title=Path(out).name)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_downsample(cfg: RunConfig) -> int:
    p = cfg.params
    cloud = io_mod.read_ply(p["input"])
    sparse = core.random_downsample(cloud, p["rate"], cfg.seed)
    io_mod.write_ply(sparse, p["output"])
    print(f"{sparse.n} points -> {p['output']}")
    return 0


def _parse_geometry(value: str):
    if value == "baseline":
        return BaselineGeometryUpsampler(), None
    if value.startswith("ground-truth:"):
        path = value.split(":", 1)[1]
        if not path:
            raise UsageError("--geometry ground-truth: needs a PLY path")
        gt = io_mod.read_ply(path)
        return GroundTruthGeometryUpsampler(gt.positions), gt
    raise UsageError(f"--geometry must be 'baseline' or 'ground-truth:PATH', got {value!r}")


def cmd_upsample(cfg: RunConfig) -> int:
    p = cfg.params
    method = p["method"]
    enhance = p["aem"] == "on"
    rate = p["rate"]
    k1, k2 = p["k1"], p["k2"]

    store = net_cfg = None
    if method == "dlai" or enhance:
        if cfg.checkpoint is None:
            raise MissingCheckpoint("method=dlai or --aem on requires --checkpoint")
        store, net_id, net_cfg = load_checkpoint(cfg.checkpoint)
        trained = set(net_id.split("+"))
        if method == "dlai" and "dlai" not in trained:
            raise IncompatibleCheckpoint(
                f"{cfg.checkpoint}: trained for {net_id!r}, not for method=dlai")
        if enhance and "aem" not in trained:
            raise IncompatibleCheckpoint(
                f"{cfg.checkpoint}: trained for {net_id!r}, lacks the enhancer")
        if rate != net_cfg.rate:
            raise IncompatibleCheckpoint(
                f"{cfg.checkpoint}: trained for rate {net_cfg.rate}, run asks {rate}")
        for name, asked in (("k1", k1), ("k2", k2)):
            have = getattr(net_cfg, name)
            if asked is not None and asked != have:
                raise IncompatibleCheckpoint(
                    f"{cfg.checkpoint}: trained with {name}={have}, run asks {asked}")
        k1, k2 = net_cfg.k1, net_cfg.k2
    k1 = 2 if k1 is None else k1
    k2 = 32 if k2 is None else k2

    if p["report"] and not p["geometry"].startswith("ground-truth:"):
        raise UsageError("--report needs --geometry ground-truth:PATH as the reference")

    cloud = io_mod.read_ply(p["input"])
    geometry, reference = _parse_geometry(p["geometry"])
    run = pipeline.PipelineConfig(
        rate=rate, method=method, enhance=enhance, m=p["patch"], c=p["overlap"],
        k1=k1, k2=k2, threads=cfg.threads,
    )
    out = pipeline.upsample_cloud(cloud, run, geometry=geometry, store=store,
                                  net_cfg=net_cfg, seed=cfg.seed)
    io_mod.write_ply(out, p["output"])
    print(f"{cloud.n} -> {out.n} points ({method}, aem {'on' if enhance else 'off'})")
    if p["report"]:
        _write_report(metrics.evaluate_pair(out, reference), p["report"])
    return 0


def _training_pairs(dense: core.ColoredPointCloud, cfg: partition.PartitionConfig,
                    entry_index: int, seed: int, cap: int | None) -> list:
    """Coverage-count training pairs around FPS seeds of one ground truth."""
    need = cfg.m * cfg.rate
    if dense.n < need:
        raise CloudTooSmall(
            f"cloud has {dense.n} points; pairs need m*R = {need}")
    count = min(partition.patch_count(dense.n, cfg.c, need), dense.n)
    if cap is not None:
        count = min(count, cap)
    seeds = core.farthest_point_sample(dense.positions, count, cfg.fps_start)
    return [
        partition.extract_training_pair(
            dense, int(s), cfg, np.random.SeedSequence([seed, entry_index, pi]))
        for pi, s in enumerate(seeds)
    ]


def cmd_train(cfg: RunConfig) -> int:
    p = cfg.params
    manifest = io_mod.load_manifest(p["manifest"])
    part_cfg = partition.PartitionConfig(m=p["patch"], c=p["overlap"], rate=p["rate"])
    pairs = []
    for ei, entry in enumerate(manifest.entries):
        dense = io_mod.read_ply(manifest.resolve(entry.path))
        room = None if p["max_pairs"] is None else p["max_pairs"] - len(pairs)
        if room is not None and room <= 0:
            break
        pairs.extend(_training_pairs(dense, part_cfg, ei, cfg.seed, room))

    net_cfg = NetworkConfig(k1=p["k1"], k2=p["k2"], width=p["width"],
                            m=p["patch"], rate=p["rate"])
    losses: list[float] = []
    store = train_networks(
        pairs, net_cfg, epochs=p["epochs"], batch=p["batch"], lr=p["lr"],
        rng=cfg.seed, method=p["method"], use_augment=p["augment"] == "on",
        on_epoch=lambda e, rep: losses.append(rep.attribute_mae),
    )
    out = p["out"]
    save_checkpoint(out, store, f"{p['method']}+aem", net_cfg)
    Path(out + ".log").write_text(
        "epoch\tattribute_mae\n"
        + "".join(f"{e}\t{v:.9g}\n" for e, v in enumerate(losses))
    )
    if losses:
        plots.loss_curve(losses, out + ".png", title=Path(out).name)
    last = f", final mae {losses[-1]:.6g}" if losses else ""
    print(f"trained on {len(pairs)} pairs for {len(losses)} epochs{last} -> {out}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    p = cfg.params
    pred = io_mod.read_ply(p["pred"])
    gt = io_mod.read_ply(p["gt"])
    report = metrics.evaluate_pair(pred, gt)
    _write_report(report, p["out"])
    print(report.to_text(), end="")
    return 0


def cmd_stats(cfg: RunConfig) -> int:
    p = cfg.params
    manifest = io_mod.load_manifest(p["manifest"])
    rows = []
    for entry in manifest.entries:
        cloud = io_mod.read_ply(manifest.resolve(entry.path))
        g_c, a_c = metrics.content_complexity(cloud)
        rows.append((entry.id, cloud.n, g_c, a_c))
    out = p["out"]
    Path(out).write_text(
        "id\tpoints\tg_c\ta_c\n"
        + "".join(f"{i}\t{n}\t{g:.9g}\t{a:.9g}\n" for i, n, g, a in rows)
    )
    plots.complexity_scatter(rows, out + ".png", title=Path(out).name)
    print(f"{len(rows)} entries -> {out}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    p = cfg.params
    param = p["param"]
    try:
        values = [int(v) for v in p["values"].split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"--values must be comma-separated integers: {e}") from e
    if not values:
        raise UsageError("--values is empty")

    gt = io_mod.read_ply(p["input"])
    rate, m, c = p["rate"], p["patch"], p["overlap"]
    sparse = core.random_downsample(gt, rate, cfg.seed)
    geometry = GroundTruthGeometryUpsampler(gt.positions)
    part_cfg = partition.PartitionConfig(m=m, c=c, rate=rate)

    rows = []
    for v in values:
        if param == "k1":
            run = pipeline.PipelineConfig(rate=rate, method="gdwai", enhance=False,
                                          m=m, c=c, k1=v, threads=cfg.threads)
            out = pipeline.upsample_cloud(sparse, run, geometry=geometry, seed=cfg.seed)
        else:
            pairs = _training_pairs(gt, part_cfg, 0, cfg.seed, p["max_pairs"])
            net_cfg = NetworkConfig(k1=2, k2=v, width=p["width"], m=m, rate=rate)
            store = train_networks(pairs, net_cfg, epochs=p["epochs"],
                                   rng=cfg.seed, method="gdwai")
            run = pipeline.PipelineConfig(rate=rate, method="gdwai", enhance=True,
                                          m=m, c=c, k1=2, k2=v, threads=cfg.threads)
            out = pipeline.upsample_cloud(sparse, run, geometry=geometry,
                                          store=store, net_cfg=net_cfg, seed=cfg.seed)
        psnr_y, _ = metrics.attribute_psnr(out, gt)
        rows.append((param, v, psnr_y))
        print(f"{param}={v}: psnr_y {psnr_y:.4f} dB")

    out_path = p["out"]
    Path(out_path).write_text(
        "param\tvalue\tpsnr_y\n"
        + "".join(f"{n}\t{v}\t{s:.9g}\n" for n, v, s in rows)
    )
    plots.sweep_lines(rows, out_path + ".png", title=f"{param} sweep")
    return 0


_HANDLERS = {
    "downsample": cmd_downsample,
    "upsample": cmd_upsample,
    "train": cmd_train,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "sweep": cmd_sweep,
}


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(sp: argparse.ArgumentParser, checkpoint: bool = False):
    sp.add_argument("--seed", type=int, default=0, help="random seed for this run")
    sp.add_argument("--threads", type=int, default=max(1, os.cpu_count() or 1),
                    help="patch-level worker threads (results do not depend on this)")
    if checkpoint:
        sp.add_argument("--checkpoint", default=None,
                        help="trained parameter file (required for dlai or aem)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcup",
        description="Up-sample large colored point clouds patch by patch.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("downsample", help="randomly down-sample a PLY cloud")
    sp.add_argument("--input", required=True, help="source PLY file")
    sp.add_argument("--rate", type=float, required=True, help="down-sampling rate (keeps n/rate points)")
    sp.add_argument("--output", required=True, help="destination PLY file")
    _add_common(sp)

    sp = sub.add_parser("upsample", help="up-sample a PLY cloud by an integer rate")
    sp.add_argument("--input", required=True, help="sparse source PLY file")
    sp.add_argument("--rate", type=int, required=True, help="up-sampling rate R (output has n*R points)")
    sp.add_argument("--method", choices=("gdwai", "dlai"), default="gdwai",
                    help="coarse color interpolation method")
    sp.add_argument("--aem", choices=("on", "off"), default="off",
                    help="apply the learned color enhancer after interpolation")
    sp.add_argument("--k1", type=int, default=None,
                    help="sparse neighbors per dense point (default 2, or the checkpoint's)")
    sp.add_argument("--k2", type=int, default=None,
                    help="dense neighbors for the enhancer (default 32, or the checkpoint's)")
    sp.add_argument("--overlap", type=float, default=3.0, help="patch overlap ratio c")
    sp.add_argument("--patch", type=int, default=256, help="points per patch m")
    sp.add_argument("--geometry", default="baseline",
                    help="'baseline' or 'ground-truth:PATH' for reference positions")
    sp.add_argument("--output", required=True, help="destination PLY file")
    sp.add_argument("--report", default=None,
                    help="also score against the ground truth and write a report here")
    _add_common(sp, checkpoint=True)

    sp = sub.add_parser("train", help="train the attribute networks on a manifest")
    sp.add_argument("--manifest", required=True, help="dataset manifest JSON")
    sp.add_argument("--rate", type=int, default=4, help="up-sampling rate R to train for")
    sp.add_argument("--method", choices=("gdwai", "dlai"), default="gdwai",
                    help="coarse path to train the enhancer on top of")
    sp.add_argument("--epochs", type=int, default=400, help="training epochs")
    sp.add_argument("--batch", type=int, default=None,
                    help="pairs per optimizer step (default 40, 28 above rate 12)")
    sp.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    sp.add_argument("--patch", type=int, default=256, help="sparse points per training pair m")
    sp.add_argument("--overlap", type=float, default=3.0,
                    help="coverage factor for how many pairs each cloud yields")
    sp.add_argument("--k1", type=int, default=2, help="sparse neighbors per dense point")
    sp.add_argument("--k2", type=int, default=32, help="dense neighbors for the enhancer")
    sp.add_argument("--width", type=int, default=64, help="enhancer feature width")
    sp.add_argument("--max-pairs", type=int, default=None,
                    help="cap on total training pairs (default: coverage count)")
    sp.add_argument("--augment", choices=("on", "off"), default="off",
                    help="re-jitter and re-scale pairs every epoch")
    sp.add_argument("--out", required=True, help="checkpoint path (log and figure land beside it)")
    _add_common(sp)

    sp = sub.add_parser("eval", help="score a predicted cloud against its ground truth")
    sp.add_argument("--pred", required=True, help="predicted PLY file")
    sp.add_argument("--gt", required=True, help="ground-truth PLY file")
    sp.add_argument("--out", required=True, help="report path (.json and .png land beside it)")
    _add_common(sp)

    sp = sub.add_parser("stats", help="tabulate per-entry size and content complexity")
    sp.add_argument("--manifest", required=True, help="dataset manifest JSON")
    sp.add_argument("--out", required=True, help="table path (figure lands beside it)")
    _add_common(sp)

    sp = sub.add_parser("sweep", help="sweep k1 or k2 and tabulate PSNR")
    sp.add_argument("--input", required=True, help="dense ground-truth PLY file")
    sp.add_argument("--rate", type=int, default=4, help="up-sampling rate R")
    sp.add_argument("--param", choices=("k1", "k2"), required=True, help="which knob to sweep")
    sp.add_argument("--values", required=True, help="comma-separated values, e.g. 1,2,3,4")
    sp.add_argument("--patch", type=int, default=256, help="points per patch m")
    sp.add_argument("--overlap", type=float, default=3.0, help="patch overlap ratio c")
    sp.add_argument("--width", type=int, default=64, help="enhancer feature width (k2 sweep)")
    sp.add_argument("--epochs", type=int, default=20, help="training epochs per k2 value")
    sp.add_argument("--max-pairs", type=int, default=None,
                    help="cap on training pairs per k2 value")
    sp.add_argument("--out", required=True, help="table path (figure lands beside it)")
    _add_common(sp)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = _run_config(ns)
        return _HANDLERS[cfg.command](cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (PcupError, ValueError, NotImplementedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
