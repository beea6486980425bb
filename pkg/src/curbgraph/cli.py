"""Command-line driver: one subcommand per pipeline stage plus ``run-all``."""

from __future__ import annotations

import argparse
import sys

from . import pipeline as pl
from .afa.model import AfaError
from .config import ConfigError
from .graph import GraphError
from .raster import RasterError
from .synth import SpecError

# failures reported as one-line diagnostics rather than tracebacks
HANDLED = (ConfigError, pl.PipelineError, GraphError, RasterError, AfaError, SpecError,
           FileNotFoundError, ValueError, OSError)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file (default: <out>/config.toml if present)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--workers", type=int, help="worker processes for per-patch stages")


def _afa_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("oracle", "afa"), help="adjacency source")
    p.add_argument("--checkpoint", help="decoder checkpoint (default: <out>/afa.ckpt)")
    p.add_argument("--train", action="store_true", help="train a fresh decoder on toy patches first")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curbgraph", description="Road-boundary graphs from per-patch keypoint maps.")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate a synthetic ground-truth city",
        "split": "split the city into expanded patch frames",
        "labels": "city keypoints and per-frame label maps",
        "infer-sim": "simulated network outputs per frame",
        "extract": "average overlaps and extract vertices per frame",
        "adjacency": "adjacency and per-patch graphs (oracle or decoder)",
        "stitch": "merge per-patch graphs into the city graph",
        "eval": "city- and patch-scale metrics",
        "render": "SVG and PNG renderings",
        "run-all": "every stage in order",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name in ("adjacency", "run-all"):
            _afa_flags(p)
        if name == "eval":
            p.add_argument("--gt", help="ground-truth graph (default: <out>/gt.json)")
            p.add_argument("--pred", help="predicted graph (default: <out>/stitched.json)")
    return ap


def _epoch_printer(pretrain_epochs: int):
    calls = [0]

    def log(epoch: int, loss: float) -> None:
        phase = "pretrain" if calls[0] < pretrain_epochs else "train"
        calls[0] += 1
        print(f"{phase} epoch {epoch + 1:3d}  loss {loss:.6f}", flush=True)

    return log


def _run(args) -> int:
    overrides = {"seed": args.seed, "workers": args.workers, "mode": getattr(args, "mode", None)}
    cfg = pl.resolve_config(args.out, args.config, **overrides)
    ws = pl.Workspace(args.out)
    cmd = args.command
    train = getattr(args, "train", False)
    if train and cfg.mode != "afa":
        raise ConfigError("--train needs --mode afa")
    log = _epoch_printer(cfg.pretrain_epochs) if train else None

    if cmd == "synth":
        gt = pl.stage_synth(cfg, ws)
        print(f"synth: {len(gt)} vertices, {gt.num_edges} edges -> {ws.gt}")
    elif cmd == "split":
        frames = pl.stage_split(cfg, ws)
        print(f"split: {len(frames)} frames -> {ws.frames}")
    elif cmd == "labels":
        kps = pl.stage_labels(cfg, ws)
        print(f"labels: {len(kps)} keypoints -> {ws.keypoints}, {ws.root / 'labels'}")
    elif cmd == "infer-sim":
        pl.stage_infer_sim(cfg, ws)
        print(f"infer-sim: maps -> {ws.root / 'maps'}")
    elif cmd == "extract":
        n = pl.stage_extract(cfg, ws)
        print(f"extract: {n} vertices -> {ws.root / 'vertices'}")
    elif cmd == "adjacency":
        info = pl.stage_adjacency(cfg, ws, args.checkpoint, train, log)
        _print_training(info)
        print(f"adjacency ({info['mode']}): {info['edges']} edges -> {ws.root / 'graphs'}")
    elif cmd == "stitch":
        g = pl.stage_stitch(cfg, ws)
        print(f"stitch: {len(g)} vertices, {g.num_edges} edges -> {ws.stitched}")
    elif cmd == "eval":
        pl.stage_eval(cfg, ws, args.gt, args.pred)
        sys.stdout.write((ws.root / "report.txt").read_text(encoding="utf-8"))
        print(f"eval: -> {ws.root / 'report.json'}")
    elif cmd == "render":
        pl.stage_render(cfg, ws)
        print(f"render: -> {ws.root / 'stitched.svg'}, {ws.root / 'overlay.png'}")
    elif cmd == "run-all":
        pl.run_all(cfg, ws.root, args.checkpoint, train, log, _print_training)
        sys.stdout.write((ws.root / "report.txt").read_text(encoding="utf-8"))
    return 0


def _print_training(info: dict) -> None:
    rep = info.get("training")
    if rep:
        ratio = rep["final_loss"] / rep["initial_loss"] if rep["initial_loss"] else float("nan")
        print(f"training: initial loss {rep['initial_loss']:.6f}  final loss {rep['final_loss']:.6f}  "
              f"ratio {ratio:.3f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except HANDLED as exc:
        print(f"curbgraph {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
