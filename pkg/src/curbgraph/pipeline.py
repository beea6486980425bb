"""File-based pipeline stages.

Every stage reads the previous stage's files from one output directory
and writes its own, keyed by frame name, so any stage can be replaced by
an external producer (for instance real network outputs dropped in as
CSBT tensors under ``maps/``). Per-frame work runs in a process pool;
each task is a pure function of its inputs, which keeps the written
bytes independent of the worker count.

Layout of an output directory::

    config.toml            resolved configuration
    gt.json                ground-truth city graph
    frames.json            patch frames
    keypoints.json         city keypoint list
    labels/<frame>.kp.csbt, labels/<frame>.seg.csbt    label maps
    labels/<frame>.keypoints.json                      keypoints inside the frame
    maps/<frame>.kp.csbt, maps/<frame>.seg.csbt        (simulated) network outputs
    averaged/<frame>.kp.csbt                           keypoint maps after overlap averaging
    vertices/<frame>.json                              extracted vertices and connectors
    adjacency/<frame>.json                             adjacency edges per frame
    graphs/<frame>.json                                per-patch graphs
    stitched.json, stitched.svg                        city graph
    report.json, report.txt, report.png                metrics
    overlay.png                                        prediction over ground truth
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .afa.encoder import assemble_embeddings
from .afa.model import AfaParams
from .afa.oracle import oracle_adjacency
from .afa.train import predict_adjacency, train_toy
from .config import ConfigError, PipelineConfig
from .geometry import Rect
from .graph import BoundaryGraph, clip_graph, load_graph, rasterize_graph, save_graph
from .keypoints import Keypoint, frame_keypoints, keypoint_label_map
from .metrics import MetricReport, evaluate, format_table, mean_report
from .plotting import overlay_png, report_png, save_graph_svg
from .raster import read_csbt, write_csbt
from .stitch import PatchResult, average_overlaps, patch_graph, stitch_graphs
from .synth import all_keypoints, feature_tensor, generate_city, simulate_inference
from .tiling import PatchFrame, split_city
from .vertices import ExtractedVertices, extract_vertices


class PipelineError(RuntimeError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _read_json(path: Path, what: str):
    if not path.is_file():
        raise PipelineError(f"missing {what}: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PipelineError(f"{path}: malformed {what}: {exc}") from exc


@dataclass(frozen=True)
class Workspace:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    @property
    def config(self) -> Path:
        return self.root / "config.toml"

    @property
    def gt(self) -> Path:
        return self.root / "gt.json"

    @property
    def frames(self) -> Path:
        return self.root / "frames.json"

    @property
    def keypoints(self) -> Path:
        return self.root / "keypoints.json"

    @property
    def stitched(self) -> Path:
        return self.root / "stitched.json"

    @property
    def checkpoint(self) -> Path:
        return self.root / "afa.ckpt"

    def path(self, kind: str, name: str, suffix: str) -> Path:
        return self.root / kind / f"{name}{suffix}"

    def ensure(self, *kinds: str) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        for k in kinds:
            (self.root / k).mkdir(exist_ok=True)

    # -- loaders with stage-specific diagnostics ---------------------------

    def load_gt(self) -> BoundaryGraph:
        if not self.gt.is_file():
            raise PipelineError(f"missing ground-truth graph: {self.gt} (run `synth` first)")
        return load_graph(self.gt)

    def load_frames(self) -> list[PatchFrame]:
        data = _read_json(self.frames, "frame list (run `split` first)")
        try:
            return [PatchFrame.from_dict(d) for d in data["frames"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise PipelineError(f"{self.frames}: malformed frame list: {exc}") from exc

    def load_keypoints(self) -> list[Keypoint]:
        data = _read_json(self.keypoints, "keypoint list (run `labels` first)")
        try:
            return [Keypoint.from_dict(d) for d in data["keypoints"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise PipelineError(f"{self.keypoints}: malformed keypoint list: {exc}") from exc

    def load_map(self, kind: str, name: str, suffix: str, frame: PatchFrame) -> np.ndarray:
        path = self.path(kind, name, suffix)
        if not path.is_file():
            raise PipelineError(f"missing tensor: {path}")
        arr = read_csbt(path)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[..., 0]
        if arr.shape != frame.shape():
            raise PipelineError(f"{path}: tensor shape {arr.shape} does not match frame {frame.shape()}")
        return arr


def resolve_config(out, config_path=None, **overrides) -> PipelineConfig:
    """Explicit config file, else the one saved in the output directory, else defaults."""
    ws = Workspace(out)
    if config_path is not None:
        cfg = PipelineConfig.load(config_path)
    elif ws.config.is_file():
        cfg = PipelineConfig.load(ws.config)
    else:
        cfg = PipelineConfig()
    try:
        return cfg.with_overrides(**overrides)
    except ValueError as exc:
        raise ConfigError(f"command-line override: {exc}") from exc


def _map(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def city_bounds(cfg: PipelineConfig) -> Rect:
    return cfg.city.bounds


# ---------------------------------------------------------------------------
# Stages

def stage_synth(cfg: PipelineConfig, ws: Workspace) -> BoundaryGraph:
    ws.ensure()
    gt = generate_city(cfg.city)
    save_graph(gt, ws.gt)
    # the worker count changes nothing in the outputs, so it is not recorded
    ws.config.write_text(cfg.to_text(skip=("workers",)), encoding="utf-8")
    return gt


def stage_split(cfg: PipelineConfig, ws: Workspace) -> list[PatchFrame]:
    ws.ensure()
    frames = split_city(tuple(cfg.tiles), cfg.tile_size, cfg.core_size, cfg.margin)
    ws.frames.write_text(_dump({"frames": [f.to_dict() for f in frames]}), encoding="utf-8")
    return frames


def _labels_task(args):
    root, frame_d, keypoints, gt_json, sigma = args
    ws, frame = Workspace(root), PatchFrame.from_dict(frame_d)
    gt = BoundaryGraph.from_json(gt_json)
    kps = frame_keypoints(keypoints, frame, pad=5.0 * sigma)
    inside = [k.to_dict() for k in kps if frame.expanded.contains(k.x, k.y)]
    ws.path("labels", frame.name, ".keypoints.json").write_text(_dump(inside), encoding="utf-8")
    write_csbt(ws.path("labels", frame.name, ".kp.csbt"), keypoint_label_map(kps, frame, sigma))
    write_csbt(ws.path("labels", frame.name, ".seg.csbt"), rasterize_graph(gt, frame, thickness=3))
    return frame.name


def stage_labels(cfg: PipelineConfig, ws: Workspace) -> list[Keypoint]:
    """City keypoint list plus per-frame keypoint and segmentation label maps."""
    gt, frames = ws.load_gt(), ws.load_frames()
    ws.ensure("labels")
    b = city_bounds(cfg)
    pad = cfg.margin + 5.0 * cfg.sigma
    kps = all_keypoints(gt, Rect(b.x0 - pad, b.y0 - pad, b.x1 + pad, b.y1 + pad), cfg.keypoint_params)
    ws.keypoints.write_text(_dump({"keypoints": [k.to_dict() for k in kps]}), encoding="utf-8")
    gt_json = gt.to_json()
    _map(_labels_task, [(str(ws.root), f.to_dict(), kps, gt_json, cfg.sigma) for f in frames], cfg.workers)
    return kps


def _infer_task(args):
    root, frame_d, keypoints, gt_json, cfg = args
    ws, frame = Workspace(root), PatchFrame.from_dict(frame_d)
    gt = BoundaryGraph.from_json(gt_json)
    kp, seg = simulate_inference(gt, frame, cfg.noise, cfg.keypoint_params, cfg.seed, keypoints=keypoints)
    write_csbt(ws.path("maps", frame.name, ".kp.csbt"), kp)
    write_csbt(ws.path("maps", frame.name, ".seg.csbt"), seg)
    return frame.name


def stage_infer_sim(cfg: PipelineConfig, ws: Workspace) -> None:
    gt, frames, kps = ws.load_gt(), ws.load_frames(), ws.load_keypoints()
    ws.ensure("maps")
    gt_json = gt.to_json()
    _map(_infer_task, [(str(ws.root), f.to_dict(), kps, gt_json, cfg) for f in frames], cfg.workers)


def _extract_task(args):
    root, frame_d, cfg = args
    ws, frame = Workspace(root), PatchFrame.from_dict(frame_d)
    kp = ws.load_map("averaged", frame.name, ".kp.csbt", frame)
    ev = extract_vertices(kp, frame, **cfg.extract_kwargs())
    ev.save(ws.path("vertices", frame.name, ".json"))
    return len(ev)


def stage_extract(cfg: PipelineConfig, ws: Workspace) -> int:
    """Average keypoint maps over overlaps, then extract vertices per frame."""
    frames = ws.load_frames()
    ws.ensure("averaged", "vertices")
    results = [PatchResult(f, ws.load_map("maps", f.name, ".kp.csbt", f)) for f in frames]
    for r in average_overlaps(results):
        write_csbt(ws.path("averaged", r.frame.name, ".kp.csbt"), r.keypoint_map)
    counts = _map(_extract_task, [(str(ws.root), f.to_dict(), cfg) for f in frames], cfg.workers)
    return int(sum(counts))


def _adjacency_task(args):
    root, frame_d, gt_json, cfg, mode, checkpoint = args
    ws, frame = Workspace(root), PatchFrame.from_dict(frame_d)
    ev = ExtractedVertices.load(ws.path("vertices", frame.name, ".json"))
    if mode == "oracle":
        gt = BoundaryGraph.from_json(gt_json)
        adj = oracle_adjacency(ev.vertices, clip_graph(gt, frame.expanded), cfg.oracle_snap_radius)
    else:
        params = AfaParams.load(checkpoint)
        kp = ws.load_map("averaged", frame.name, ".kp.csbt", frame)
        seg = ws.load_map("maps", frame.name, ".seg.csbt", frame)
        tensor = feature_tensor(np.clip(kp, 0, 1), np.clip(seg, 0, 1), frame, cfg.seed)
        emb = assemble_embeddings(tensor, ev.vertices, frame, cfg.roi)
        adj = predict_adjacency(emb, params, cfg.adjacency_threshold)
    ii, jj = np.nonzero(np.triu(adj, 1))
    edges = [[int(i), int(j)] for i, j in zip(ii, jj)]
    doc = {"frame": frame.name, "mode": mode, "vertices": len(ev), "edges": edges}
    ws.path("adjacency", frame.name, ".json").write_text(_dump(doc), encoding="utf-8")
    g = patch_graph(ev, adj, step=cfg.connector_step)
    save_graph(g, ws.path("graphs", frame.name, ".json"))
    return len(edges)


def stage_adjacency(cfg: PipelineConfig, ws: Workspace, checkpoint=None, train: bool = False, log=None) -> dict:
    """Adjacency per frame (oracle or decoder) and the resulting per-patch graphs.

    In decoder mode ``train`` first fits a fresh decoder on toy patches and
    saves it to ``checkpoint`` (default ``afa.ckpt`` in the output
    directory); otherwise the checkpoint must exist.
    """
    frames = ws.load_frames()
    ws.ensure("adjacency", "graphs")
    info: dict = {"mode": cfg.mode}
    gt_json = None
    ckpt = Path(checkpoint) if checkpoint else ws.checkpoint
    if cfg.mode == "oracle":
        gt_json = ws.load_gt().to_json()
    else:
        if train:
            params, report = train_toy(cfg.train_config, log)
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            params.save(ckpt)
            info["training"] = report
        elif not ckpt.is_file():
            raise PipelineError(f"missing decoder checkpoint: {ckpt} (pass --train or --checkpoint)")
        AfaParams.load(ckpt)  # fail early on a bad file
        info["checkpoint"] = str(ckpt)
    tasks = [(str(ws.root), f.to_dict(), gt_json, cfg, cfg.mode, str(ckpt)) for f in frames]
    info["edges"] = int(sum(_map(_adjacency_task, tasks, cfg.workers)))
    return info


def load_patch_results(ws: Workspace, frames: list[PatchFrame]) -> list[PatchResult]:
    out = []
    for f in frames:
        p = ws.path("graphs", f.name, ".json")
        if not p.is_file():
            raise PipelineError(f"missing patch graph: {p} (run `adjacency` first)")
        out.append(PatchResult(f, graph=load_graph(p)))
    return out


def stage_stitch(cfg: PipelineConfig, ws: Workspace) -> BoundaryGraph:
    frames = ws.load_frames()
    g = stitch_graphs(load_patch_results(ws, frames), cfg.merge_radius)
    save_graph(g, ws.stitched)
    save_graph_svg(g, ws.root / "stitched.svg", city_bounds(cfg), frames)
    return g


def _patch_eval_task(args):
    frame_d, graph_json, gt_json, mcfg = args
    frame = PatchFrame.from_dict(frame_d)
    pred, gt = BoundaryGraph.from_json(graph_json), BoundaryGraph.from_json(gt_json)
    # each patch answers for its core; both graphs are cut at the same lines
    core = frame.core
    return evaluate(clip_graph(pred, core), clip_graph(gt, core), core, mcfg, label=frame.name)


def graph_extent(*graphs: BoundaryGraph) -> Rect:
    pts = np.vstack([g.positions() for g in graphs if len(g)] or [np.zeros((1, 2))])
    lo, hi = np.floor(pts.min(axis=0)) - 2, np.ceil(pts.max(axis=0)) + 3
    return Rect(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def stage_eval(cfg: PipelineConfig, ws: Workspace, gt_path=None, pred_path=None) -> dict:
    """City-scale report, plus the patch-scale mean when per-patch graphs exist.

    With explicit ``gt_path``/``pred_path`` only those two graphs are
    compared, over the raster spanning both.
    """
    ws.ensure()
    mcfg = cfg.metric_config
    explicit = gt_path is not None or pred_path is not None
    gt = load_graph(gt_path) if gt_path else ws.load_gt()
    pred_file = Path(pred_path) if pred_path else ws.stitched
    if not pred_file.is_file():
        raise PipelineError(f"missing predicted graph: {pred_file} (run `stitch` first)")
    pred = load_graph(pred_file)
    bounds = graph_extent(gt, pred) if explicit else city_bounds(cfg)
    city = evaluate(pred, gt, bounds, mcfg, label="city")
    reports: list[MetricReport] = [city]
    doc: dict = {"city": city.to_dict()}
    if not explicit and ws.frames.is_file() and (ws.root / "graphs").is_dir():
        frames = ws.load_frames()
        results = load_patch_results(ws, frames)
        gt_json = gt.to_json()
        tasks = [(r.frame.to_dict(), r.graph.to_json(), gt_json, mcfg) for r in results]
        per = _map(_patch_eval_task, tasks, cfg.workers)
        patch = mean_report(per, label="patch")
        reports.insert(0, patch)
        doc["patch"] = patch.to_dict()
        doc["patches"] = {r.label: r.to_dict() for r in per}
    (ws.root / "report.json").write_text(_dump(doc), encoding="utf-8")
    (ws.root / "report.txt").write_text(format_table(reports), encoding="utf-8")
    report_png(reports, ws.root / "report.png")
    return {"reports": reports, "doc": doc}


def stage_render(cfg: PipelineConfig, ws: Workspace) -> None:
    gt = ws.load_gt()
    if not ws.stitched.is_file():
        raise PipelineError(f"missing predicted graph: {ws.stitched} (run `stitch` first)")
    pred = load_graph(ws.stitched)
    frames = ws.load_frames() if ws.frames.is_file() else []
    bounds = city_bounds(cfg)
    save_graph_svg(pred, ws.root / "stitched.svg", bounds, frames)
    save_graph_svg(gt, ws.root / "gt.svg", bounds, frames)
    overlay_png(pred, gt, bounds, ws.root / "overlay.png", frames)


STAGES = ("synth", "split", "labels", "infer-sim", "extract", "adjacency", "stitch", "eval", "render")


def run_all(cfg: PipelineConfig, out, checkpoint=None, train: bool = False, log=None,
            on_adjacency=None) -> MetricReport:
    """Every stage in order; returns the city-scale report.

    ``on_adjacency`` receives the adjacency stage summary (mode, edge count,
    training losses when a decoder was trained).
    """
    ws = Workspace(out)
    stage_synth(cfg, ws)
    stage_split(cfg, ws)
    stage_labels(cfg, ws)
    stage_infer_sim(cfg, ws)
    stage_extract(cfg, ws)
    info = stage_adjacency(cfg, ws, checkpoint, train, log)
    if on_adjacency is not None:
        on_adjacency(info)
    stage_stitch(cfg, ws)
    result = stage_eval(cfg, ws)
    stage_render(cfg, ws)
    return result["reports"][-1]
