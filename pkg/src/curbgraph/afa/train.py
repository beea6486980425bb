"""Toy-scale decoder training on synthetic adjacency instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import BoundaryGraph, clip_graph
from ..synth import CitySpec, KeypointParams, all_keypoints, feature_tensor, generate_city, simulate_inference
from ..tiling import PatchFrame
from ..vertices import extract_vertices
from .encoder import assemble_embeddings
from .model import AfaParams, adjacency_loss, binarize_adjacency, decoder_forward, loss_value, score_probability
from .oracle import oracle_adjacency


@dataclass
class Instance:
    embeddings: np.ndarray   # (M, 2050)
    label: np.ndarray        # (M, M) bool
    name: str = ""


def frame_instance(gt: BoundaryGraph, frame: PatchFrame, params: KeypointParams, seed: int = 0,
                   roi: int = 64, snap_radius: float = 5.0, use_gt_vertices: bool = False,
                   keypoints=None) -> Instance:
    """Embeddings and oracle label for one noiseless patch.

    With ``use_gt_vertices`` the vertex set is the true keypoint list
    instead of what extraction recovers from the rendered map.
    """
    kp_map, seg = simulate_inference(gt, frame, params=params, seed=seed, keypoints=keypoints)
    tensor = feature_tensor(kp_map, seg, frame, seed)
    local_gt = clip_graph(gt, frame.expanded)
    if use_gt_vertices:
        if keypoints is None:
            e = frame.expanded
            keypoints = all_keypoints(gt, e, params)
        verts = np.array([[k.x, k.y] for k in keypoints if frame.expanded.contains(k.x, k.y)],
                         dtype=float).reshape(-1, 2)
    else:
        verts = extract_vertices(kp_map, frame).vertices
    emb = assemble_embeddings(tensor, verts, frame, roi)
    return Instance(emb, oracle_adjacency(verts, local_gt, snap_radius), frame.name)


def toy_frames(count: int, seed: int = 0, size: int = 256) -> list[tuple[BoundaryGraph, PatchFrame]]:
    """``count`` small single-patch cities of ``size`` px, a couple of blocks each."""
    out = []
    for i in range(count):
        spec = CitySpec(seed=seed * 100003 + i, tiles=(1, 1), tile_size=size,
                        block_spacing=(size * 0.35, size * 0.5), road_width=(16.0, 24.0),
                        corner_radius=(0.0, 24.0), irregular_prob=0.15)
        frame = PatchFrame(tile=(0, 0), patch=(0, i), core_origin=(0.0, 0.0), core_size=size,
                           expanded_origin=(0.0, 0.0), expanded_size=size)
        out.append((generate_city(spec), frame))
    return out


def toy_instances(count: int, seed: int = 0, size: int = 256, use_gt_vertices: bool = False,
                  roi: int = 64) -> list[Instance]:
    params = KeypointParams(core_size=size, aux_spacing=None)
    return [frame_instance(gt, frame, params, seed=seed, roi=roi, use_gt_vertices=use_gt_vertices)
            for gt, frame in toy_frames(count, seed, size)]


def mean_loss(instances: list[Instance], params: AfaParams) -> float:
    vals = [loss_value(decoder_forward(ins.embeddings, params), ins.label)
            for ins in instances if len(ins.label) >= 2]
    return float(np.mean(vals)) if vals else 0.0


def sgd_epochs(instances: list[Instance], params: AfaParams, epochs: int, lr: float,
               log=None) -> list[float]:
    """Plain SGD, one step per instance in a fixed order; returns per-epoch mean step loss."""
    history = []
    usable = [ins for ins in instances if len(ins.label) >= 2]
    for epoch in range(epochs):
        losses = []
        for ins in usable:
            loss, grads = adjacency_loss(ins.embeddings, ins.label, params)
            for name, g in grads.items():
                params.tensors[name] -= lr * g
            losses.append(loss)
        history.append(float(np.mean(losses)) if losses else 0.0)
        if log is not None:
            log(epoch, history[-1])
    return history


def train_decoder(instances: list[Instance], params: AfaParams, epochs: int = 20, lr: float = 1e-2,
                  pretrain: list[Instance] | None = None, pretrain_epochs: int = 0, log=None) -> dict:
    """Optionally pre-train on ground-truth-vertex instances, then train on ``instances``.

    Returns initial and final mean loss over ``instances`` plus the per-epoch history.
    """
    initial = mean_loss(instances, params)
    pre_hist = sgd_epochs(pretrain or [], params, pretrain_epochs, lr, log) if pretrain else []
    hist = sgd_epochs(instances, params, epochs, lr, log)
    return {"initial_loss": initial, "final_loss": mean_loss(instances, params),
            "pretrain_history": pre_hist, "history": hist}


def predict_adjacency(emb: np.ndarray, params: AfaParams, threshold: float = 0.5) -> np.ndarray:
    if len(emb) == 0:
        return np.zeros((0, 0), dtype=bool)
    return binarize_adjacency(score_probability(decoder_forward(emb, params)), threshold)


def agreement(pred: np.ndarray, label: np.ndarray) -> float:
    """Fraction of off-diagonal entries where two adjacency matrices agree."""
    m = len(label)
    if m < 2:
        return 1.0
    off = ~np.eye(m, dtype=bool)
    return float((pred[off] == label[off]).mean())


@dataclass(frozen=True)
class TrainConfig:
    d_model: int = 256
    layers: int = 2
    lr: float = 1e-2
    epochs: int = 20
    pretrain_epochs: int = 0
    instances: int = 10
    patch: int = 256
    roi: int = 64
    seed: int = 0


def train_toy(config: TrainConfig = TrainConfig(), log=None) -> tuple[AfaParams, dict]:
    """Fresh decoder trained on toy patches; ground-truth-vertex pre-training first if asked."""
    params = AfaParams.init(d_model=config.d_model, layers=config.layers, seed=config.seed)
    instances = toy_instances(config.instances, config.seed, config.patch, roi=config.roi)
    pretrain = (toy_instances(config.instances, config.seed, config.patch, True, config.roi)
                if config.pretrain_epochs else None)
    report = train_decoder(instances, params, config.epochs, config.lr, pretrain, config.pretrain_epochs, log)
    return params, report
