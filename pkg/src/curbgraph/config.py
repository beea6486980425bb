"""Pipeline configuration: one flat ``key = value`` file, validated on load."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import tomli

from .afa.train import TrainConfig
from .metrics import MetricConfig
from .synth import CitySpec, KeypointParams, NoiseSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    workers: int = 1
    # city and tiling
    tiles: tuple[int, int] = (2, 2)
    tile_size: int = 1000
    core_size: int = 1000
    margin: int = 50
    block_spacing: tuple[float, float] = (180.0, 320.0)
    road_width: tuple[float, float] = (24.0, 40.0)
    corner_radius: tuple[float, float] = (10.0, 18.0)
    round_prob: float = 0.5
    irregular_prob: float = 0.15
    # simulated inference noise
    jitter_sigma: float = 0.0
    fp_rate: float = 0.0
    dropout: float = 0.0
    # keypoints
    sigma: float = 3.0
    angle_threshold: float = 30.0
    arc_window: float = 8.0
    gather: float = 6.0
    aux_spacing: float = 256.0          # 0 disables the aux grid
    corner_clearance: float = 9.0
    # vertex extraction
    binarize_threshold: float = 0.3
    short_skeleton_len: int = 5
    ridge_fraction: float = 0.9
    refine_radius: int = 3
    # adjacency
    mode: str = "oracle"
    oracle_snap_radius: float = 5.0
    adjacency_threshold: float = 0.5
    roi: int = 64
    d_model: int = 256
    layers: int = 2
    lr: float = 0.01
    epochs: int = 20
    pretrain_epochs: int = 2
    train_instances: int = 10
    train_patch: int = 256
    # stitching
    merge_radius: float = 2.0
    connector_step: float = 4.0
    # metrics
    relax_ratios: tuple[float, ...] = (2.0, 5.0, 10.0)
    tlts_phi: float = 0.05
    sample_pairs: int = 500
    snap_radius: float = 20.0

    # -- views for the individual modules --------------------------------

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.jitter_sigma, self.fp_rate, self.dropout)

    @property
    def city(self) -> CitySpec:
        return CitySpec(seed=self.seed, tiles=tuple(self.tiles), tile_size=self.tile_size,
                        block_spacing=tuple(self.block_spacing), road_width=tuple(self.road_width),
                        corner_radius=tuple(self.corner_radius), round_prob=self.round_prob,
                        irregular_prob=self.irregular_prob, noise=self.noise)

    @property
    def keypoint_params(self) -> KeypointParams:
        return KeypointParams(sigma=self.sigma, angle_threshold=self.angle_threshold,
                              arc_window=self.arc_window, gather=self.gather,
                              aux_spacing=self.aux_spacing or None, core_size=self.core_size,
                              corner_clearance=self.corner_clearance)

    @property
    def metric_config(self) -> MetricConfig:
        return MetricConfig(relax_ratios=tuple(self.relax_ratios), tlts_phi=self.tlts_phi,
                            sample_pairs=self.sample_pairs, snap_radius=self.snap_radius, seed=self.seed)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(d_model=self.d_model, layers=self.layers, lr=self.lr, epochs=self.epochs,
                           pretrain_epochs=self.pretrain_epochs, instances=self.train_instances,
                           patch=self.train_patch, roi=self.roi, seed=self.seed)

    def extract_kwargs(self) -> dict:
        return {"binarize_threshold": self.binarize_threshold, "short_skeleton_len": self.short_skeleton_len,
                "ridge_fraction": self.ridge_fraction, "refine_radius": self.refine_radius}

    # -- validation and IO --------------------------------------------------

    def validate(self) -> PipelineConfig:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.workers >= 1, "workers must be >= 1")
        need(self.seed >= 0, "seed must be >= 0")
        need(self.core_size > 0 and self.tile_size % self.core_size == 0,
             "tile_size must be a positive multiple of core_size")
        need(self.margin >= 0, "margin must be >= 0")
        need(0 < self.angle_threshold < 180, "angle_threshold must be in (0, 180)")
        need(self.arc_window > 0 and self.gather > 0 and self.sigma > 0, "arc_window, gather and sigma must be positive")
        need(self.aux_spacing >= 0, "aux_spacing must be >= 0 (0 disables)")
        need(0 < self.binarize_threshold < 1, "binarize_threshold must be in (0, 1)")
        need(self.short_skeleton_len >= 1, "short_skeleton_len must be >= 1")
        need(0 <= self.ridge_fraction < 1, "ridge_fraction must be in [0, 1)")
        need(self.mode in ("oracle", "afa"), f"mode must be 'oracle' or 'afa', got {self.mode!r}")
        need(self.oracle_snap_radius > 0, "oracle_snap_radius must be > 0")
        need(self.roi > 0 and self.roi % 2 == 0, "roi must be positive and even")
        need(self.d_model > 0 and self.layers >= 0 and self.lr > 0, "invalid decoder hyperparameters")
        need(self.epochs >= 0 and self.pretrain_epochs >= 0 and self.train_instances >= 1, "invalid training schedule")
        need(self.merge_radius > 0 and self.connector_step > 0, "merge_radius and connector_step must be positive")
        self.city.validate()
        self.metric_config.validate()
        return self

    @classmethod
    def from_mapping(cls, data: dict, source: str = "<config>") -> PipelineConfig:
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"{source}: unknown key {key!r}")
            default = getattr(cls, key)
            if isinstance(value, dict):
                raise ConfigError(f"{source}: {key} must be a scalar or list, not a table")
            try:
                if isinstance(default, tuple):
                    if not isinstance(value, list):
                        raise TypeError("expected a list")
                    value = tuple(type(default[0])(v) for v in value)
                    if key != "relax_ratios" and len(value) != len(default):
                        raise TypeError(f"expected {len(default)} values")
                elif isinstance(default, bool) or isinstance(default, str):
                    if not isinstance(value, type(default)):
                        raise TypeError(f"expected {type(default).__name__}")
                elif isinstance(default, int):
                    if isinstance(value, bool) or not isinstance(value, int):
                        raise TypeError("expected an integer")
                elif isinstance(default, float):
                    if isinstance(value, bool) or not isinstance(value, (int, float)):
                        raise TypeError("expected a number")
                    value = float(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{source}: bad value for {key}: {exc}") from exc
            kwargs[key] = value
        cfg = cls(**kwargs)
        try:
            return cfg.validate()
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from exc

    @classmethod
    def load(cls, path) -> PipelineConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomli.loads(path.read_text(encoding="utf-8"))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: malformed config: {exc}") from exc
        return cls.from_mapping(data, str(path))

    def with_overrides(self, **kw) -> PipelineConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw).validate() if kw else self

    def to_text(self, skip=()) -> str:
        lines = []
        for k, v in asdict(self).items():
            if k in skip:
                continue
            if isinstance(v, (tuple, list)):
                lines.append(f"{k} = [{', '.join(repr(x) for x in v)}]")
            elif isinstance(v, str):
                lines.append(f'{k} = "{v}"')
            else:
                lines.append(f"{k} = {v!r}")
        return "\n".join(lines) + "\n"
