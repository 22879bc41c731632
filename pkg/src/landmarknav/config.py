"""Pipeline configuration: one flat record shared by every subcommand.

Defaults are the production values the rest of the package is built
around (10 m segment spacing, 30 m visibility and goal radii, 35..45-node
routes, the full-size model). Desk-scale runs override via a JSON file.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


@dataclass
class PipelineConfig:
    # artifact locations
    osm_path: str = "city.osm.xml"
    out_dir: str = "artifacts"

    # geometry
    spacing_m: float = 10.0
    visibility_radius_m: float = 30.0
    goal_radius_m: float = 30.0

    # route sampling
    min_route_nodes: int = 35
    max_route_nodes: int = 45
    min_intersections: int = 3
    n_routes: int = 50

    # dataset split; the rectangle is [lat_min, lon_min, lat_max, lon_max]
    holdout_rect: list | None = None
    partially_seen: int = 700

    # model
    d_model: int = 256
    heads: int = 8
    layers: int = 6
    dropout: float = 0.1
    ffn_mult: int = 4
    max_len: int = 120
    beam: int = 4

    # training
    batch_size: int = 12
    epochs: int = 100
    patience: int = 10
    lr: float = 0.5
    warmup: int = 4000
    schedule: str = "noam"
    pretrain_size: int = 20000

    # metrics
    success_radius_m: float = 25.0
    dtw_threshold_m: float = 25.0
    seconds_per_node: float = 1.3

    seed: int = 0

    def validate(self) -> "PipelineConfig":
        def positive(name):
            if getattr(self, name) <= 0:
                raise ValueError(f"config: {name} must be positive")

        for name in (
            "spacing_m", "visibility_radius_m", "goal_radius_m", "n_routes",
            "d_model", "heads", "layers", "ffn_mult", "beam", "batch_size",
            "epochs", "patience", "lr", "warmup", "pretrain_size",
            "success_radius_m", "dtw_threshold_m", "seconds_per_node",
        ):
            positive(name)
        if self.min_route_nodes < 2 or self.min_route_nodes > self.max_route_nodes:
            raise ValueError("config: need 2 <= min_route_nodes <= max_route_nodes")
        if self.min_intersections < 0:
            raise ValueError("config: min_intersections must be >= 0")
        if self.partially_seen < 0:
            raise ValueError("config: partially_seen must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("config: dropout must be in [0, 1)")
        if self.max_len < 2:
            raise ValueError("config: max_len must be >= 2")
        if self.d_model % self.heads != 0:
            raise ValueError("config: d_model must be divisible by heads")
        if self.schedule not in ("noam", "constant"):
            raise ValueError(f"config: unknown schedule {self.schedule!r}")
        if self.seed < 0:
            raise ValueError("config: seed must be >= 0")
        if self.holdout_rect is not None:
            rect = self.holdout_rect
            if len(rect) != 4 or not all(isinstance(v, (int, float)) for v in rect):
                raise ValueError("config: holdout_rect must be [lat_min, lon_min, lat_max, lon_max]")
            if not (rect[0] < rect[2] and rect[1] < rect[3]):
                raise ValueError("config: holdout_rect mins must be below maxes")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"config: unknown keys {unknown}")
        return cls(**d).validate()

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"config: {path} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ValueError("config: top level must be a JSON object")
        return cls.from_dict(d)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, ensure_ascii=False)
            fh.write("\n")


def default_summary() -> str:
    """One line per field with its default, for --help output."""
    lines = []
    for f in dataclasses.fields(PipelineConfig):
        lines.append(f"  {f.name} = {f.default!r}")
    return "config defaults:\n" + "\n".join(lines)
