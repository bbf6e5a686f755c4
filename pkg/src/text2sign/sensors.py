"""RGB-D sensor registry and requirement-driven selection.

The shipped registry lists the candidate devices for skeleton acquisition;
unspecified datasheet values ("-") are stored as None and rank worst in
comparisons.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

from .errors import SensorSelectionError


@dataclass(frozen=True)
class SensorSpec:
    name: str
    rgb_resolution: tuple[int, int] | None
    depth_resolution: tuple[int, int]
    depth_accuracy_mm: float | None
    depth_range_m: tuple[float, float]
    field_of_view: str
    discontinued: bool

    def __post_init__(self):
        lo, hi = self.depth_range_m
        if not lo < hi:
            raise ValueError(f"{self.name}: depth range min must be below max")
        if self.depth_resolution[0] <= 0 or self.depth_resolution[1] <= 0:
            raise ValueError(f"{self.name}: depth resolution must be positive")

    @property
    def depth_pixels(self) -> int:
        return self.depth_resolution[0] * self.depth_resolution[1]


def _parse_resolution(text: str) -> tuple[int, int] | None:
    if text == "-":
        return None
    w, _, h = text.partition("x")
    return (int(w), int(h))


def load_sensor_registry(path: str | Path) -> list[SensorSpec]:
    sensors = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 tab separated columns")
        name, rgb, depth, accuracy, rng, fov, disc = fields
        lo, _, hi = rng.partition("-")
        sensors.append(SensorSpec(
            name=name,
            rgb_resolution=_parse_resolution(rgb),
            depth_resolution=_parse_resolution(depth),
            depth_accuracy_mm=None if accuracy == "-" else float(accuracy),
            depth_range_m=(float(lo), float(hi)),
            field_of_view=fov,
            discontinued=disc == "yes",
        ))
    return sensors


def default_registry() -> list[SensorSpec]:
    return load_sensor_registry(
        Path(importlib.resources.files("text2sign").joinpath("data/sensor_registry.tsv")))


def select_sensor(
    registry: list[SensorSpec],
    min_range: float,
    max_range: float,
    min_depth_resolution: int = 0,
    allow_discontinued: bool = False,
) -> SensorSpec:
    """Pick the sensor whose working range covers [min_range, max_range].

    Candidates are ranked by depth resolution (total pixels, higher first),
    then depth accuracy (smaller mm figure first, unspecified last), with the
    name as a deterministic tie-break.
    """
    if not registry:
        raise SensorSelectionError("sensor registry is empty")
    candidates = [
        s for s in registry
        if s.depth_range_m[0] <= min_range
        and s.depth_range_m[1] >= max_range
        and s.depth_pixels >= min_depth_resolution
        and (allow_discontinued or not s.discontinued)
    ]
    if not candidates:
        raise SensorSelectionError(
            f"no sensor satisfies range {min_range}-{max_range} m, "
            f"depth resolution >= {min_depth_resolution}px"
            + ("" if allow_discontinued else ", discontinued excluded"))
    candidates.sort(key=lambda s: (
        -s.depth_pixels,
        s.depth_accuracy_mm if s.depth_accuracy_mm is not None else float("inf"),
        s.name,
    ))
    return candidates[0]
