"""Reader for the server's neutral training-config text format.

Grammar (documented by the server): UTF-8, one ``key = value`` per line,
``#`` comments ignored, lists comma-separated, LR decay points as
``step:rate`` pairs. This is an independent reader; it shares no code with
the server.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

KNOWN_KEYS = {
    "architecture",
    "backbone",
    "num_classes",
    "batch_size",
    "num_steps",
    "checkpoint_every",
    "lr.initial_rate",
    "lr.decay_points",
    "labelmap_path",
    "train_record_path",
    "eval_record_path",
    "augment.ops",
    "augment.fraction",
    "augment.seed",
    "augment.brightness_delta",
    "augment.contrast_factor",
    "augment.saturation_factor",
}


@dataclass
class NeutralConfig:
    architecture: str
    backbone: str
    num_classes: int
    batch_size: int
    num_steps: int
    checkpoint_every: int
    initial_rate: float
    decay_points: list[tuple[int, float]]
    labelmap_path: str
    train_record_path: str
    eval_record_path: str
    extras: dict[str, str] = field(default_factory=dict)
    unknown_keys: list[str] = field(default_factory=list)

    def learning_rate_at(self, step: int) -> float:
        rate = self.initial_rate
        for decay_step, decay_rate in self.decay_points:
            if step >= decay_step:
                rate = decay_rate
        return rate

    def resolve(self, config_dir: Path, rel_path: str) -> Path:
        path = Path(rel_path)
        return path if path.is_absolute() else config_dir / path


def parse_neutral_config(text: str) -> NeutralConfig:
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    def require(key: str) -> str:
        if key not in values:
            raise ValueError(f"config missing required key '{key}'")
        return values[key]

    decay_points = []
    for part in values.get("lr.decay_points", "").split(","):
        if not part:
            continue
        step_text, _, rate_text = part.partition(":")
        decay_points.append((int(step_text), float(rate_text)))

    extras = {
        key[len("extras."):]: value
        for key, value in values.items()
        if key.startswith("extras.")
    }
    # never silently drop a key we do not understand
    unknown = [
        key
        for key in values
        if key not in KNOWN_KEYS and not key.startswith("extras.")
    ]
    return NeutralConfig(
        architecture=require("architecture"),
        backbone=require("backbone"),
        num_classes=int(require("num_classes")),
        batch_size=int(require("batch_size")),
        num_steps=int(require("num_steps")),
        checkpoint_every=int(require("checkpoint_every")),
        initial_rate=float(require("lr.initial_rate")),
        decay_points=decay_points,
        labelmap_path=require("labelmap_path"),
        train_record_path=require("train_record_path"),
        eval_record_path=require("eval_record_path"),
        extras=extras,
        unknown_keys=unknown,
    )
