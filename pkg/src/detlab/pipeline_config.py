"""Model catalog, hyperparameter schema, and the neutral config text format.

The rendered config is plain UTF-8, one ``key = value`` per line, lists
comma-separated, ``#`` comments ignored. Trainer adapters translate it into
whatever dialect their backend expects; keys under ``extras.`` pass through
uninterpreted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .augment import AUGMENT_OPS, AugmentationPlan
from .errors import ParseError, ValidationError


class Architecture(str, Enum):
    SSD = "ssd"
    FASTER_RCNN = "faster_rcnn"
    RFCN = "rfcn"
    MASK_RCNN = "mask_rcnn"


class Backbone(str, Enum):
    MOBILENET_V1 = "mobilenet_v1"
    MOBILENET_V2 = "mobilenet_v2"
    INCEPTION_V2 = "inception_v2"
    INCEPTION_V3 = "inception_v3"
    RESNET_50 = "resnet50"
    RESNET_101 = "resnet101"
    RESNET_152 = "resnet152"
    INCEPTION_RESNET_V2 = "inception_resnet_v2"


# Published pairings only, not the full cross product.
_CATALOG: tuple[tuple[Architecture, Backbone], ...] = (
    (Architecture.SSD, Backbone.MOBILENET_V1),
    (Architecture.SSD, Backbone.MOBILENET_V2),
    (Architecture.SSD, Backbone.INCEPTION_V2),
    (Architecture.FASTER_RCNN, Backbone.INCEPTION_V2),
    (Architecture.FASTER_RCNN, Backbone.RESNET_50),
    (Architecture.FASTER_RCNN, Backbone.RESNET_101),
    (Architecture.FASTER_RCNN, Backbone.RESNET_152),
    (Architecture.FASTER_RCNN, Backbone.INCEPTION_RESNET_V2),
    (Architecture.RFCN, Backbone.RESNET_101),
    (Architecture.MASK_RCNN, Backbone.INCEPTION_V2),
    (Architecture.MASK_RCNN, Backbone.RESNET_101),
)


def catalog() -> list[tuple[Architecture, Backbone]]:
    return list(_CATALOG)


@dataclass(frozen=True)
class ModelSpec:
    architecture: Architecture
    backbone: Backbone


@dataclass(frozen=True)
class LrSchedule:
    initial_rate: float
    decay_points: tuple[tuple[int, float], ...] = ()


def learning_rate_at(schedule: LrSchedule, step: int) -> float:
    """Rate of the last decay point with step <= query, else the initial
    rate; the boundary step itself already uses the decayed rate."""
    if step < 0:
        raise ValidationError("step must be >= 0")
    rate = schedule.initial_rate
    for decay_step, decay_rate in schedule.decay_points:
        if step >= decay_step:
            rate = decay_rate
        else:
            break
    return rate


@dataclass
class HyperParams:
    num_steps: int
    num_classes: int
    lr: LrSchedule
    batch_size: int = 1
    checkpoint_every: int = 100
    augmentation: AugmentationPlan | None = None


@dataclass
class TrainingConfig:
    model: ModelSpec
    hp: HyperParams
    labelmap_path: str
    train_record_path: str
    eval_record_path: str
    extras: dict[str, str] = field(default_factory=dict)


def validate(
    cfg: TrainingConfig,
    existing_paths: set[str] | None = None,
    labelmap_size: int | None = None,
) -> list[str]:
    """Collect every violation as ``field: problem``; empty means valid.

    Path existence and labelmap size are only checked when the caller
    supplies workspace context.
    """
    errors: list[str] = []
    if (cfg.model.architecture, cfg.model.backbone) not in _CATALOG:
        errors.append(
            "model: pair "
            f"({cfg.model.architecture.value}, {cfg.model.backbone.value}) "
            "not in catalog"
        )
    hp = cfg.hp
    if hp.num_steps <= 0:
        errors.append("hp.num_steps: must be > 0")
    if hp.batch_size < 1:
        errors.append("hp.batch_size: must be >= 1")
    if hp.num_classes < 1:
        errors.append("hp.num_classes: must be >= 1")
    if hp.checkpoint_every <= 0:
        errors.append("hp.checkpoint_every: must be > 0")
    elif hp.num_steps > 0 and hp.checkpoint_every > hp.num_steps:
        errors.append("hp.checkpoint_every: must be <= num_steps")
    if hp.lr.initial_rate <= 0:
        errors.append("hp.lr.initial_rate: must be > 0")
    last_step = -1
    for i, (step, rate) in enumerate(hp.lr.decay_points):
        if step <= last_step:
            errors.append(f"hp.lr.decay_points[{i}]: steps must strictly increase")
        if rate <= 0:
            errors.append(f"hp.lr.decay_points[{i}]: rate must be > 0")
        if hp.num_steps > 0 and step >= hp.num_steps:
            errors.append(f"hp.lr.decay_points[{i}]: step {step} >= num_steps")
        last_step = step
    if existing_paths is not None:
        for label, path in (
            ("labelmap_path", cfg.labelmap_path),
            ("train_record_path", cfg.train_record_path),
            ("eval_record_path", cfg.eval_record_path),
        ):
            if path not in existing_paths:
                errors.append(f"{label}: '{path}' not found in workspace")
    if labelmap_size is not None and hp.num_classes != labelmap_size:
        errors.append(
            f"hp.num_classes: {hp.num_classes} != labelmap size {labelmap_size}"
        )
    return errors


def paper_equivalent_schedule() -> LrSchedule:
    """The stock two-phase schedule: 2e-4 from step 0, 2e-5 from 150k."""
    return LrSchedule(initial_rate=0.0002, decay_points=((150_000, 0.00002),))


def _fmt_float(value: float) -> str:
    return repr(float(value))


def render_config(cfg: TrainingConfig) -> str:
    """Deterministic text rendering; parse_config is its exact inverse."""
    lines = [
        "# training configuration",
        f"architecture = {cfg.model.architecture.value}",
        f"backbone = {cfg.model.backbone.value}",
        f"num_classes = {cfg.hp.num_classes}",
        f"batch_size = {cfg.hp.batch_size}",
        f"num_steps = {cfg.hp.num_steps}",
        f"checkpoint_every = {cfg.hp.checkpoint_every}",
        f"lr.initial_rate = {_fmt_float(cfg.hp.lr.initial_rate)}",
        "lr.decay_points = "
        + ",".join(f"{s}:{_fmt_float(r)}" for s, r in cfg.hp.lr.decay_points),
        f"labelmap_path = {cfg.labelmap_path}",
        f"train_record_path = {cfg.train_record_path}",
        f"eval_record_path = {cfg.eval_record_path}",
    ]
    plan = cfg.hp.augmentation
    if plan is not None:
        lines += [
            "augment.ops = " + ",".join(op for op in AUGMENT_OPS if op in plan.enabled_ops),
            f"augment.fraction = {_fmt_float(plan.fraction)}",
            f"augment.seed = {plan.seed}",
            f"augment.brightness_delta = {_fmt_float(plan.brightness_delta)}",
            f"augment.contrast_factor = {_fmt_float(plan.contrast_factor)}",
            f"augment.saturation_factor = {_fmt_float(plan.saturation_factor)}",
        ]
    for key in sorted(cfg.extras):
        lines.append(f"extras.{key} = {cfg.extras[key]}")
    return "\n".join(lines) + "\n"


def _parse_kv(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"line {line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def parse_config(text: str) -> TrainingConfig:
    """Parse the rendered text format back into a TrainingConfig."""
    kv = _parse_kv(text)

    def require(key: str) -> str:
        if key not in kv:
            raise ParseError(f"missing key '{key}'")
        return kv[key]

    try:
        architecture = Architecture(require("architecture"))
        backbone = Backbone(require("backbone"))
    except ValueError as exc:
        raise ParseError(str(exc)) from None

    def parse_decay(raw: str) -> tuple[tuple[int, float], ...]:
        if not raw:
            return ()
        points = []
        for part in raw.split(","):
            step_s, _, rate_s = part.partition(":")
            points.append((int(step_s), float(rate_s)))
        return tuple(points)

    try:
        lr = LrSchedule(
            initial_rate=float(require("lr.initial_rate")),
            decay_points=parse_decay(require("lr.decay_points")),
        )
        plan = None
        if "augment.ops" in kv:
            ops = tuple(op for op in kv["augment.ops"].split(",") if op)
            plan = AugmentationPlan(
                enabled_ops=ops,
                fraction=float(require("augment.fraction")),
                seed=int(require("augment.seed")),
                brightness_delta=float(require("augment.brightness_delta")),
                contrast_factor=float(require("augment.contrast_factor")),
                saturation_factor=float(require("augment.saturation_factor")),
            )
        hp = HyperParams(
            num_steps=int(require("num_steps")),
            num_classes=int(require("num_classes")),
            lr=lr,
            batch_size=int(require("batch_size")),
            checkpoint_every=int(require("checkpoint_every")),
            augmentation=plan,
        )
    except ValueError as exc:
        raise ParseError(f"bad numeric value: {exc}") from None

    extras = {
        key[len("extras."):]: value
        for key, value in kv.items()
        if key.startswith("extras.")
    }
    return TrainingConfig(
        model=ModelSpec(architecture, backbone),
        hp=hp,
        labelmap_path=require("labelmap_path"),
        train_record_path=require("train_record_path"),
        eval_record_path=require("eval_record_path"),
        extras=extras,
    )
