"""Line-delimited JSON wire protocol between the server and any trainer.

Server -> trainer (stdin):
    {"cmd": "start", "config_path": "...", "output_dir": "...", "seed": N}
    {"cmd": "stop"}

Trainer -> server (stdout), one object per line:
    {"type": "progress", "step": N, "loss": X}
    {"type": "checkpoint", "step": N, "path": "..."}   # path under output_dir
    {"type": "log", "level": "info"|"warn"|"error", "message": "..."}
    {"type": "completed", "final_step": N}
    {"type": "error", "message": "..."}

Unknown fields are ignored; a malformed line downgrades to a warn log event;
stream close without a terminal event is the launcher's responsibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass(frozen=True)
class Progress:
    step: int
    loss: float


@dataclass(frozen=True)
class Checkpoint:
    step: int
    path: str


@dataclass(frozen=True)
class LogEvent:
    level: str
    message: str


@dataclass(frozen=True)
class Completed:
    final_step: int


@dataclass(frozen=True)
class Errored:
    message: str


TrainerEvent = Progress | Checkpoint | LogEvent | Completed | Errored

TERMINAL_EVENTS = (Completed, Errored)


def event_to_wire(event: TrainerEvent) -> dict:
    if isinstance(event, Progress):
        return {"type": "progress", "step": event.step, "loss": event.loss}
    if isinstance(event, Checkpoint):
        return {"type": "checkpoint", "step": event.step, "path": event.path}
    if isinstance(event, LogEvent):
        return {"type": "log", "level": event.level, "message": event.message}
    if isinstance(event, Completed):
        return {"type": "completed", "final_step": event.final_step}
    if isinstance(event, Errored):
        return {"type": "error", "message": event.message}
    raise TypeError(f"not a trainer event: {event!r}")


def event_to_line(event: TrainerEvent) -> str:
    return json.dumps(event_to_wire(event), sort_keys=True, separators=(",", ":"))


def parse_trainer_line(line: str) -> TrainerEvent:
    """Parse one trainer stdout line; malformed input becomes a warn log."""
    try:
        data = json.loads(line)
        if not isinstance(data, dict):
            raise ValueError("not an object")
        kind = data["type"]
        if kind == "progress":
            return Progress(step=int(data["step"]), loss=float(data["loss"]))
        if kind == "checkpoint":
            return Checkpoint(step=int(data["step"]), path=str(data["path"]))
        if kind == "log":
            level = str(data["level"])
            if level not in ("info", "warn", "error"):
                raise ValueError(f"bad log level {level!r}")
            return LogEvent(level=level, message=str(data["message"]))
        if kind == "completed":
            return Completed(final_step=int(data["final_step"]))
        if kind == "error":
            return Errored(message=str(data["message"]))
        raise ValueError(f"unknown event type {kind!r}")
    except (ValueError, KeyError, TypeError):
        return LogEvent(level="warn", message=f"malformed trainer line: {line!r}")


def start_command(config_path: str, output_dir: str, seed: int) -> str:
    return json.dumps(
        {"cmd": "start", "config_path": config_path, "output_dir": output_dir,
         "seed": seed},
        sort_keys=True,
    )


def stop_command() -> str:
    return json.dumps({"cmd": "stop"})
