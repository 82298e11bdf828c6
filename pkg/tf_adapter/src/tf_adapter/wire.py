"""Trainer-side half of the wire protocol: JSON events out, commands in."""

from __future__ import annotations

import json
import sys
import threading


def emit(event: dict) -> None:
    sys.stdout.write(json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def progress(step: int, loss: float) -> None:
    emit({"type": "progress", "step": step, "loss": float(loss)})


def checkpoint(step: int, path: str) -> None:
    emit({"type": "checkpoint", "step": step, "path": path})


def log(level: str, message: str) -> None:
    emit({"type": "log", "level": level, "message": message})


def completed(final_step: int) -> None:
    emit({"type": "completed", "final_step": final_step})


def error(message: str) -> None:
    emit({"type": "error", "message": message})


def read_start_command(stream=None) -> dict:
    line = (stream or sys.stdin).readline()
    command = json.loads(line)
    if command.get("cmd") != "start":
        raise ValueError(f"expected start command, got {line!r}")
    return command


def watch_for_stop(stop_flag: threading.Event) -> threading.Thread:
    """Background reader that sets the flag on a stop command or EOF."""

    def pump():
        for line in sys.stdin:
            try:
                if json.loads(line).get("cmd") == "stop":
                    break
            except ValueError:
                continue
        stop_flag.set()

    thread = threading.Thread(target=pump, daemon=True)
    thread.start()
    return thread
