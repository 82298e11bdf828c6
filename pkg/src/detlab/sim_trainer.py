"""Deterministic simulated trainer.

Loss follows a seeded exponential decay so the whole training flow runs
end-to-end in milliseconds with no learning backend:

    loss(step) = floor + (start - floor) * exp(-step / tau) + noise_amp * eps

with eps a hash-seeded uniform in [-1, 1], tau = num_steps / 5. Progress is
emitted at step 0 and every max(1, num_steps // 100) steps; checkpoints at
every ``checkpoint_every`` multiple plus an unconditional final checkpoint.

Runs in-process as a generator (``sim_trainer_run``) or as a subprocess
speaking the trainer wire protocol (``python -m detlab.sim_trainer``).
Config keys under ``extras.`` steer simulation and fault injection:

    sim.noise_amp      loss noise amplitude (default 0)
    sim.fail_at_step   emit a terminal error at this step
    sim.crash_at_step  exit abruptly at this step, no terminal event
    sim.step_delay_ms  sleep per progress emission (live-view demos)
"""

from __future__ import annotations

import hashlib
import math
import sys
import threading
from typing import Iterator

from .pipeline_config import TrainingConfig, parse_config
from .trainer_protocol import (
    Checkpoint,
    Completed,
    Errored,
    LogEvent,
    Progress,
    TrainerEvent,
    event_to_line,
)

LOSS_START = 10.0
LOSS_FLOOR = 0.5


def _noise(seed: int, step: int) -> float:
    digest = hashlib.blake2b(f"{seed}:{step}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / (2**64 - 1) * 2.0 - 1.0


def sim_loss(step: int, num_steps: int, seed: int, noise_amp: float) -> float:
    tau = num_steps / 5.0
    base = LOSS_FLOOR + (LOSS_START - LOSS_FLOOR) * math.exp(-step / tau)
    if noise_amp > 0.0:
        return base + noise_amp * _noise(seed, step)
    return base


def _emission_steps(num_steps: int) -> list[int]:
    period = max(1, num_steps // 100)
    steps = list(range(0, num_steps, period))
    steps.append(num_steps)
    return steps


def checkpoint_name(step: int, final: bool = False) -> str:
    return f"ckpt-final-{step:06d}.ckpt" if final else f"ckpt-{step:06d}.ckpt"


def sim_trainer_run(
    config: TrainingConfig,
    seed: int,
    noise_amp: float = 0.0,
    fail_at_step: int | None = None,
) -> Iterator[TrainerEvent]:
    """Yield the full deterministic event stream for one training run."""
    num_steps = config.hp.num_steps
    cadence = config.hp.checkpoint_every
    emit_checkpoint_at = {s for s in range(cadence, num_steps + 1, cadence)}

    for step in _emission_steps(num_steps):
        if fail_at_step is not None and step >= fail_at_step:
            yield Errored(message=f"injected failure at step {step}")
            return
        yield Progress(step=step, loss=sim_loss(step, num_steps, seed, noise_amp))
        for ckpt_step in sorted(emit_checkpoint_at):
            if ckpt_step <= step:
                yield Checkpoint(step=ckpt_step, path=checkpoint_name(ckpt_step))
                emit_checkpoint_at.discard(ckpt_step)
    # final snapshot is always written, even when the cadence already hit it
    yield Checkpoint(step=num_steps, path=checkpoint_name(num_steps, final=True))
    yield Completed(final_step=num_steps)


def _checkpoint_payload(step: int, seed: int, config: TrainingConfig) -> bytes:
    header = (
        f"simulated checkpoint\nstep={step}\nseed={seed}\n"
        f"model={config.model.architecture.value}/{config.model.backbone.value}\n"
    ).encode()
    filler = hashlib.blake2b(header, digest_size=32).digest()
    return header + filler


def _watch_for_stop(stop_flag: threading.Event) -> None:
    import json

    for line in sys.stdin:
        try:
            if json.loads(line).get("cmd") == "stop":
                stop_flag.set()
                return
        except (ValueError, AttributeError):
            continue
    stop_flag.set()  # stdin closed: treat as stop request


def main() -> int:
    import json
    import os
    import time
    from pathlib import Path

    line = sys.stdin.readline()
    try:
        command = json.loads(line)
        assert command.get("cmd") == "start"
        config_path = command["config_path"]
        output_dir = Path(command["output_dir"])
        seed = int(command.get("seed", 0))
    except Exception:
        print(event_to_line(Errored(message=f"bad start command: {line!r}")), flush=True)
        return 2

    try:
        config = parse_config(Path(config_path).read_text("utf-8"))
    except Exception as exc:
        print(event_to_line(Errored(message=f"cannot read config: {exc}")), flush=True)
        return 2

    extras = config.extras
    noise_amp = float(extras.get("sim.noise_amp", "0"))
    fail_at = extras.get("sim.fail_at_step")
    crash_at = extras.get("sim.crash_at_step")
    delay_s = float(extras.get("sim.step_delay_ms", "0")) / 1000.0

    output_dir.mkdir(parents=True, exist_ok=True)
    stop_flag = threading.Event()
    threading.Thread(target=_watch_for_stop, args=(stop_flag,), daemon=True).start()

    stream = sim_trainer_run(
        config, seed, noise_amp, int(fail_at) if fail_at is not None else None
    )
    for event in stream:
        if stop_flag.is_set():
            print(event_to_line(LogEvent("info", "stop received")), flush=True)
            return 0
        if isinstance(event, Progress):
            if crash_at is not None and event.step >= int(crash_at):
                os._exit(13)  # simulate a hard trainer crash: no terminal event
            if delay_s:
                time.sleep(delay_s)
        if isinstance(event, Checkpoint):
            (output_dir / event.path).write_bytes(
                _checkpoint_payload(event.step, seed, config)
            )
        print(event_to_line(event), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
