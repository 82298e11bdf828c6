"""Protocol entry point: ``python -m tf_adapter`` as a trainer subprocess."""

from __future__ import annotations

import os
import sys
import threading
from pathlib import Path

from . import wire
from .neutral_config import parse_neutral_config

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")


def main() -> int:
    try:
        command = wire.read_start_command()
        config_path = Path(command["config_path"])
        output_dir = Path(command["output_dir"])
        seed = int(command.get("seed", 0))
    except Exception as exc:
        wire.error(f"bad start command: {exc}")
        return 2

    try:
        config = parse_neutral_config(config_path.read_text("utf-8"))
    except Exception as exc:
        wire.error(f"cannot read config {config_path}: {exc}")
        return 2

    output_dir.mkdir(parents=True, exist_ok=True)
    stop_flag = threading.Event()
    wire.watch_for_stop(stop_flag)

    try:
        from .backend import run_training
        run_training(config, config_path.parent, output_dir, seed, stop_flag)
        return 0
    except ImportError as exc:
        wire.error(f"backend unavailable: {exc}")
        return 3
    except Exception as exc:
        wire.error(f"backend failed: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
