"""Training-job lifecycle: state machine, trainer subprocess, event fan-out.

Trainers run as subprocesses speaking the line-delimited wire protocol, so
any language can provide one; the stock command runs the simulated trainer.
Each job's events are handled in arrival order under a per-job lock and
appended to a persistent JSONL log that subscribers replay then follow live.
Only trainer-emitted events (plus the synthesized error when a trainer dies
without a terminal event) reach the log, which keeps it byte-reproducible
for a fixed config and seed.
"""

from __future__ import annotations

import enum
import json
import logging
import secrets
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

from . import pipeline_config, trainer_protocol
from .errors import NotFoundError, StateError, ValidationError
from .ingest import parse_labelmap_text
from .pipeline_config import TrainingConfig
from .scheduler import GpuScheduler, Lease, QueueEntry
from .trainer_protocol import (
    Checkpoint,
    Completed,
    Errored,
    LogEvent,
    Progress,
    TrainerEvent,
)
from .workspace import WorkspaceStore

logger = logging.getLogger(__name__)


class JobState(str, enum.Enum):
    CREATED = "created"
    QUEUED = "queued"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    CANCELLED = "cancelled"


ALLOWED_TRANSITIONS: frozenset[tuple[JobState, JobState]] = frozenset(
    {
        (JobState.CREATED, JobState.QUEUED),
        (JobState.QUEUED, JobState.RUNNING),
        (JobState.QUEUED, JobState.CANCELLED),
        (JobState.RUNNING, JobState.SUCCEEDED),
        (JobState.RUNNING, JobState.FAILED),
        (JobState.RUNNING, JobState.CANCELLED),
    }
)

TERMINAL_STATES = (JobState.SUCCEEDED, JobState.FAILED, JobState.CANCELLED)


@dataclass
class TrainingJob:
    job_id: str
    workspace_id: str
    config: TrainingConfig
    seed: int
    state: JobState = JobState.CREATED
    current_step: int = 0
    loss_history: list[tuple[int, float]] = field(default_factory=list)
    checkpoints: list[tuple[int, str]] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    started_at: float | None = None
    finished_at: float | None = None
    error_message: str | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "state": self.state.value,
            "seed": self.seed,
            "current_step": self.current_step,
            "num_steps": self.config.hp.num_steps,
            "loss_history": [[s, l] for s, l in self.loss_history],
            "checkpoints": [[s, p] for s, p in self.checkpoints],
            "created_at": self.created_at,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "error_message": self.error_message,
        }


class _EventLog:
    """Append-only per-job event log with blocking readers."""

    def __init__(self, path: Path):
        self._path = path
        self._events: list[dict] = []
        self._closed = False
        self._cond = threading.Condition()
        path.parent.mkdir(parents=True, exist_ok=True)
        self._file = path.open("a", encoding="utf-8")

    def append(self, event: TrainerEvent) -> None:
        wire = trainer_protocol.event_to_wire(event)
        line = json.dumps(wire, sort_keys=True, separators=(",", ":"))
        with self._cond:
            if self._closed:
                return
            self._events.append(wire)
            self._file.write(line + "\n")
            self._file.flush()
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            if not self._closed:
                self._closed = True
                self._file.close()
                self._cond.notify_all()

    def read_from(self, from_seq: int, poll_timeout: float = 0.5) -> Iterator[tuple[int, dict]]:
        """Yield (seq, event) from from_seq, following live until closed."""
        seq = max(0, from_seq)
        while True:
            with self._cond:
                while seq >= len(self._events) and not self._closed:
                    self._cond.wait(timeout=poll_timeout)
                if seq < len(self._events):
                    event = self._events[seq]
                else:
                    return  # closed and drained
            yield seq, event
            seq += 1

    def snapshot(self) -> list[dict]:
        with self._cond:
            return list(self._events)


@dataclass
class _JobRuntime:
    # reentrant: a lease grant can fire on the submitting thread
    lock: threading.RLock = field(default_factory=threading.RLock)
    lease: Lease | None = None
    lease_released: bool = True
    process: subprocess.Popen | None = None
    output_dir: Path | None = None
    release_count: int = 0  # test instrumentation: must never exceed 1


class JobManager:
    def __init__(
        self,
        store: WorkspaceStore,
        scheduler: GpuScheduler,
        data_dir: str | Path,
        trainer_cmd: list[str] | None = None,
        cancel_grace_seconds: float = 10.0,
    ):
        self.store = store
        self.scheduler = scheduler
        self.data_dir = Path(data_dir)
        self.trainer_cmd = trainer_cmd or [sys.executable, "-m", "detlab.sim_trainer"]
        self.cancel_grace_seconds = cancel_grace_seconds
        self._jobs: dict[str, TrainingJob] = {}
        self._runtime: dict[str, _JobRuntime] = {}
        self._logs: dict[str, _EventLog] = {}
        self._registry_lock = threading.Lock()
        scheduler.on_grant = self._on_lease_granted

    # -- registry -------------------------------------------------------

    def get_job(self, job_id: str) -> TrainingJob:
        with self._registry_lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise NotFoundError(f"no such job: {job_id}")
        return job

    def get_job_for_workspace(self, job_id: str, workspace_id: str) -> TrainingJob:
        job = self.get_job(job_id)
        if job.workspace_id != workspace_id:
            raise NotFoundError(f"no such job: {job_id}")  # no existence leak
        return job

    def list_jobs(self, workspace_id: str) -> list[TrainingJob]:
        with self._registry_lock:
            jobs = [j for j in self._jobs.values() if j.workspace_id == workspace_id]
        return sorted(jobs, key=lambda j: j.created_at)

    def _log_for(self, job_id: str) -> _EventLog:
        with self._registry_lock:
            return self._logs[job_id]

    # -- lifecycle -------------------------------------------------------

    def create_job(
        self, workspace_id: str, config: TrainingConfig, seed: int = 0
    ) -> TrainingJob:
        labelmap_size = None
        existing = self.store.file_paths(workspace_id)
        if config.labelmap_path in existing:
            text = self.store.get_file(workspace_id, config.labelmap_path)
            labelmap_size = len(parse_labelmap_text(text.decode("utf-8")))
        errors = pipeline_config.validate(config, existing, labelmap_size)
        if errors:
            raise ValidationError("invalid training config", details=errors)

        job = TrainingJob(
            job_id=secrets.token_hex(8),
            workspace_id=workspace_id,
            config=config,
            seed=seed,
        )
        log_path = self.data_dir / "joblogs" / f"{job.job_id}.events.jsonl"
        with self._registry_lock:
            self._jobs[job.job_id] = job
            self._runtime[job.job_id] = _JobRuntime()
            self._logs[job.job_id] = _EventLog(log_path)
        return job

    def _transition(self, job: TrainingJob, target: JobState) -> None:
        if (job.state, target) not in ALLOWED_TRANSITIONS:
            raise StateError(
                f"job {job.job_id}: cannot go {job.state.value} -> {target.value}"
            )
        job.state = target

    def start_job(self, job_id: str) -> QueueEntry:
        job = self.get_job(job_id)
        runtime = self._runtime[job_id]
        with runtime.lock:
            self._transition(job, JobState.QUEUED)
            return self.scheduler.submit(job_id)

    def _on_lease_granted(self, lease: Lease) -> None:
        job = self.get_job(lease.job_id)
        runtime = self._runtime[job.job_id]
        with runtime.lock:
            if job.state != JobState.QUEUED:
                # cancelled between dispatch and launch: give the gpu back
                self.scheduler.release(lease.lease_id)
                return
            runtime.lease = lease
            runtime.lease_released = False
            self._transition(job, JobState.RUNNING)
            job.started_at = time.time()
            self._launch_trainer(job, runtime)

    def _launch_trainer(self, job: TrainingJob, runtime: _JobRuntime) -> None:
        scratch = self.data_dir / "scratch" / job.job_id
        output_dir = scratch / "out"
        output_dir.mkdir(parents=True, exist_ok=True)
        # materialize the referenced data next to the config so any trainer
        # (a separate process with no workspace access) can read it; paths in
        # the trainer's view of the config are relative to the config file
        data_dir = scratch / "data"
        data_dir.mkdir(parents=True, exist_ok=True)
        materialized = {
            "labelmap_path": "data/labelmap.txt",
            "train_record_path": "data/train.record",
            "eval_record_path": "data/eval.record",
        }
        for attr, local in materialized.items():
            content = self.store.get_file(job.workspace_id, getattr(job.config, attr))
            (scratch / local).write_bytes(content)
        trainer_view = replace(job.config, **materialized)
        config_path = scratch / "pipeline.txt"
        config_path.write_text(pipeline_config.render_config(trainer_view), "utf-8")
        runtime.output_dir = output_dir

        process = subprocess.Popen(
            self.trainer_cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        runtime.process = process
        start_line = trainer_protocol.start_command(
            str(config_path), str(output_dir), job.seed
        )
        try:
            process.stdin.write(start_line + "\n")
            process.stdin.flush()
        except OSError:
            pass  # immediate crash: the reader thread will surface it
        threading.Thread(
            target=self._pump_events, args=(job.job_id, process), daemon=True
        ).start()

    def _pump_events(self, job_id: str, process: subprocess.Popen) -> None:
        for line in process.stdout:
            line = line.strip()
            if not line:
                continue
            self.handle_event(job_id, trainer_protocol.parse_trainer_line(line))
        process.wait()
        job = self.get_job(job_id)
        if job.state == JobState.RUNNING:
            self.handle_event(
                job_id, Errored(message="trainer exited without terminal event")
            )

    # -- event handling ----------------------------------------------------

    def handle_event(self, job_id: str, event: TrainerEvent) -> TrainingJob:
        job = self.get_job(job_id)
        runtime = self._runtime[job_id]
        with runtime.lock:
            if job.state != JobState.RUNNING:
                logger.warning(
                    "protocol error: %s event for job %s in state %s ignored",
                    type(event).__name__,
                    job_id,
                    job.state.value,
                )
                return job
            if runtime.lease is not None and not runtime.lease_released:
                try:
                    self.scheduler.heartbeat(runtime.lease.lease_id)
                except NotFoundError:
                    pass

            if isinstance(event, Progress):
                if event.step < job.current_step:
                    logger.warning(
                        "protocol error: step went backwards (%d < %d) for job %s",
                        event.step,
                        job.current_step,
                        job_id,
                    )
                    return job
                job.current_step = event.step
                if not job.loss_history or event.step > job.loss_history[-1][0]:
                    job.loss_history.append((event.step, event.loss))
                self._log_for(job_id).append(event)
            elif isinstance(event, Checkpoint):
                self._register_checkpoint(job, runtime, event)
                self._log_for(job_id).append(event)
            elif isinstance(event, LogEvent):
                self._log_for(job_id).append(event)
            elif isinstance(event, Completed):
                job.current_step = max(job.current_step, event.final_step)
                self._log_for(job_id).append(event)
                self._finalize(job, runtime, JobState.SUCCEEDED)
            elif isinstance(event, Errored):
                job.error_message = event.message
                self._log_for(job_id).append(event)
                self._finalize(job, runtime, JobState.FAILED)
            return job

    def _register_checkpoint(
        self, job: TrainingJob, runtime: _JobRuntime, event: Checkpoint
    ) -> None:
        if runtime.output_dir is None:
            return
        source = runtime.output_dir / event.path
        try:
            content = source.read_bytes()
        except OSError as exc:
            logger.warning("checkpoint file missing for job %s: %s", job.job_id, exc)
            return
        rel_path = f"jobs/{job.job_id}/checkpoints/{Path(event.path).name}"
        self.store.put_file(job.workspace_id, rel_path, content, kind="checkpoint")
        job.checkpoints.append((event.step, rel_path))

    def _release_lease(self, runtime: _JobRuntime) -> None:
        if runtime.lease is not None and not runtime.lease_released:
            runtime.lease_released = True
            runtime.release_count += 1
            try:
                self.scheduler.release(runtime.lease.lease_id)
            except NotFoundError:
                pass  # reaped by heartbeat expiry

    def _finalize(
        self, job: TrainingJob, runtime: _JobRuntime, target: JobState
    ) -> None:
        self._transition(job, target)
        job.finished_at = time.time()
        self._release_lease(runtime)
        self._log_for(job.job_id).close()

    def cancel_job(self, job_id: str) -> TrainingJob:
        job = self.get_job(job_id)
        runtime = self._runtime[job_id]
        with runtime.lock:
            if job.state == JobState.QUEUED:
                try:
                    self.scheduler.withdraw(job_id)
                except NotFoundError:
                    pass  # lease granted concurrently; treated as running below
                else:
                    self._finalize(job, runtime, JobState.CANCELLED)
                    return job
            if job.state == JobState.RUNNING:
                process = runtime.process
                if process is not None and process.poll() is None:
                    try:
                        process.stdin.write(trainer_protocol.stop_command() + "\n")
                        process.stdin.flush()
                    except OSError:
                        pass
                    threading.Thread(
                        target=self._enforce_grace, args=(process,), daemon=True
                    ).start()
                self._finalize(job, runtime, JobState.CANCELLED)
                return job
            raise StateError(
                f"job {job_id}: cannot cancel in state {job.state.value}"
            )

    def _enforce_grace(self, process: subprocess.Popen) -> None:
        try:
            process.wait(timeout=self.cancel_grace_seconds)
        except subprocess.TimeoutExpired:
            process.kill()

    # -- streaming ---------------------------------------------------------

    def stream_events(
        self, job_id: str, from_seq: int = 0, poll_timeout: float = 0.5
    ) -> Iterator[tuple[int, dict]]:
        self.get_job(job_id)  # raises NotFoundError for unknown jobs
        return self._log_for(job_id).read_from(from_seq, poll_timeout)

    def event_snapshot(self, job_id: str) -> list[dict]:
        self.get_job(job_id)
        return self._log_for(job_id).snapshot()

    def wait_for_terminal(self, job_id: str, timeout: float = 30.0) -> TrainingJob:
        """Poll until the job leaves the live states (test/CLI convenience)."""
        deadline = time.time() + timeout
        while time.time() < deadline:
            job = self.get_job(job_id)
            if job.state in TERMINAL_STATES:
                return job
            time.sleep(0.01)
        raise TimeoutError(f"job {job_id} still {self.get_job(job_id).state.value}")
