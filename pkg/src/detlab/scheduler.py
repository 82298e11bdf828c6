"""FIFO GPU-lease scheduler.

One serialized decision point: every mutation happens under a single lock
and re-runs dispatch before returning, so a free GPU and a non-empty queue
never coexist across a step boundary. Grant callbacks fire after the lock is
released; a callback may safely call back into the scheduler.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass
from typing import Callable

from .errors import ConflictError, NotFoundError


@dataclass(frozen=True)
class Lease:
    lease_id: str
    job_id: str
    gpu_id: str
    acquired_at: float


@dataclass(frozen=True)
class QueueEntry:
    job_id: str
    enqueued_at: float
    position: int


@dataclass
class SchedulerStatus:
    queued: list[QueueEntry]
    active: list[Lease]
    free_gpus: list[str]
    capacity: int


class GpuScheduler:
    def __init__(
        self,
        gpu_ids: list[str] | None = None,
        pool_size: int = 1,
        heartbeat_timeout: float | None = None,
    ):
        if gpu_ids is None:
            gpu_ids = [f"gpu{i}" for i in range(pool_size)]
        if not gpu_ids or len(set(gpu_ids)) != len(gpu_ids):
            raise ValueError("gpu ids must be unique and non-empty")
        self._lock = threading.Lock()
        self._free: list[str] = list(gpu_ids)
        self._capacity = len(gpu_ids)
        self._queue: list[tuple[str, float]] = []  # (job_id, enqueued_at)
        self._leases: dict[str, Lease] = {}
        self._lease_by_job: dict[str, str] = {}
        self._heartbeats: dict[str, float] = {}
        self.heartbeat_timeout = heartbeat_timeout
        self.on_grant: Callable[[Lease], None] | None = None

    # -- internal: caller must hold the lock ---------------------------

    def _dispatch_locked(self) -> list[Lease]:
        granted = []
        while self._free and self._queue:
            job_id, _ = self._queue.pop(0)
            gpu_id = self._free.pop(0)
            lease = Lease(
                lease_id=secrets.token_hex(8),
                job_id=job_id,
                gpu_id=gpu_id,
                acquired_at=time.time(),
            )
            self._leases[lease.lease_id] = lease
            self._lease_by_job[job_id] = lease.lease_id
            self._heartbeats[lease.lease_id] = lease.acquired_at
            granted.append(lease)
        return granted

    def _notify(self, granted: list[Lease]) -> None:
        if self.on_grant is not None:
            for lease in granted:
                self.on_grant(lease)

    # -- public apis ----------------------------------------------------

    def submit(self, job_id: str) -> QueueEntry:
        with self._lock:
            if job_id in self._lease_by_job or any(
                j == job_id for j, _ in self._queue
            ):
                raise ConflictError(f"job '{job_id}' already queued or leased")
            entry = QueueEntry(job_id, time.time(), len(self._queue))
            self._queue.append((entry.job_id, entry.enqueued_at))
            granted = self._dispatch_locked()
        self._notify(granted)
        return entry

    def dispatch(self) -> list[Lease]:
        with self._lock:
            granted = self._dispatch_locked()
        self._notify(granted)
        return granted

    def release(self, lease_id: str) -> None:
        with self._lock:
            lease = self._leases.pop(lease_id, None)
            if lease is None:
                raise NotFoundError(f"no active lease '{lease_id}'")
            self._lease_by_job.pop(lease.job_id, None)
            self._heartbeats.pop(lease_id, None)
            self._free.append(lease.gpu_id)
            granted = self._dispatch_locked()
        self._notify(granted)

    def withdraw(self, job_id: str) -> None:
        """Remove a still-queued job (cancellation before any lease)."""
        with self._lock:
            for i, (queued_id, _) in enumerate(self._queue):
                if queued_id == job_id:
                    self._queue.pop(i)
                    return
        raise NotFoundError(f"job '{job_id}' not queued")

    def heartbeat(self, lease_id: str) -> None:
        with self._lock:
            if lease_id not in self._leases:
                raise NotFoundError(f"no active lease '{lease_id}'")
            self._heartbeats[lease_id] = time.time()

    def reap_expired(self, now: float | None = None) -> list[Lease]:
        """Forfeit leases whose holder stopped heartbeating."""
        if self.heartbeat_timeout is None:
            return []
        now = time.time() if now is None else now
        with self._lock:
            expired = [
                self._leases[lease_id]
                for lease_id, last in self._heartbeats.items()
                if now - last > self.heartbeat_timeout
            ]
            for lease in expired:
                self._leases.pop(lease.lease_id, None)
                self._lease_by_job.pop(lease.job_id, None)
                self._heartbeats.pop(lease.lease_id, None)
                self._free.append(lease.gpu_id)
            granted = self._dispatch_locked()
        self._notify(granted)
        return expired

    def lease_for_job(self, job_id: str) -> Lease | None:
        with self._lock:
            lease_id = self._lease_by_job.get(job_id)
            return self._leases.get(lease_id) if lease_id else None

    def status(self) -> SchedulerStatus:
        with self._lock:
            return SchedulerStatus(
                queued=[
                    QueueEntry(job_id, at, pos)
                    for pos, (job_id, at) in enumerate(self._queue)
                ],
                active=list(self._leases.values()),
                free_gpus=list(self._free),
                capacity=self._capacity,
            )
