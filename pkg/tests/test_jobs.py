import random
import time

import pytest

from detlab.augment import AugmentationPlan
from detlab.errors import NotFoundError, StateError, ValidationError
from detlab.ingest import LabelMap, render_labelmap_text
from detlab.jobs import ALLOWED_TRANSITIONS, JobManager, JobState
from detlab.pipeline_config import (
    Architecture,
    Backbone,
    HyperParams,
    LrSchedule,
    ModelSpec,
    TrainingConfig,
)
from detlab.scheduler import GpuScheduler
from detlab.sim_trainer import LOSS_START, sim_loss, sim_trainer_run
from detlab.trainer_protocol import (
    Checkpoint,
    Completed,
    Errored,
    LogEvent,
    Progress,
    event_to_line,
    parse_trainer_line,
)
from detlab.workspace import WorkspaceStore


def make_config(num_steps=200, checkpoint_every=50, extras=None):
    return TrainingConfig(
        model=ModelSpec(Architecture.SSD, Backbone.MOBILENET_V2),
        hp=HyperParams(
            num_steps=num_steps,
            num_classes=2,
            lr=LrSchedule(0.0002, ((max(1, num_steps // 2), 0.00002),)),
            batch_size=1,
            checkpoint_every=checkpoint_every,
            augmentation=AugmentationPlan(enabled_ops=("flip_h",), seed=1),
        ),
        labelmap_path="out/labelmap.txt",
        train_record_path="out/train.record",
        eval_record_path="out/eval.record",
        extras=extras or {},
    )


@pytest.fixture
def env(tmp_path):
    store = WorkspaceStore(tmp_path / "storage", pbkdf2_iterations=100)
    _, ws = store.create_account("alice", "s3cretpass")
    store.put_file(
        ws.workspace_id,
        "out/labelmap.txt",
        render_labelmap_text(LabelMap(((1, "box"), (2, "disc")))).encode(),
    )
    store.put_file(ws.workspace_id, "out/train.record", b"rec")
    store.put_file(ws.workspace_id, "out/eval.record", b"rec")
    scheduler = GpuScheduler(pool_size=1)
    manager = JobManager(
        store, scheduler, tmp_path / "data", cancel_grace_seconds=0.5
    )
    return store, ws, scheduler, manager


class TestProtocol:
    def test_round_trip_all_event_types(self):
        events = [
            Progress(step=5, loss=2.5),
            Checkpoint(step=50, path="ckpt-000050.ckpt"),
            LogEvent(level="info", message="hello"),
            Completed(final_step=200),
            Errored(message="boom"),
        ]
        for event in events:
            assert parse_trainer_line(event_to_line(event)) == event

    def test_malformed_line_becomes_warn_log(self):
        event = parse_trainer_line("{nonsense")
        assert isinstance(event, LogEvent) and event.level == "warn"

    def test_unknown_type_becomes_warn_log(self):
        event = parse_trainer_line('{"type": "telemetry", "x": 1}')
        assert isinstance(event, LogEvent) and event.level == "warn"

    def test_unknown_fields_ignored(self):
        event = parse_trainer_line(
            '{"type": "progress", "step": 3, "loss": 1.5, "gpu_temp": 80}'
        )
        assert event == Progress(step=3, loss=1.5)


class TestSimTrainer:
    def test_loss_starts_at_ten(self):
        assert sim_loss(0, 200, seed=1, noise_amp=0.0) == LOSS_START

    def test_loss_strictly_decreasing_without_noise(self):
        events = list(sim_trainer_run(make_config(), seed=3))
        losses = [e.loss for e in events if isinstance(e, Progress)]
        assert len(losses) > 2
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_deterministic_streams(self):
        config = make_config(extras={"sim.noise_amp": "0.05"})
        # the generator itself reads noise from its argument, not extras
        a = [event_to_line(e) for e in sim_trainer_run(config, 7, noise_amp=0.05)]
        b = [event_to_line(e) for e in sim_trainer_run(config, 7, noise_amp=0.05)]
        assert a == b

    def test_different_seed_changes_noisy_stream(self):
        config = make_config()
        a = [event_to_line(e) for e in sim_trainer_run(config, 1, noise_amp=0.1)]
        b = [event_to_line(e) for e in sim_trainer_run(config, 2, noise_amp=0.1)]
        assert a != b

    def test_checkpoint_cadence_plus_final(self):
        events = list(sim_trainer_run(make_config(200, 50), seed=0))
        checkpoints = [e for e in events if isinstance(e, Checkpoint)]
        assert [c.step for c in checkpoints] == [50, 100, 150, 200, 200]
        assert checkpoints[-1].path.startswith("ckpt-final-")

    def test_terminal_event_is_last_and_unique(self):
        events = list(sim_trainer_run(make_config(), seed=0))
        assert isinstance(events[-1], Completed)
        terminals = [e for e in events if isinstance(e, (Completed, Errored))]
        assert len(terminals) == 1

    def test_progress_steps_non_decreasing(self):
        events = list(sim_trainer_run(make_config(197, 41), seed=0))
        steps = [e.step for e in events if isinstance(e, Progress)]
        assert steps == sorted(steps)
        assert steps[-1] == 197

    def test_fault_injection(self):
        events = list(sim_trainer_run(make_config(), seed=0, fail_at_step=100))
        assert isinstance(events[-1], Errored)
        assert not any(isinstance(e, Completed) for e in events)


class TestJobLifecycle:
    def test_create_job_initial_state(self, env):
        _, ws, _, manager = env
        job = manager.create_job(ws.workspace_id, make_config(), seed=1)
        assert job.state == JobState.CREATED
        assert job.current_step == 0

    def test_create_rejects_missing_record(self, env):
        store, ws, _, manager = env
        store.delete_file(ws.workspace_id, "out/train.record")
        with pytest.raises(ValidationError) as excinfo:
            manager.create_job(ws.workspace_id, make_config())
        assert any("train_record_path" in d for d in excinfo.value.details)

    def test_create_rejects_labelmap_size_mismatch(self, env):
        _, ws, _, manager = env
        config = make_config()
        config.hp.num_classes = 7
        with pytest.raises(ValidationError):
            manager.create_job(ws.workspace_id, config)

    def test_job_isolation(self, env):
        store, ws, _, manager = env
        job = manager.create_job(ws.workspace_id, make_config())
        _, other_ws = store.create_account("bob", "s3cretpass2")
        with pytest.raises(NotFoundError):
            manager.get_job_for_workspace(job.job_id, other_ws.workspace_id)

    def test_happy_path_to_succeeded(self, env):
        store, ws, _, manager = env
        job = manager.create_job(ws.workspace_id, make_config(), seed=5)
        manager.start_job(job.job_id)
        job = manager.wait_for_terminal(job.job_id)
        assert job.state == JobState.SUCCEEDED
        assert job.current_step == 200
        assert [s for s, _ in job.checkpoints] == [50, 100, 150, 200, 200]
        for _, rel_path in job.checkpoints:
            assert store.get_file(ws.workspace_id, rel_path)  # exists, non-empty
        assert job.loss_history[0][1] == pytest.approx(10.0)

    def test_start_in_wrong_state(self, env):
        _, ws, _, manager = env
        job = manager.create_job(ws.workspace_id, make_config())
        manager.start_job(job.job_id)
        manager.wait_for_terminal(job.job_id)
        with pytest.raises(StateError, match="succeeded"):
            manager.start_job(job.job_id)

    def test_queued_when_gpu_busy(self, env):
        _, ws, _, manager = env
        slow = make_config(extras={"sim.step_delay_ms": "50"})
        first = manager.create_job(ws.workspace_id, slow, seed=1)
        second = manager.create_job(ws.workspace_id, make_config(), seed=2)
        manager.start_job(first.job_id)
        manager.start_job(second.job_id)
        assert manager.get_job(second.job_id).state == JobState.QUEUED
        manager.cancel_job(first.job_id)
        manager.wait_for_terminal(second.job_id)
        assert manager.get_job(second.job_id).state == JobState.SUCCEEDED

    def test_cancel_queued_never_leased(self, env):
        _, ws, _, manager = env
        slow = make_config(extras={"sim.step_delay_ms": "50"})
        first = manager.create_job(ws.workspace_id, slow)
        second = manager.create_job(ws.workspace_id, make_config())
        manager.start_job(first.job_id)
        manager.start_job(second.job_id)
        cancelled = manager.cancel_job(second.job_id)
        assert cancelled.state == JobState.CANCELLED
        assert cancelled.started_at is None
        manager.cancel_job(first.job_id)

    def test_cancel_running_keeps_partial_checkpoints(self, env):
        store, ws, scheduler, manager = env
        config = make_config(num_steps=400, checkpoint_every=10,
                             extras={"sim.step_delay_ms": "20"})
        job = manager.create_job(ws.workspace_id, config, seed=1)
        manager.start_job(job.job_id)
        deadline = time.time() + 10
        while not manager.get_job(job.job_id).checkpoints:
            assert time.time() < deadline, "no checkpoint arrived"
            time.sleep(0.02)
        cancelled = manager.cancel_job(job.job_id)
        assert cancelled.state == JobState.CANCELLED
        assert cancelled.checkpoints  # retained
        assert len(scheduler.status().free_gpus) == 1  # lease released

    def test_cancel_terminal_job_errors(self, env):
        _, ws, _, manager = env
        job = manager.create_job(ws.workspace_id, make_config())
        manager.start_job(job.job_id)
        manager.wait_for_terminal(job.job_id)
        with pytest.raises(StateError):
            manager.cancel_job(job.job_id)

    def test_injected_error_yields_failed(self, env):
        _, ws, scheduler, manager = env
        config = make_config(extras={"sim.fail_at_step": "100"})
        job = manager.create_job(ws.workspace_id, config)
        manager.start_job(job.job_id)
        job = manager.wait_for_terminal(job.job_id)
        assert job.state == JobState.FAILED
        assert "injected failure" in job.error_message
        assert len(scheduler.status().free_gpus) == 1

    def test_trainer_crash_yields_failed_with_single_release(self, env):
        _, ws, scheduler, manager = env
        config = make_config(extras={"sim.crash_at_step": "100"})
        job = manager.create_job(ws.workspace_id, config)
        manager.start_job(job.job_id)
        job = manager.wait_for_terminal(job.job_id)
        assert job.state == JobState.FAILED
        assert job.error_message == "trainer exited without terminal event"
        assert manager._runtime[job.job_id].release_count == 1
        assert len(scheduler.status().free_gpus) == 1

    def test_lease_released_exactly_once_across_terminal_paths(self, env):
        _, ws, _, manager = env
        outcomes = {
            "completed": make_config(),
            "errored": make_config(extras={"sim.fail_at_step": "50"}),
            "crashed": make_config(extras={"sim.crash_at_step": "50"}),
        }
        for config in outcomes.values():
            job = manager.create_job(ws.workspace_id, config)
            manager.start_job(job.job_id)
            manager.wait_for_terminal(job.job_id)
            assert manager._runtime[job.job_id].release_count == 1


class TestEventLog:
    def test_replay_after_completion(self, env):
        _, ws, _, manager = env
        job = manager.create_job(ws.workspace_id, make_config(), seed=9)
        manager.start_job(job.job_id)
        manager.wait_for_terminal(job.job_id)
        events = list(manager.stream_events(job.job_id, from_seq=0))
        assert events[0][0] == 0
        assert events[-1][1]["type"] == "completed"
        seqs = [seq for seq, _ in events]
        assert seqs == list(range(len(seqs)))

    def test_two_subscribers_identical(self, env):
        _, ws, _, manager = env
        job = manager.create_job(ws.workspace_id, make_config(), seed=9)
        manager.start_job(job.job_id)
        manager.wait_for_terminal(job.job_id)
        first = list(manager.stream_events(job.job_id, 0))
        second = list(manager.stream_events(job.job_id, 0))
        assert first == second

    def test_from_seq_beyond_history(self, env):
        _, ws, _, manager = env
        job = manager.create_job(ws.workspace_id, make_config())
        manager.start_job(job.job_id)
        manager.wait_for_terminal(job.job_id)
        assert list(manager.stream_events(job.job_id, from_seq=10_000)) == []

    def test_unknown_job_not_found(self, env):
        _, _, _, manager = env
        with pytest.raises(NotFoundError):
            manager.stream_events("nope", 0)

    def test_persisted_log_byte_identical_across_runs(self, env, tmp_path):
        store, ws, _, manager = env

        def run_once(data_dir):
            scheduler = GpuScheduler(pool_size=1)
            local = JobManager(store, scheduler, data_dir)
            job = local.create_job(
                ws.workspace_id,
                make_config(extras={"sim.noise_amp": "0.01"}),
                seed=77,
            )
            local.start_job(job.job_id)
            local.wait_for_terminal(job.job_id)
            path = data_dir / "joblogs" / f"{job.job_id}.events.jsonl"
            return path.read_bytes()

        first = run_once(tmp_path / "run1")
        second = run_once(tmp_path / "run2")
        assert first == second

    def test_live_subscription_sees_full_stream(self, env):
        _, ws, _, manager = env
        config = make_config(num_steps=100, checkpoint_every=50,
                             extras={"sim.step_delay_ms": "5"})
        job = manager.create_job(ws.workspace_id, config, seed=4)
        manager.start_job(job.job_id)
        live = [e for _, e in manager.stream_events(job.job_id, 0)]
        assert live[-1]["type"] == "completed"
        replay = [e for _, e in manager.stream_events(job.job_id, 0)]
        assert live == replay


class TestStateMachineModel:
    """Model-based: random action sequences never leave the allowed graph."""

    ACTIONS = ("start", "cancel", "wait")

    def test_random_sequences_respect_transition_table(self, env):
        _, ws, _, manager = env
        rng = random.Random(123)
        for round_no in range(12):
            fail = rng.random() < 0.3
            extras = {"sim.fail_at_step": "100"} if fail else {}
            if rng.random() < 0.5:
                extras["sim.step_delay_ms"] = "5"
            job = manager.create_job(
                ws.workspace_id, make_config(extras=extras), seed=round_no
            )
            observed = [manager.get_job(job.job_id).state]

            def observe():
                state = manager.get_job(job.job_id).state
                if state != observed[-1]:
                    observed.append(state)

            for _ in range(rng.randrange(1, 6)):
                action = rng.choice(self.ACTIONS)
                try:
                    if action == "start":
                        manager.start_job(job.job_id)
                    elif action == "cancel":
                        manager.cancel_job(job.job_id)
                    else:
                        time.sleep(rng.uniform(0, 0.05))
                except StateError:
                    pass  # rejected transitions leave the state unchanged
                observe()
            # drain started jobs to a terminal state
            if manager.get_job(job.job_id).state not in (JobState.CREATED,):
                try:
                    manager.wait_for_terminal(job.job_id, timeout=15)
                except TimeoutError:
                    manager.cancel_job(job.job_id)
            observe()

            path = list(zip(observed, observed[1:]))
            for edge in path:
                # waiting may skip intermediate states; expand two-hop edges
                if edge in ALLOWED_TRANSITIONS:
                    continue
                src, dst = edge
                intermediate = [
                    mid
                    for mid in JobState
                    if (src, mid) in ALLOWED_TRANSITIONS
                    and (mid, dst) in ALLOWED_TRANSITIONS
                ]
                assert intermediate, f"illegal transition {src} -> {dst}"

    def test_every_illegal_direct_transition_rejected(self, env):
        _, ws, _, manager = env
        # exhaustively verify the reject side of the table for user actions
        for target_state in (JobState.SUCCEEDED, JobState.FAILED, JobState.CANCELLED):
            job = manager.create_job(ws.workspace_id, make_config())
            runtime_job = manager.get_job(job.job_id)
            runtime_job.state = target_state
            with pytest.raises(StateError):
                manager.start_job(job.job_id)
            if target_state != JobState.CANCELLED:
                with pytest.raises(StateError):
                    manager.cancel_job(job.job_id)
