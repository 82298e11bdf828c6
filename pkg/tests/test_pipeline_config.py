import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detlab.augment import AugmentationPlan
from detlab.errors import ValidationError
from detlab.pipeline_config import (
    Architecture,
    Backbone,
    HyperParams,
    LrSchedule,
    ModelSpec,
    TrainingConfig,
    catalog,
    learning_rate_at,
    paper_equivalent_schedule,
    parse_config,
    render_config,
    validate,
)


def stock_config(**overrides):
    hp = HyperParams(
        num_steps=200_000,
        num_classes=2,
        lr=paper_equivalent_schedule(),
        batch_size=1,
        checkpoint_every=10_000,
        augmentation=AugmentationPlan(enabled_ops=("flip_h",), seed=3),
    )
    cfg = TrainingConfig(
        model=ModelSpec(Architecture.SSD, Backbone.MOBILENET_V2),
        hp=hp,
        labelmap_path="out/labelmap.txt",
        train_record_path="out/train.record",
        eval_record_path="out/eval.record",
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


class TestCatalog:
    @pytest.mark.parametrize(
        "pair",
        [
            (Architecture.SSD, Backbone.MOBILENET_V2),
            (Architecture.FASTER_RCNN, Backbone.RESNET_101),
            (Architecture.RFCN, Backbone.RESNET_101),
            (Architecture.MASK_RCNN, Backbone.RESNET_101),
        ],
    )
    def test_required_pairs_present(self, pair):
        assert pair in catalog()

    def test_uncatalogued_pair_rejected(self):
        cfg = stock_config(
            model=ModelSpec(Architecture.MASK_RCNN, Backbone.MOBILENET_V1)
        )
        errors = validate(cfg)
        assert any(e.startswith("model:") for e in errors)


class TestLearningRate:
    SCHEDULE = LrSchedule(initial_rate=0.0002, decay_points=((150_000, 0.00002),))

    @pytest.mark.parametrize(
        "step,rate",
        [
            (0, 0.0002),
            (1, 0.0002),
            (149_999, 0.0002),
            (150_000, 0.00002),
            (199_999, 0.00002),
        ],
    )
    def test_two_phase_schedule(self, step, rate):
        assert learning_rate_at(self.SCHEDULE, step) == rate

    def test_negative_step(self):
        with pytest.raises(ValidationError):
            learning_rate_at(self.SCHEDULE, -1)

    @given(st.integers(min_value=0, max_value=300_000))
    @settings(max_examples=200, deadline=None)
    def test_piecewise_constant(self, step):
        expected = 0.0002 if step < 150_000 else 0.00002
        assert learning_rate_at(self.SCHEDULE, step) == expected

    def test_multi_point_schedule(self):
        sched = LrSchedule(0.1, ((10, 0.01), (20, 0.001)))
        assert learning_rate_at(sched, 9) == 0.1
        assert learning_rate_at(sched, 10) == 0.01
        assert learning_rate_at(sched, 19) == 0.01
        assert learning_rate_at(sched, 20) == 0.001
        assert learning_rate_at(sched, 10**9) == 0.001


class TestValidate:
    def test_stock_config_valid(self):
        assert validate(stock_config()) == []

    def test_zero_steps_reported_on_field(self):
        cfg = stock_config()
        cfg.hp.num_steps = 0
        errors = validate(cfg)
        assert any(e.startswith("hp.num_steps:") for e in errors)

    def test_decay_point_beyond_num_steps(self):
        cfg = stock_config()
        cfg.hp.lr = LrSchedule(0.0002, ((250_000, 0.00002),))
        errors = validate(cfg)
        assert any("decay_points[0]" in e for e in errors)

    def test_collects_all_errors(self):
        cfg = stock_config()
        cfg.hp.num_steps = 0
        cfg.hp.num_classes = 0
        cfg.hp.batch_size = 0
        errors = validate(cfg)
        assert len(errors) >= 3

    @pytest.mark.parametrize(
        "mutate,field",
        [
            (lambda hp: setattr(hp, "num_steps", -5), "hp.num_steps"),
            (lambda hp: setattr(hp, "batch_size", 0), "hp.batch_size"),
            (lambda hp: setattr(hp, "num_classes", 0), "hp.num_classes"),
            (lambda hp: setattr(hp, "checkpoint_every", 0), "hp.checkpoint_every"),
            (
                lambda hp: setattr(hp, "lr", LrSchedule(-1.0, ())),
                "hp.lr.initial_rate",
            ),
        ],
    )
    def test_single_mutation_reports_that_field(self, mutate, field):
        cfg = stock_config()
        mutate(cfg.hp)
        errors = validate(cfg)
        assert all(e.startswith(field) or field in e for e in errors if field in e)
        assert any(field in e for e in errors)

    def test_path_existence_with_context(self):
        cfg = stock_config()
        errors = validate(cfg, existing_paths={"out/labelmap.txt"})
        missing = [e for e in errors if "not found" in e]
        assert len(missing) == 2

    def test_labelmap_size_mismatch(self):
        cfg = stock_config()
        errors = validate(cfg, labelmap_size=5)
        assert any("labelmap size 5" in e for e in errors)

    def test_checkpoint_cadence_bounded_by_steps(self):
        cfg = stock_config()
        cfg.hp.checkpoint_every = 300_000
        assert any("checkpoint_every" in e for e in validate(cfg))


class TestRenderParse:
    def test_deterministic(self):
        assert render_config(stock_config()) == render_config(stock_config())

    def test_contains_num_steps(self):
        assert "num_steps = 200000" in render_config(stock_config())

    def test_round_trip(self):
        cfg = stock_config()
        assert parse_config(render_config(cfg)) == cfg

    def test_round_trip_without_augmentation(self):
        cfg = stock_config()
        cfg.hp.augmentation = None
        assert parse_config(render_config(cfg)) == cfg

    def test_round_trip_with_extras(self):
        cfg = stock_config(extras={"sim.noise_amp": "0.25", "zz": "1"})
        assert parse_config(render_config(cfg)) == cfg

    def test_comments_ignored(self):
        text = render_config(stock_config()) + "# trailing comment\n"
        assert parse_config(text) == stock_config()

    @given(
        num_steps=st.integers(min_value=1, max_value=10**7),
        batch=st.integers(min_value=1, max_value=512),
        classes=st.integers(min_value=1, max_value=999),
        rate=st.floats(min_value=1e-8, max_value=1.0, allow_nan=False),
        seed=st.integers(min_value=0, max_value=2**63 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, num_steps, batch, classes, rate, seed):
        cfg = stock_config()
        cfg.hp.num_steps = num_steps
        cfg.hp.batch_size = batch
        cfg.hp.num_classes = classes
        cfg.hp.checkpoint_every = max(1, num_steps // 2)
        cfg.hp.lr = LrSchedule(rate, ())
        cfg.hp.augmentation.seed = seed
        assert parse_config(render_config(cfg)) == cfg
