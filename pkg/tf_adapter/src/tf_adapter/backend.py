"""TensorFlow training driver.

Consumes the record files the server materializes next to the config, runs
a small convolutional box-regression model for the configured number of
steps, and reports real losses and checkpoints. The point is full-protocol
fidelity against a real backend, not detection accuracy: the model
regresses the first annotated box of each image, which exercises record
parsing, image decoding, the LR schedule, checkpointing, and stop handling.
"""

from __future__ import annotations

import threading
from pathlib import Path

from . import wire
from .neutral_config import NeutralConfig

IMAGE_SIZE = 32


def _build_dataset(tf, record_path: Path, batch_size: int):
    feature_spec = {
        "image/encoded": tf.io.FixedLenFeature([], tf.string),
        "image/object/bbox/xmin": tf.io.VarLenFeature(tf.float32),
        "image/object/bbox/ymin": tf.io.VarLenFeature(tf.float32),
        "image/object/bbox/xmax": tf.io.VarLenFeature(tf.float32),
        "image/object/bbox/ymax": tf.io.VarLenFeature(tf.float32),
    }

    def parse(serialized):
        parsed = tf.io.parse_single_example(serialized, feature_spec)
        image = tf.io.decode_image(
            parsed["image/encoded"], channels=3, expand_animations=False
        )
        image = tf.image.resize(tf.cast(image, tf.float32), (IMAGE_SIZE, IMAGE_SIZE))

        def first_or_zero(key):
            dense = tf.sparse.to_dense(parsed[key])
            return tf.cond(
                tf.size(dense) > 0, lambda: dense[0], lambda: tf.constant(0.0)
            )

        target = tf.stack(
            [
                first_or_zero("image/object/bbox/xmin"),
                first_or_zero("image/object/bbox/ymin"),
                first_or_zero("image/object/bbox/xmax"),
                first_or_zero("image/object/bbox/ymax"),
            ]
        )
        return image, target

    dataset = tf.data.TFRecordDataset(str(record_path)).map(parse)
    return dataset.repeat().batch(batch_size).prefetch(2)


def _build_model(tf):
    return tf.keras.Sequential(
        [
            tf.keras.layers.Input(shape=(IMAGE_SIZE, IMAGE_SIZE, 3)),
            tf.keras.layers.Rescaling(1.0 / 255.0),
            tf.keras.layers.Conv2D(8, 3, activation="relu"),
            tf.keras.layers.GlobalAveragePooling2D(),
            tf.keras.layers.Dense(4, activation="sigmoid"),
        ]
    )


def run_training(
    config: NeutralConfig,
    config_dir: Path,
    output_dir: Path,
    seed: int,
    stop_flag: threading.Event,
) -> int:
    """Train and emit protocol events; returns the final step reached."""
    import tensorflow as tf  # deferred: import cost and optional dependency

    tf.get_logger().setLevel("ERROR")
    tf.random.set_seed(seed)

    for key in config.unknown_keys:
        wire.log("warn", f"unmapped config key passed through: {key}")
    for key, value in config.extras.items():
        wire.log("info", f"extras.{key} = {value} (not interpreted by backend)")

    record_path = config.resolve(config_dir, config.train_record_path)
    if not record_path.exists():
        raise FileNotFoundError(f"train record not found: {record_path}")

    dataset = iter(_build_dataset(tf, record_path, config.batch_size))
    model = _build_model(tf)
    optimizer = tf.keras.optimizers.SGD(learning_rate=config.initial_rate)
    loss_fn = tf.keras.losses.MeanSquaredError()

    def save_checkpoint(step: int, final: bool = False) -> None:
        name = f"ckpt-final-{step:06d}.weights.h5" if final \
            else f"ckpt-{step:06d}.weights.h5"
        model.save_weights(str(output_dir / name))
        wire.checkpoint(step, name)

    progress_every = max(1, config.num_steps // 100)
    step = 0
    wire.log("info", f"backend ready: tensorflow {tf.__version__}")
    for step in range(1, config.num_steps + 1):
        if stop_flag.is_set():
            wire.log("info", f"stop received at step {step - 1}")
            save_checkpoint(step - 1, final=True)
            wire.completed(step - 1)
            return step - 1
        optimizer.learning_rate.assign(config.learning_rate_at(step))
        images, targets = next(dataset)
        with tf.GradientTape() as tape:
            predictions = model(images, training=True)
            loss = loss_fn(targets, predictions)
        gradients = tape.gradient(loss, model.trainable_variables)
        optimizer.apply_gradients(zip(gradients, model.trainable_variables))
        if step % progress_every == 0 or step == config.num_steps:
            wire.progress(step, float(loss.numpy()))
        if step % config.checkpoint_every == 0:
            save_checkpoint(step)
    save_checkpoint(config.num_steps, final=True)
    wire.completed(config.num_steps)
    return config.num_steps
