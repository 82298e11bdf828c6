"""detlab: self-hostable training orchestration for object detection.

Dataset ingestion, record encoding, seeded augmentation, model/config
validation, FIFO GPU scheduling, simulated training with live event
streams, detection metrics, and export bundles, behind an HTTP API and CLI.
"""

__version__ = "0.1.0"
