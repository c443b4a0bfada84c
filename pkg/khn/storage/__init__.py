"""Checkpoints, metrics files and the run ledger."""

from khn.storage.checkpoint import (
    FORMAT_VERSION,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from khn.storage.ledger import RunLedger, new_run_id
from khn.storage.metrics import MetricsWriter, read_eval_report, read_iteration_metrics, write_eval_report

__all__ = [
    "FORMAT_VERSION",
    "MetricsWriter",
    "RunLedger",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "new_run_id",
    "read_eval_report",
    "read_iteration_metrics",
    "save_checkpoint",
    "write_eval_report",
]
