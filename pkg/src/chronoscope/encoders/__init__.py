"""Sequential, hierarchical and time-aligned dense video encoders."""
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .layers import (
    RecurrentParams,
    classifier_head,
    frame_cnn,
    hier_forward,
    lstm_cell,
    lstm_forward,
    rnn_forward,
    rnn_step,
    tad_forward,
    tad_step,
)
from .model import VideoModel, content_order
from .spec import EncoderSpec, count_params, param_breakdown, tad_step_count

__all__ = [
    "CheckpointError",
    "EncoderSpec",
    "RecurrentParams",
    "VideoModel",
    "classifier_head",
    "content_order",
    "count_params",
    "frame_cnn",
    "hier_forward",
    "lstm_cell",
    "lstm_forward",
    "param_breakdown",
    "read_checkpoint",
    "rnn_forward",
    "rnn_step",
    "tad_forward",
    "tad_step",
    "tad_step_count",
    "write_checkpoint",
]
