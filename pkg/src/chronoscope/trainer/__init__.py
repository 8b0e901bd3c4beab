"""Mini-batch SGD training, evaluation and metric records."""
from .loop import DEFAULT_LR, HIER_LR, SEQ_CLIP_NORM, TrainConfig, TrainResult, evaluate, predict_logits, train_loop
from .optim import DivergenceError, clip_grad_norm, global_norm, sgd_step
from .records import MetricsError, MetricsRecord, append_records, read_records

__all__ = [
    "DEFAULT_LR", "DivergenceError", "HIER_LR", "MetricsError", "MetricsRecord", "SEQ_CLIP_NORM",
    "TrainConfig", "TrainResult", "append_records", "clip_grad_norm", "evaluate", "global_norm",
    "predict_logits", "read_records", "sgd_step", "train_loop",
]
