"""Why frame order matters: an order-blind model cannot tell a clip from its reversal.

Trains the time-aligned encoder and the frame-mean ablation on the 8 template
classes, then scores same-seed reverse pairs (MOVE_INTO vs TAKE_OUT, ...).
"""
import numpy as np

from chronoscope.encoders import EncoderSpec, VideoModel
from chronoscope.synthvid import CLASS_NAMES, REVERSE_PAIRS, Dataset, gen_template_clip, generate_dataset
from chronoscope.tasks import build_template_instances, reverse_pair_accuracy
from chronoscope.trainer import TrainConfig, predict_logits, train_loop

train = generate_dataset("template", 400, 0)
test = generate_dataset("template", 200, 1_000_000, "test")
pairs = Dataset([gen_template_clip(s, c) for s in range(5_000_000, 5_000_020) for p in REVERSE_PAIRS for c in p],
                list(CLASS_NAMES), "test")
pair_inst = build_template_instances(pairs, 0, "test")

for name in ("tad", "mean"):
    model = VideoModel(EncoderSpec.from_name(name, T=4, num_classes=8), seed=0)
    res = train_loop(TrainConfig(epochs=5, task="template"), train, test, model)
    logits = predict_logits(model, pair_inst)
    acc, n = reverse_pair_accuracy(logits, [i.target for i in pair_inst])
    ties = sum(np.array_equal(logits[i], logits[i + 1]) for i in range(0, len(pair_inst), 2))
    print(f"{name:5s} test prec@1 {res.records[-1].accuracy:.3f}  reverse-pair acc {acc:.3f} over {n}  "
          f"identical logits on {ties}/{len(pair_inst) // 2} pairs")
