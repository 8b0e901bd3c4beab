"""Perturb one frame of a clip and watch which time-aligned states move.

Step t of the dense encoder only sees frames 1..t, so changing frame s leaves
every earlier state bitwise unchanged.
"""
import numpy as np

from chronoscope.encoders import EncoderSpec, VideoModel
from chronoscope.synthvid import gen_asym_clip
from chronoscope.tasks import sample_frames

T = 8
model = VideoModel(EncoderSpec.from_name("tad", T=T), seed=0)
clip = gen_asym_clip(0)
x = clip.frames[sample_frames(clip, T)][None]
base = [h.data.copy() for h in model.tad_states(x)]

print("perturbed frame -> max |change| of h_1..h_T")
for s in range(T):
    pert = x.copy()
    pert[0, s] = np.clip(pert[0, s] + 0.2, 0.0, 1.0)
    moved = [np.abs(h.data - b).max() for h, b in zip(model.tad_states(pert), base)]
    print(f"  x_{s + 1}: " + " ".join(f"{m:8.1e}" for m in moved))
