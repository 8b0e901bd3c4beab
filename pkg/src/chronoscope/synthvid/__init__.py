"""Seeded synthetic clips whose dynamics isolate one temporal property each."""
from .clip import Dataset, VideoClip, reverse_clip
from .generators import FPS, T_RAW, gen_asym_clip, gen_sym_clip, speed_change_statistic
from .io import FormatError, read_dataset, write_dataset
from .physics import Trajectory, simulate_damped, simulate_elastic
from .render import blob, centroid_track, render_track
from .templates import CLASS_NAMES, REVERSE_OF, REVERSE_PAIRS, gen_template_clip

GENERATORS = {"asym": gen_asym_clip, "sym": gen_sym_clip}


def generate_dataset(kind: str, n: int, seed_start: int, split: str = "train",
                     T_raw: int = T_RAW, fps: float = FPS) -> Dataset:
    """``n`` clips with seeds ``seed_start .. seed_start + n - 1``.

    ``kind`` is ``asym``, ``sym`` or ``template``; template datasets cycle
    through the classes so every class gets the same number of clips
    (``n`` must be a multiple of the class count).
    """
    if kind == "template":
        k = len(CLASS_NAMES)
        if n % k:
            raise ValueError(f"template datasets need a multiple of {k} clips, got {n}")
        clips = [gen_template_clip(seed_start + i, i % k, T_raw, fps) for i in range(n)]
        return Dataset(clips, list(CLASS_NAMES), split)
    if kind not in GENERATORS:
        raise ValueError(f"unknown generator kind {kind!r}; choose asym, sym or template")
    gen = GENERATORS[kind]
    return Dataset([gen(seed_start + i, T_raw, fps) for i in range(n)], [], split)


__all__ = [
    "CLASS_NAMES", "Dataset", "FPS", "FormatError", "GENERATORS", "REVERSE_OF", "REVERSE_PAIRS",
    "T_RAW", "Trajectory", "VideoClip", "blob", "centroid_track", "gen_asym_clip", "gen_sym_clip",
    "gen_template_clip", "generate_dataset", "read_dataset", "render_track", "reverse_clip",
    "simulate_damped", "simulate_elastic", "speed_change_statistic", "write_dataset",
]
