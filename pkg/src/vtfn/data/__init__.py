from .dataset import DatasetManifest, WindowIndex, batched, build_dataset, iterate_batches
from .trialio import TrialFormatError, read_trial, write_trial
from .windows import resize_frames, window_starts, window_trial
