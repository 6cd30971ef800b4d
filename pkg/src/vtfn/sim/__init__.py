from .contact import (
    ContactOutcome,
    GraspSetting,
    ObjectSpec,
    UnreachableLabelError,
    evaluate_contact,
    generate_objects,
    sample_setting_for_label,
)
from .render import px_per_mm, render_tactile, render_visual
from .trial import SimConfig, TrialRecording, simulate_trial
