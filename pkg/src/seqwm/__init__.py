"""Sequential behavioral watermarking for agent action trajectories."""

from .calibration import DetectionReport, calibrate, p_value
from .detector import ScoreResult, hit_rate, round_indexed_score, sliding_score, z_score
from .encoder import WatermarkParams, encode_trajectory, tilt
from .keyed_subset import SecretKey, encode_context, encode_round, sample_subset
from .policy import ActionVocabulary, PolicySpec
from .records import ObservedSequence, Trajectory

__all__ = [
    "ActionVocabulary",
    "DetectionReport",
    "ObservedSequence",
    "PolicySpec",
    "ScoreResult",
    "SecretKey",
    "Trajectory",
    "WatermarkParams",
    "calibrate",
    "encode_context",
    "encode_round",
    "encode_trajectory",
    "hit_rate",
    "p_value",
    "round_indexed_score",
    "sample_subset",
    "sliding_score",
    "tilt",
    "z_score",
]

__version__ = "0.1.0"
