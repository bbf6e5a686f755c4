"""Spanish text to simulated robot sign language.

The pipeline has three stages: a sequence-to-sequence LSTM translator from
Spanish sentences to LSE gloss tokens, a 3D skeleton reconstruction path used
to record signs from human demonstrations (2D keypoints + depth), and a
look-up table that maps gloss tokens to joint-space trajectories replayed by
a simulated humanoid.
"""

from .corpus import CorpusPair, ParallelCorpus, default_corpus_path, load_corpus, split_train_val
from .motion import ExecutionPlan, MotionLut, Trajectory, compile_plan, load_lut, simulate_execution
from .seq2seq import Seq2SeqModel, TrainingConfig, evaluate, load_model, save_model, train, translate
from .sensors import SensorSpec, default_registry, select_sensor
from .skeleton import (
    CameraIntrinsics,
    Keypoint2D,
    LimbCalibration,
    PipelineConfig,
    Skeleton3D,
    calibrate_limbs,
    detect_occlusions,
    dilate_depth,
    project_keypoint,
    reconstruct_stream,
    resolve_occlusions,
)
from .tokenizer import Vocabulary, build_vocab, decode, encode_one_hot, tokenize

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "CorpusPair", "ExecutionPlan", "Keypoint2D", "LimbCalibration",
    "MotionLut", "ParallelCorpus", "PipelineConfig", "Seq2SeqModel", "SensorSpec",
    "Skeleton3D", "Trajectory", "TrainingConfig", "Vocabulary",
    "build_vocab", "calibrate_limbs", "compile_plan", "decode", "default_corpus_path",
    "default_registry", "detect_occlusions", "dilate_depth", "encode_one_hot", "evaluate",
    "load_corpus", "load_lut", "load_model", "project_keypoint", "reconstruct_stream",
    "resolve_occlusions", "save_model", "select_sensor", "simulate_execution",
    "split_train_val", "tokenize", "train", "translate",
]
