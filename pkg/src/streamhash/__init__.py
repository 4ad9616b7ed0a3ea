"""streamhash: streaming hash-function learning.

Per-pair passive-aggressive updates of linear (optionally kernelized)
hash models, zero-loss code inference, packed Hamming retrieval, and an
evaluation harness with a cumulative-loss bound monitor.
"""

from .codes import HashCode, PackedCodes, hamming_distance
from .ensemble import EnsembleReport, EnsembleTrainer, mm_distance
from .evaluation import (
    BoundMonitor,
    PairLabeler,
    average_precision,
    linear_scan,
    mean_average_precision,
    mm_linear_scan,
    pair_label,
    pair_stream,
)
from .formats import (
    FormatError,
    ModelBundle,
    bundle_from_ensemble,
    read_codes,
    read_dataset,
    read_model,
    write_codes,
    write_dataset,
    write_model,
)
from .inference import FlipPlan, delta_scores, infer_zero_loss_codes
from .kernel import KernelMapper, fit_anchors, map_many, map_one
from .loss import CodePair, LossParams, PairSample, pair_score, prediction_loss, similarity_loss
from .model import HashModel, encode, encode_many, init_lsh, structured_score
from .trainer import CenteringPipeline, OnlineHashTrainer, TrainerConfig, UpdateReport

__version__ = "0.1.0"

__all__ = [
    "BoundMonitor",
    "CenteringPipeline",
    "CodePair",
    "EnsembleReport",
    "EnsembleTrainer",
    "FlipPlan",
    "FormatError",
    "HashCode",
    "HashModel",
    "KernelMapper",
    "LossParams",
    "ModelBundle",
    "OnlineHashTrainer",
    "PackedCodes",
    "PairLabeler",
    "PairSample",
    "TrainerConfig",
    "UpdateReport",
    "average_precision",
    "bundle_from_ensemble",
    "delta_scores",
    "encode",
    "encode_many",
    "fit_anchors",
    "hamming_distance",
    "infer_zero_loss_codes",
    "init_lsh",
    "linear_scan",
    "map_many",
    "map_one",
    "mean_average_precision",
    "mm_distance",
    "mm_linear_scan",
    "pair_label",
    "pair_score",
    "pair_stream",
    "prediction_loss",
    "read_codes",
    "read_dataset",
    "read_model",
    "similarity_loss",
    "structured_score",
    "write_codes",
    "write_dataset",
    "write_model",
]
