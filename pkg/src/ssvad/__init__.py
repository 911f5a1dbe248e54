"""Selective state-space video anomaly detection.

A numpy library implementing dual-stream normality learning: multi-scale
spatial and temporal encoders built from selective-scan blocks, feature
decomposition with memory banks, dual decoders, and PSNR-based anomaly
scoring, plus a synthetic data pipeline and evaluation/profiling tools.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, gradient_check, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, save_config
from .data import (ClipStore, SyntheticSceneSpec, generate_clip,
                   generate_dataset, iterate_windows, read_raw_clip,
                   write_raw_clip)
from .evaluate import (EvalReport, ProfileReport, count_params,
                       estimate_flops, measure_fps, roc_auc, write_report)
from .model import AnomalyPredictor, ModelConfig, ModelOutput
from .objective import (LossWeights, ScoreRecord, combine_and_normalize,
                        loss_frame, loss_motion, loss_separate, loss_total,
                        psnr, read_scores_csv, ssim, write_scores_csv)
from .scoring import load_model, score_clip, score_store
from .spatial import PatchConfig, SpatialStream
from .ssm import (BlockConfig, MSVSSBlock, SelectiveScanParams, TMBlock,
                  VSSBlock, discretize, selective_scan)
from .temporal import TemporalStream, frame_difference
from .train import TrainResult, build_model, train

__all__ = [
    "Tensor",
    "no_grad",
    "gradient_check",
    "BlockConfig",
    "SelectiveScanParams",
    "discretize",
    "selective_scan",
    "VSSBlock",
    "MSVSSBlock",
    "TMBlock",
    "PatchConfig",
    "SpatialStream",
    "TemporalStream",
    "frame_difference",
    "ModelConfig",
    "ModelOutput",
    "AnomalyPredictor",
    "LossWeights",
    "ScoreRecord",
    "loss_frame",
    "loss_motion",
    "loss_separate",
    "loss_total",
    "ssim",
    "psnr",
    "combine_and_normalize",
    "write_scores_csv",
    "read_scores_csv",
    "SyntheticSceneSpec",
    "generate_clip",
    "generate_dataset",
    "ClipStore",
    "iterate_windows",
    "write_raw_clip",
    "read_raw_clip",
    "roc_auc",
    "count_params",
    "estimate_flops",
    "measure_fps",
    "EvalReport",
    "ProfileReport",
    "write_report",
    "save_checkpoint",
    "load_checkpoint",
    "RunConfig",
    "load_config",
    "save_config",
    "TrainResult",
    "build_model",
    "train",
    "load_model",
    "score_clip",
    "score_store",
]
