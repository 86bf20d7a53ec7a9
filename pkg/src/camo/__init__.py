"""Adversarial multimodal domain generalization.

Training splits each modality embedding into modal-specific and
modal-general parts, aligns the general parts contrastively, mixes them
within domains, disentangles a causal from a spurious component, and
pits the causal component against a domain discriminator through a
gradient-reversal layer. A synthetic structural-causal-model benchmark
and a leave-one-domain-out harness verify the mechanism end to end.
"""

from ._kernels import BACKEND as kernel_backend
from .data import Dataset, DomainSplit, MultimodalSample, load_dataset, load_manifest, lodo_splits, make_batches
from .errors import (CamoError, ConfigError, DataLoadError, GenerationError,
                     InputError, TrainAbortError)
from .harness import (EvalResult, LodoReport, evaluate, export_embeddings,
                       run_ablation, run_lodo)
from .losses import (BatchTensors, LossWeights, cross_entropy, disc_loss,
                     ortho_loss, step2_loss, supcon_loss, task_loss)
from .mixup import MixupConfig, mixup_apply, mixup_pairs
from .model import (CamoModel, DisentangledPair, ModelDims, ProjectionOutput,
                    classify, discriminate, disentangle, grad_reverse,
                    grad_reverse_backward, project)
from .checkpoint import load_checkpoint, save_checkpoint
from .scm import NoiseScales, ScmSpec, scm_generate
from .schedules import gamma_schedule, lr_schedule
from .engine import ModelConfig, TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "BatchTensors", "CamoError", "CamoModel", "ConfigError", "DataLoadError",
    "Dataset", "DisentangledPair", "DomainSplit", "EvalResult",
    "GenerationError", "InputError", "LodoReport", "LossWeights",
    "MixupConfig", "ModelConfig", "ModelDims", "MultimodalSample",
    "NoiseScales", "ProjectionOutput", "ScmSpec", "TrainAbortError",
    "TrainConfig", "TrainResult", "classify", "cross_entropy", "discriminate",
    "disc_loss", "disentangle", "evaluate", "export_embeddings",
    "gamma_schedule", "grad_reverse", "grad_reverse_backward",
    "kernel_backend", "load_checkpoint", "load_dataset", "load_manifest",
    "lodo_splits", "lr_schedule", "make_batches", "mixup_apply",
    "mixup_pairs", "ortho_loss", "project", "run_ablation", "run_lodo",
    "save_checkpoint", "scm_generate", "step2_loss", "supcon_loss",
    "task_loss", "train",
]
