"""mclab: multi-modal contrastive + masked-reconstruction lab.

Joint image-text and image-image contrastive pretraining with masked patch
reconstruction over a partially-labeled multi-modal corpus, a synthetic
corpus generator, and the full downstream evaluation harness (zero-shot,
few-shot, fine-tune, cross-modal retrieval, statistical reporting).
"""

__version__ = "0.1.0"

from .corpus import (
    CorpusManifest,
    ImageRecord,
    PatientRecord,
    load_corpus,
    pair_examinations,
    persist_corpus,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    combined_loss,
    image_image_contrastive,
    image_text_contrastive,
    masked_reconstruction_loss,
)
from .model import Checkpoint, ImageTextModel, ModelConfig, build_model, load_checkpoint
from .synthesis import GeneratorConfig, generate_synthetic_corpus
from .training import FinetuneConfig, PretrainConfig, finetune, fewshot_sample, pretrain

__all__ = [
    "CorpusManifest",
    "ImageRecord",
    "PatientRecord",
    "load_corpus",
    "pair_examinations",
    "persist_corpus",
    "LossBreakdown",
    "LossWeights",
    "combined_loss",
    "image_image_contrastive",
    "image_text_contrastive",
    "masked_reconstruction_loss",
    "Checkpoint",
    "ImageTextModel",
    "ModelConfig",
    "build_model",
    "load_checkpoint",
    "GeneratorConfig",
    "generate_synthetic_corpus",
    "FinetuneConfig",
    "PretrainConfig",
    "finetune",
    "fewshot_sample",
    "pretrain",
]
