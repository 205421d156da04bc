import numpy as np
import pytest

from mclab.corpus import CorpusManifest, ImageRecord, PatientRecord
from mclab.model import ModelConfig
from mclab.synthesis import GeneratorConfig, generate_synthetic_corpus


def tiny_model_config(**overrides) -> ModelConfig:
    """A model small enough for per-test training."""
    defaults = dict(
        image_size=32, patch_size=8, enc_dim=32, enc_depth=2, enc_heads=2,
        dec_dim=16, dec_depth=1, text_dim=32, text_depth=1, text_heads=2,
        proj_dim=16, vocab_size=32, mlp_ratio=2.0,
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


@pytest.fixture(scope="session")
def small_corpus() -> CorpusManifest:
    cfg = GeneratorConfig(
        n_patients=60, n_latent_classes=2, modality_set=("CFP", "OCT"),
        text_fraction=0.5, image_size=32, split_counts=(40, 10, 10),
    )
    return generate_synthetic_corpus(cfg, seed=3)


def manual_patient(patient_id: str, modalities, size: int = 32, seed: int = 0,
                   keywords=None) -> PatientRecord:
    """Hand-built patient with one image per listed modality tag."""
    rng = np.random.default_rng(seed)
    images = [
        ImageRecord(
            image_id=f"{patient_id}_{tag.lower()}_{i}",
            patient_id=patient_id,
            modality=tag,
            pixels=rng.random((size, size, 3)).astype(np.float32),
        )
        for i, tag in enumerate(modalities)
    ]
    return PatientRecord(patient_id=patient_id, images=images, keywords=keywords)
