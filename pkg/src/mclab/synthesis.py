"""Synthetic multi-modal corpus generator.

Stands in for clinical data that cannot be redistributed: every patient
draws one latent class; each declared modality renders that class through
its own deterministic transform (channel permutation, orientation change,
contrast curve, blur) of a class-specific base pattern, plus seeded
per-patient jitter and per-image noise. Modalities therefore look different
while sharing the latent label, which makes cross-modality alignment
learnable but not free.

A configured fraction of patients receives a keyword label set derived from
a templated report sentence through the starter keyword dictionary. Latent
class labels are stored in the manifest for evaluation only; the training
path never reads them.

Everything is reproducible from (config, seed): per-patient RNG streams are
derived via ``np.random.SeedSequence([seed, patient_index])`` so results do
not depend on generation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusManifest, ImageRecord, PatientRecord, validate_modality_set
from .errors import ConfigurationError
from .text import extract_keywords, starter_dictionary

# Leaf class terms understood by the starter dictionary, in class-index order.
SYNTHETIC_CLASS_TERMS = (
    "drusen",
    "hemorrhage",
    "exudate",
    "atrophy",
    "edema",
    "scarring",
    "neovascularization",
    "detachment",
)

_REPORT_TEMPLATES = (
    "fundus examination shows scattered {term} in the macula",
    "both eyes demonstrate {term} near the arcades",
    "imaging reveals {term} with stable appearance",
    "{term} noted on review, follow up advised",
)


def class_names(n_classes: int) -> tuple[str, ...]:
    if n_classes > len(SYNTHETIC_CLASS_TERMS):
        raise ConfigurationError(
            f"generator supports at most {len(SYNTHETIC_CLASS_TERMS)} latent classes"
        )
    return SYNTHETIC_CLASS_TERMS[:n_classes]


@dataclass
class GeneratorConfig:
    n_patients: int = 200
    n_latent_classes: int = 4
    modality_set: tuple[str, ...] = ("CFP", "OCT")
    images_per_patient_per_modality: int = 1
    text_fraction: float = 0.25
    image_size: int = 64
    # Patients per split; None derives counts from split_fractions.
    split_counts: tuple[int, int, int] | None = None
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)

    def validate(self) -> None:
        if self.n_patients < 1:
            raise ConfigurationError("n_patients must be >= 1")
        if self.n_latent_classes < 2:
            raise ConfigurationError("n_latent_classes must be >= 2")
        class_names(self.n_latent_classes)
        if len(self.modality_set) < 2:
            raise ConfigurationError("modality_set must declare >= 2 modalities")
        validate_modality_set(self.modality_set)
        if not 0.0 <= self.text_fraction <= 1.0:
            raise ConfigurationError("text_fraction must lie in [0, 1]")
        if self.images_per_patient_per_modality < 1:
            raise ConfigurationError("images_per_patient_per_modality must be >= 1")
        if self.image_size < 16:
            raise ConfigurationError("image_size must be >= 16")
        if self.split_counts is not None:
            if sum(self.split_counts) != self.n_patients:
                raise ConfigurationError("split_counts must sum to n_patients")
        else:
            if abs(sum(self.split_fractions) - 1.0) > 1e-9:
                raise ConfigurationError("split_fractions must sum to 1")

    def resolved_split_counts(self) -> tuple[int, int, int]:
        if self.split_counts is not None:
            return self.split_counts
        n_train = int(round(self.n_patients * self.split_fractions[0]))
        n_val = int(round(self.n_patients * self.split_fractions[1]))
        return (n_train, n_val, self.n_patients - n_train - n_val)


@dataclass
class _ClassPattern:
    base: np.ndarray  # image_size x image_size x 3, values around [0.2, 0.8]


def _class_pattern(seed: int, class_idx: int, size: int) -> _ClassPattern:
    """Class-specific base pattern: Gaussian blobs plus an oriented grating."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 10_000 + class_idx]))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.zeros((size, size, 3))
    for _ in range(3):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        width = rng.uniform(0.05, 0.18)
        blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2)))
        color = rng.uniform(0.3, 1.0, size=3)
        img += blob[:, :, None] * color[None, None, :]
    freq = rng.uniform(3.0, 7.0)
    angle = rng.uniform(0.0, np.pi)
    phase = rng.uniform(0.0, 2 * np.pi)
    wave = np.sin(2 * np.pi * freq * (xx * np.cos(angle) + yy * np.sin(angle)) + phase)
    img += 0.25 * wave[:, :, None] * rng.uniform(0.4, 1.0, size=3)[None, None, :]
    lo, hi = img.min(), img.max()
    base = 0.2 + 0.6 * (img - lo) / (hi - lo + 1e-12)
    return _ClassPattern(base=base)


def _box_blur(img: np.ndarray) -> np.ndarray:
    """3x3 mean filter with edge replication."""
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            out += padded[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out / 9.0


def _modality_transform(img: np.ndarray, modality_idx: int) -> np.ndarray:
    """Deterministic per-modality rendering of the shared pattern."""
    out = img
    if modality_idx % 3 != 0:
        out = np.roll(out, modality_idx % 3, axis=2)
    if modality_idx % 2 == 1:
        out = np.transpose(out, (1, 0, 2))
        out = _box_blur(out)
    gamma = (1.0, 0.6, 1.5, 0.8, 1.25)[modality_idx % 5]
    out = np.clip(out, 0.0, 1.0) ** gamma
    if modality_idx % 4 == 2:
        out = 1.0 - out
    return out


def _quantize(img: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid so persistence round-trips losslessly."""
    levels = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return levels.astype(np.float32) / 255.0


def generate_synthetic_corpus(cfg: GeneratorConfig, seed: int) -> CorpusManifest:
    """Generate a corpus fully determined by (cfg, seed)."""
    cfg.validate()
    size = cfg.image_size
    patterns = [
        _class_pattern(seed, c, size) for c in range(cfg.n_latent_classes)
    ]
    dictionary = starter_dictionary()
    terms = class_names(cfg.n_latent_classes)

    n_train, n_val, n_test = cfg.resolved_split_counts()
    split_of_index = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test

    records: list[PatientRecord] = []
    splits: dict[str, str] = {}
    latent: dict[str, int] = {}
    width = len(str(max(cfg.n_patients - 1, 1)))
    for p_idx in range(cfg.n_patients):
        rng = np.random.default_rng(np.random.SeedSequence([seed, p_idx]))
        cls = int(rng.integers(cfg.n_latent_classes))
        pid = f"p{p_idx:0{width}d}"

        # Patient-level appearance jitter shared across the patient's images.
        dy, dx = rng.integers(-size // 12, size // 12 + 1, size=2)
        brightness = rng.uniform(-0.06, 0.06)
        patient_view = np.roll(patterns[cls].base, (int(dy), int(dx)), axis=(0, 1))
        patient_view = patient_view + brightness

        images: list[ImageRecord] = []
        for m_idx, modality in enumerate(cfg.modality_set):
            rendered = _modality_transform(patient_view, m_idx)
            for k in range(cfg.images_per_patient_per_modality):
                noise = rng.normal(0.0, 0.04, size=rendered.shape)
                pixels = _quantize(rendered + noise)
                images.append(
                    ImageRecord(
                        image_id=f"{pid}_{modality.lower()}_{k}",
                        patient_id=pid,
                        modality=modality,
                        pixels=pixels,
                    )
                )

        keywords = None
        if rng.random() < cfg.text_fraction:
            template = _REPORT_TEMPLATES[int(rng.integers(len(_REPORT_TEMPLATES)))]
            report = template.format(term=terms[cls])
            extracted = extract_keywords(report, dictionary)
            if extracted:
                keywords = extracted

        records.append(PatientRecord(patient_id=pid, images=images, keywords=keywords))
        splits[pid] = split_of_index[p_idx]
        latent[pid] = cls

    manifest = CorpusManifest(
        modality_set=tuple(cfg.modality_set),
        records=records,
        splits=splits,
        latent_classes=latent,
        generator_seed=seed,
    )
    manifest.validate()
    return manifest


@dataclass
class LabeledExample:
    """One labeled image for fine-tuning and few-shot protocols."""

    image_id: str
    patient_id: str
    modality: str
    pixels: np.ndarray
    label: int


@dataclass
class LabeledDataset:
    class_names: tuple[str, ...]
    train: list[LabeledExample] = field(default_factory=list)
    val: list[LabeledExample] = field(default_factory=list)
    test: list[LabeledExample] = field(default_factory=list)

    def split(self, name: str) -> list[LabeledExample]:
        return {"train": self.train, "val": self.val, "test": self.test}[name]


def labeled_dataset_from_corpus(manifest: CorpusManifest) -> LabeledDataset:
    """Per-image latent-class labels for downstream evaluation protocols."""
    if not manifest.latent_classes:
        raise ConfigurationError("corpus carries no latent class labels")
    n_classes = max(manifest.latent_classes.values()) + 1
    ds = LabeledDataset(class_names=class_names(n_classes))
    for rec in manifest.records:
        split = manifest.splits[rec.patient_id]
        label = manifest.latent_classes[rec.patient_id]
        for img in rec.images:
            ds.split(split).append(
                LabeledExample(
                    image_id=img.image_id,
                    patient_id=rec.patient_id,
                    modality=img.modality,
                    pixels=img.pixels,
                    label=label,
                )
            )
    return ds
