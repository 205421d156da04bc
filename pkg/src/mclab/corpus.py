"""Multi-modal patient corpus: data model, cross-modality pairing, persistence.

A corpus is a set of patients, each carrying one or more examination images
tagged with a modality, optionally a keyword label set, and a train/val/test
split assignment. Splits are disjoint by patient, never by image.

On-disk layout of a corpus directory::

    <dir>/manifest.jsonl    header line + one JSON record per patient
    <dir>/images/...        one lossless 8-bit PPM (P6) file per image

Pixels live in memory as float32 arrays in [0, 1]; files store 8-bit
channels and loading divides by 255, so generated corpora must quantize
to the 8-bit grid to round-trip exactly (the synthetic generator does).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IntegrityError, ManifestParseError, ValidationError

MANIFEST_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
SPLITS = ("train", "val", "test")

# Long names used when building text prompts. Tags without an entry fall
# back to the lowercased tag itself.
DEFAULT_MODALITY_LONG_NAMES = {
    "CFP": "color fundus",
    "FFA": "fundus fluorescein angiography",
    "ICGA": "indocyanine green angiography",
    "FAF": "fundus autofluorescence",
}

DEFAULT_MODALITY_SET = ("CFP", "OCT", "FFA", "ICGA", "FAF")


def validate_modality_set(tags) -> tuple[str, ...]:
    """Check tags are non-empty, uppercase and unique; return them as a tuple."""
    tags = tuple(tags)
    seen = set()
    for tag in tags:
        if not tag or tag != tag.upper():
            raise ValidationError(f"modality tag {tag!r} must be non-empty uppercase")
        if tag in seen:
            raise ValidationError(f"duplicate modality tag {tag!r}")
        seen.add(tag)
    return tags


@dataclass
class ImageRecord:
    """One examination image: pixels in [0, 1], shape H x W x C."""

    image_id: str
    patient_id: str
    modality: str
    pixels: np.ndarray

    def validate(self) -> None:
        if not self.patient_id:
            raise ValidationError(f"image {self.image_id!r} has empty patient_id")
        px = self.pixels
        if not np.all(np.isfinite(px)):
            raise ValidationError(f"image {self.image_id!r} has non-finite pixels")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValidationError(f"image {self.image_id!r} has pixels outside [0, 1]")
        if px.ndim != 3:
            raise ValidationError(f"image {self.image_id!r} pixels must be H x W x C")


@dataclass
class PatientRecord:
    """A patient's examination images plus an optional keyword label set."""

    patient_id: str
    images: list[ImageRecord]
    keywords: tuple[str, ...] | None = None

    def validate(self) -> None:
        if not self.patient_id:
            raise ValidationError("patient_id must be non-empty")
        for img in self.images:
            if img.patient_id != self.patient_id:
                raise ValidationError(
                    f"image {img.image_id!r} carries patient {img.patient_id!r}, "
                    f"expected {self.patient_id!r}"
                )
        if self.keywords is not None and len(self.keywords) == 0:
            raise ValidationError(
                f"patient {self.patient_id!r}: keywords must be absent or non-empty"
            )


@dataclass
class CorpusManifest:
    """A full corpus: declared modality set, patients, per-patient splits."""

    modality_set: tuple[str, ...]
    records: list[PatientRecord]
    splits: dict[str, str] = field(default_factory=dict)
    latent_classes: dict[str, int] = field(default_factory=dict)
    generator_seed: int | None = None

    def validate(self) -> None:
        validate_modality_set(self.modality_set)
        seen_images: set[str] = set()
        seen_patients: set[str] = set()
        for rec in self.records:
            rec.validate()
            if rec.patient_id in seen_patients:
                raise ValidationError(f"duplicate patient {rec.patient_id!r}")
            seen_patients.add(rec.patient_id)
            split = self.splits.get(rec.patient_id)
            if split not in SPLITS:
                raise ValidationError(
                    f"patient {rec.patient_id!r} has invalid split {split!r}"
                )
            for img in rec.images:
                if img.image_id in seen_images:
                    raise ValidationError(f"duplicate image id {img.image_id!r}")
                seen_images.add(img.image_id)
                if img.modality not in self.modality_set:
                    raise ValidationError(
                        f"image {img.image_id!r} has undeclared modality "
                        f"{img.modality!r}"
                    )

    def patients(self, split: str | None = None) -> list[PatientRecord]:
        if split is None:
            return list(self.records)
        if split not in SPLITS:
            raise ValidationError(f"unknown split {split!r}")
        return [r for r in self.records if self.splits[r.patient_id] == split]

    def images(self, split: str | None = None) -> list[ImageRecord]:
        return [img for rec in self.patients(split) for img in rec.images]

    def __eq__(self, other) -> bool:
        if not isinstance(other, CorpusManifest):
            return NotImplemented
        if (
            self.modality_set != other.modality_set
            or self.generator_seed != other.generator_seed
            or self.splits != other.splits
            or self.latent_classes != other.latent_classes
            or len(self.records) != len(other.records)
        ):
            return False
        for a, b in zip(self.records, other.records):
            if a.patient_id != b.patient_id or a.keywords != b.keywords:
                return False
            if len(a.images) != len(b.images):
                return False
            for ia, ib in zip(a.images, b.images):
                if (
                    ia.image_id != ib.image_id
                    or ia.modality != ib.modality
                    or not np.array_equal(ia.pixels, ib.pixels)
                ):
                    return False
        return True


def pair_examinations(patient: PatientRecord) -> list[tuple[ImageRecord, ImageRecord]]:
    """All unordered cross-modality image pairs of one patient.

    Pairs within the same modality are excluded. Order is deterministic:
    images sorted by image_id, each pair stored as (smaller, larger).
    """
    images = sorted(patient.images, key=lambda img: img.image_id)
    return [
        (a, b)
        for a, b in itertools.combinations(images, 2)
        if a.modality != b.modality
    ]


# ---------------------------------------------------------------------------
# PPM (P6) image files: lossless 8-bit raster, trivially deterministic bytes.
# ---------------------------------------------------------------------------


def write_ppm(path: Path, pixels: np.ndarray) -> None:
    """Write an H x W x 3 float [0,1] array as a binary P6 file."""
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValidationError(f"PPM output requires H x W x 3, got {pixels.shape}")
    data = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w, _ = data.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path: Path) -> np.ndarray:
    """Read a binary P6 file into a float32 [0,1] array of shape H x W x 3."""
    with open(path, "rb") as fh:
        raw = fh.read()
    # Header: magic, width, height, maxval as whitespace-separated tokens.
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P6" or tokens[3] != b"255":
        raise ValidationError(f"{path}: not an 8-bit P6 file")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w * 3, offset=pos)
    if data.size != h * w * 3:
        raise ValidationError(f"{path}: truncated pixel data")
    return (data.reshape(h, w, 3).astype(np.float32)) / 255.0


# ---------------------------------------------------------------------------
# Manifest persistence
# ---------------------------------------------------------------------------


def image_relative_path(image_id: str) -> str:
    return f"images/{image_id}.ppm"


def persist_corpus(manifest: CorpusManifest, directory: Path) -> Path:
    """Write manifest + image files under ``directory``; returns manifest path."""
    manifest.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "modality_set": list(manifest.modality_set),
        "generator_seed": manifest.generator_seed,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for rec in manifest.records:
        entry = {
            "patient_id": rec.patient_id,
            "split": manifest.splits[rec.patient_id],
            "images": [
                {
                    "image_id": img.image_id,
                    "modality": img.modality,
                    "relative_path": image_relative_path(img.image_id),
                }
                for img in rec.images
            ],
        }
        if rec.keywords is not None:
            entry["keywords"] = list(rec.keywords)
        if rec.patient_id in manifest.latent_classes:
            entry["latent_class"] = manifest.latent_classes[rec.patient_id]
        lines.append(json.dumps(entry, sort_keys=True))
        for img in rec.images:
            write_ppm(directory / image_relative_path(img.image_id), img.pixels)
    path = directory / MANIFEST_NAME
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_corpus(directory: Path) -> CorpusManifest:
    """Load a corpus directory written by :func:`persist_corpus`.

    Raises ManifestParseError naming the 1-based line number on malformed
    lines, and IntegrityError naming the image_id on missing image files.
    """
    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not path.exists():
        raise ValidationError(f"no manifest at {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ManifestParseError(1, "empty manifest")

    def parse(line_no: int, text: str) -> dict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(line_no, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise ManifestParseError(line_no, "expected a JSON object")
        return obj

    header = parse(1, lines[0])
    if header.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise ManifestParseError(
            1, f"unsupported format_version {header.get('format_version')!r}"
        )
    try:
        modality_set = validate_modality_set(header["modality_set"])
    except KeyError:
        raise ManifestParseError(1, "header missing modality_set") from None

    records: list[PatientRecord] = []
    splits: dict[str, str] = {}
    latent: dict[str, int] = {}
    for line_no, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        obj = parse(line_no, text)
        for key in ("patient_id", "split", "images"):
            if key not in obj:
                raise ManifestParseError(line_no, f"record missing {key!r}")
        pid = obj["patient_id"]
        if pid in splits and splits[pid] != obj["split"]:
            raise ValidationError(
                f"patient {pid!r} appears in splits {splits[pid]!r} and "
                f"{obj['split']!r}"
            )
        if obj["split"] not in SPLITS:
            raise ManifestParseError(line_no, f"invalid split {obj['split']!r}")
        images = []
        for img in obj["images"]:
            rel = img["relative_path"]
            img_path = directory / rel
            if not img_path.exists():
                raise IntegrityError(img["image_id"], f"missing file {rel}")
            images.append(
                ImageRecord(
                    image_id=img["image_id"],
                    patient_id=pid,
                    modality=img["modality"],
                    pixels=read_ppm(img_path),
                )
            )
        keywords = tuple(obj["keywords"]) if "keywords" in obj else None
        records.append(PatientRecord(patient_id=pid, images=images, keywords=keywords))
        splits[pid] = obj["split"]
        if "latent_class" in obj:
            latent[pid] = int(obj["latent_class"])

    manifest = CorpusManifest(
        modality_set=modality_set,
        records=records,
        splits=splits,
        latent_classes=latent,
        generator_seed=header.get("generator_seed"),
    )
    manifest.validate()
    return manifest
