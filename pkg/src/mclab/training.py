"""Pretraining and fine-tuning loops.

Pretraining composes batches from a partially-labeled corpus: every sampled
image feeds reconstruction; a same-patient cross-modality partner feeds the
image-image term when one exists; the patient's keyword text feeds the
image-text term when a report was available. Loss terms whose weight is
zero are skipped entirely (their inputs are never encoded), so the logged
pair counters stay at zero for disabled terms.

Fine-tuning trains an MLP head on pooled encoder features, with the encoder
frozen for the first ``freeze_epochs`` epochs, and keeps the weights with
the best validation macro AUROC.
"""

from __future__ import annotations

import copy
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .corpus import CorpusManifest, PatientRecord
from .errors import ConfigurationError, DataError, NumericError, UndefinedMetricError
from .losses import LossBreakdown, LossWeights, combined_loss
from .metrics import binary_auroc
from .model import (
    Checkpoint,
    ImageTextModel,
    ModelConfig,
    build_model,
    checkpoint_from_model,
    l2_normalize,
    patchify,
    save_checkpoint,
)
from .schedules import ScheduleSpec, finetune_schedule, lr_at, pretrain_schedule
from .synthesis import LabeledExample
from .text import Vocabulary, fit_vocabulary, keywords_as_text, save_vocabulary, tokenize


@dataclass
class PretrainConfig:
    base_lr: float = 1e-3
    warmup_epochs: float = 2.0
    total_epochs: int = 20
    batch_size: int = 64
    weights: LossWeights = field(default_factory=LossWeights)
    mask_ratio: float | None = None  # None -> model config value
    seed: int = 0
    checkpoint_every: int = 0  # epochs between periodic snapshots; 0 = off
    val_fraction: float = 0.15  # used only when the corpus has no val split
    warmup_steps: int | None = None  # overrides warmup_epochs when set
    recon_full_image: bool = False  # ablation: reconstruction loss over all patches
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.95)
    grad_clip: float = 1.0

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2")
        if self.warmup_steps is None and self.warmup_epochs >= self.total_epochs:
            raise ConfigurationError("warmup_epochs must be < total_epochs")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must lie in (0, 1)")
        self.weights.validate()


@dataclass
class FinetuneConfig:
    mode: str = "single_label"
    total_epochs: int = 50
    freeze_epochs: int = 5
    warmup_epochs: float = 10.0
    peak_lr: float = 5e-4
    final_lr: float = 1e-6
    batch_size: int = 16
    constant_lr: bool = False
    head_hidden: int | None = None  # None -> encoder dim
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.95)
    grad_clip: float = 1.0
    seed: int = 0

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "FinetuneConfig":
        """Protocol defaults: multi-label runs 30 epochs, batch 4, lr 0.01."""
        if mode == "multi_label":
            base = cls(mode=mode, total_epochs=30, batch_size=4, peak_lr=1e-2,
                       constant_lr=True)
        elif mode == "single_label":
            base = cls(mode=mode)
        else:
            raise ConfigurationError(f"unknown fine-tune mode {mode!r}")
        return replace(base, **overrides)

    def validate(self) -> None:
        if self.mode not in ("single_label", "multi_label"):
            raise ConfigurationError(f"unknown fine-tune mode {self.mode!r}")
        if self.freeze_epochs >= self.total_epochs:
            raise ConfigurationError("freeze_epochs must be < total_epochs")
        if not self.constant_lr and self.warmup_epochs > self.total_epochs:
            raise ConfigurationError("warmup_epochs must be <= total_epochs")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")


@dataclass
class Batch:
    """One composed pretraining batch (numpy side, converted lazily)."""

    pixels: np.ndarray            # [B, H, W, C] float32
    image_ids: list[str]
    patient_ids: list[str]
    partner_pixels: np.ndarray    # [B, H, W, C]; rows without partner are zero
    has_partner: np.ndarray       # [B] bool
    token_ids: np.ndarray         # [B, L] int64; rows without text are padding
    has_text: np.ndarray          # [B] bool

    @property
    def n_img_pairs(self) -> int:
        return int(self.has_partner.sum())

    @property
    def n_text_pairs(self) -> int:
        return int(self.has_text.sum())


def compose_batch(
    patients: list[PatientRecord],
    batch_size: int,
    rng: np.random.Generator,
    vocab: Vocabulary,
) -> Batch:
    """Sample patients uniformly and assemble one pretraining batch.

    Each sampled patient contributes one uniformly chosen image; a
    same-patient cross-modality partner and the tokenized keyword text are
    attached when available. Every sample always feeds reconstruction.
    """
    if not patients:
        raise DataError("cannot compose a batch from an empty split")
    replace_draw = batch_size > len(patients)
    idx = rng.choice(len(patients), size=batch_size, replace=replace_draw)

    pixels, image_ids, patient_ids = [], [], []
    partner_pixels, has_partner = [], []
    token_rows, has_text = [], []
    zero_img = None
    for i in idx:
        patient = patients[int(i)]
        img = patient.images[int(rng.integers(len(patient.images)))]
        if zero_img is None:
            zero_img = np.zeros_like(img.pixels)
        partners = [p for p in patient.images if p.modality != img.modality]
        if partners:
            partner = partners[int(rng.integers(len(partners)))]
            partner_pixels.append(partner.pixels)
            has_partner.append(True)
        else:
            partner_pixels.append(zero_img)
            has_partner.append(False)
        if patient.keywords:
            token_rows.append(tokenize(keywords_as_text(patient.keywords), vocab))
            has_text.append(True)
        else:
            token_rows.append(np.zeros(vocab.max_len, dtype=np.int64))
            has_text.append(False)
        pixels.append(img.pixels)
        image_ids.append(img.image_id)
        patient_ids.append(patient.patient_id)

    return Batch(
        pixels=np.stack(pixels).astype(np.float32),
        image_ids=image_ids,
        patient_ids=patient_ids,
        partner_pixels=np.stack(partner_pixels).astype(np.float32),
        has_partner=np.asarray(has_partner, dtype=bool),
        token_ids=np.stack(token_rows),
        has_text=np.asarray(has_text, dtype=bool),
    )


def _masked_image_embedding(
    model: ImageTextModel,
    pixels: torch.Tensor,
    mask_ratio: float,
    generator: torch.Generator,
):
    """One encoder pass serving both contrastive embedding and reconstruction."""
    visible, mask = model.mask_patches(pixels, mask_ratio, generator)
    feats = model.encode_visible(visible, mask)
    pooled = feats.mean(dim=1)
    embedding = l2_normalize(model.image_proj(pooled))
    return feats, mask, embedding


def _forward_step(
    model: ImageTextModel,
    batch: Batch,
    weights: LossWeights,
    mask_ratio: float,
    generator: torch.Generator,
    recon_full_image: bool = False,
) -> tuple[torch.Tensor, LossBreakdown]:
    pixels = torch.from_numpy(batch.pixels)
    feats, mask, anchor_emb = _masked_image_embedding(
        model, pixels, mask_ratio, generator
    )
    recon = model.decoder(feats, mask)
    target = patchify(pixels, model.cfg.patch_size)
    recon_mask = torch.ones_like(mask) if recon_full_image else mask

    img_img = None
    if weights.lambda_img_img > 0 and batch.n_img_pairs >= 2:
        sel = torch.from_numpy(batch.has_partner)
        partner_pixels = torch.from_numpy(batch.partner_pixels[batch.has_partner])
        _, _, partner_emb = _masked_image_embedding(
            model, partner_pixels, mask_ratio, generator
        )
        img_img = (anchor_emb[sel], partner_emb)

    img_text = None
    if weights.lambda_img_text > 0 and batch.n_text_pairs >= 2:
        sel = torch.from_numpy(batch.has_text)
        tokens = torch.from_numpy(batch.token_ids[batch.has_text])
        _, txt_emb = model.encode_text(tokens)
        img_text = (anchor_emb[sel], txt_emb)

    total, breakdown = combined_loss(
        weights,
        model.temperature,
        img_text=img_text,
        img_img=img_img,
        recon=(recon, target, recon_mask),
    )
    # Disabled terms never ran; report their counters as zero.
    if weights.lambda_img_img == 0:
        breakdown.n_img_pairs = 0
    if weights.lambda_img_text == 0:
        breakdown.n_text_pairs = 0
    return total, breakdown


def _optimizer_for(model_params, lr: float, weight_decay: float, betas) -> torch.optim.AdamW:
    decay, no_decay = [], []
    for p in model_params:
        if not p.requires_grad:
            continue
        (decay if p.dim() >= 2 else no_decay).append(p)
    return torch.optim.AdamW(
        [
            {"params": decay, "weight_decay": weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=lr,
        betas=betas,
    )


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _ensure_val_split(
    manifest: CorpusManifest, val_fraction: float, seed: int
) -> tuple[list[PatientRecord], list[PatientRecord]]:
    train = manifest.patients("train")
    val = manifest.patients("val")
    if val:
        return train, val
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A11D]))
    order = rng.permutation(len(train))
    n_val = max(1, int(len(train) * val_fraction))
    val_idx = set(order[:n_val].tolist())
    return (
        [p for i, p in enumerate(train) if i not in val_idx],
        [p for i, p in enumerate(train) if i in val_idx],
    )


def _check_parameters_finite(model: nn.Module) -> None:
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            raise NumericError(f"parameter {name} became non-finite")


def pretrain(
    manifest: CorpusManifest,
    cfg: PretrainConfig,
    out_dir: Path,
    model_cfg: ModelConfig | None = None,
) -> Path:
    """Run the pretraining loop; returns the path of the best checkpoint.

    The checkpoint with the lowest validation combined loss is kept. A
    structured JSONL log receives one record per step plus one validation
    record per epoch.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    (out_dir / "logs").mkdir(parents=True, exist_ok=True)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    train_patients, val_patients = _ensure_val_split(
        manifest, cfg.val_fraction, cfg.seed
    )
    if not train_patients:
        raise DataError("corpus has no training patients")

    texts = [
        keywords_as_text(p.keywords) for p in train_patients if p.keywords
    ]
    base_cfg = model_cfg or ModelConfig()
    vocab = fit_vocabulary(texts, max_len=base_cfg.max_text_len)
    base_cfg = replace(base_cfg, vocab_size=max(vocab.size, 8))
    model = build_model(base_cfg, seed=cfg.seed)
    save_vocabulary(vocab, out_dir / "vocabulary.tsv")

    mask_ratio = cfg.mask_ratio if cfg.mask_ratio is not None else base_cfg.mask_ratio
    steps_per_epoch = max(1, math.ceil(len(train_patients) / cfg.batch_size))
    schedule = pretrain_schedule(
        cfg.base_lr, cfg.warmup_epochs, cfg.total_epochs, steps_per_epoch,
        warmup_steps=cfg.warmup_steps,
    )
    optimizer = _optimizer_for(
        model.parameters(), cfg.base_lr, cfg.weight_decay, cfg.betas
    )
    batch_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xBA7C4]))
    mask_gen = torch.Generator().manual_seed(cfg.seed)

    vocab_extra = {"words": vocab.word_to_id, "max_len": vocab.max_len}
    log_path = out_dir / "logs" / "train_log.jsonl"
    best_path = out_dir / "checkpoints" / "best.ckpt"
    best_val = math.inf
    step = 0
    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(cfg.total_epochs):
            model.train()
            for _ in range(steps_per_epoch):
                batch = compose_batch(
                    train_patients, cfg.batch_size, batch_rng, vocab
                )
                lr = lr_at(step, schedule)
                _set_lr(optimizer, lr)
                try:
                    total, breakdown = _forward_step(
                        model, batch, cfg.weights, mask_ratio, mask_gen,
                        recon_full_image=cfg.recon_full_image,
                    )
                except NumericError as exc:
                    raise NumericError(
                        f"{exc}; offending batch image ids: {batch.image_ids}"
                    ) from exc
                optimizer.zero_grad(set_to_none=True)
                total.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
                optimizer.step()
                model.clamp_temperature_()
                _check_parameters_finite(model)
                record = {
                    "step": step,
                    "epoch": epoch,
                    "lr": lr,
                    "l_img_text": breakdown.l_img_text,
                    "l_img_img": breakdown.l_img_img,
                    "l_recon": breakdown.l_recon,
                    "total": breakdown.total,
                    "n_text_pairs": breakdown.n_text_pairs,
                    "n_img_pairs": breakdown.n_img_pairs,
                }
                log.write(json.dumps(record) + "\n")
                step += 1

            val_total = evaluate_val_loss(
                model, val_patients, cfg, vocab, mask_ratio
            )
            log.write(
                json.dumps({"kind": "val", "epoch": epoch, "val_total": val_total})
                + "\n"
            )
            if val_total < best_val:
                best_val = val_total
                ckpt = checkpoint_from_model(
                    model,
                    optimizer_state=_optimizer_arrays(model, optimizer),
                    step=step,
                    epoch=epoch,
                    rng_state=bytes(torch.get_rng_state().numpy().tobytes()),
                    val_loss=val_total,
                    extra={"vocabulary": vocab_extra, "pretrain_seed": cfg.seed},
                )
                save_checkpoint(ckpt, best_path)
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                snap = checkpoint_from_model(
                    model, step=step, epoch=epoch, val_loss=val_total,
                    extra={"vocabulary": vocab_extra},
                )
                save_checkpoint(snap, out_dir / "checkpoints" / f"epoch{epoch:04d}.ckpt")
    if not best_path.exists():
        raise DataError("pretraining produced no checkpoint")
    return best_path


def evaluate_val_loss(
    model: ImageTextModel,
    val_patients: list[PatientRecord],
    cfg: PretrainConfig,
    vocab: Vocabulary,
    mask_ratio: float,
) -> float:
    """Mean combined loss over the validation split.

    Validation batches and masks are drawn from fixed seeds, so every epoch
    sees the same validation set and the per-epoch values are comparable.
    """
    if not val_patients:
        raise DataError("corpus has no validation patients")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7E57]))
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    n_batches = max(1, math.ceil(len(val_patients) / cfg.batch_size))
    model.eval()
    totals = []
    with torch.no_grad():
        for _ in range(n_batches):
            batch = compose_batch(
                val_patients, min(cfg.batch_size, max(2, len(val_patients))),
                rng, vocab,
            )
            total, _ = _forward_step(
                model, batch, cfg.weights, mask_ratio, gen,
                recon_full_image=cfg.recon_full_image,
            )
            totals.append(float(total))
    model.train()
    return float(np.mean(totals))


def _optimizer_arrays(
    model: ImageTextModel, optimizer: torch.optim.Optimizer
) -> dict[str, np.ndarray]:
    """Flatten AdamW moments into named float32 arrays for the checkpoint."""
    name_of = {id(p): n for n, p in model.named_parameters()}
    out: dict[str, np.ndarray] = {}
    for p, state in optimizer.state.items():
        name = name_of.get(id(p))
        if name is None:
            continue
        for key in ("exp_avg", "exp_avg_sq"):
            if key in state:
                out[f"{name}.{key}"] = state[key].detach().numpy().astype(np.float32)
        if "step" in state:
            step_t = state["step"]
            if isinstance(step_t, torch.Tensor):
                step_t = step_t.item()
            out[f"{name}.step"] = np.asarray([float(step_t)], dtype=np.float32)
    return out


# ---------------------------------------------------------------------------
# Fine-tuning
# ---------------------------------------------------------------------------


class ImageClassifier(nn.Module):
    """Pooled encoder features -> one-hidden-layer MLP -> class logits."""

    def __init__(self, base: ImageTextModel, n_out: int, hidden: int | None = None):
        super().__init__()
        self.base = base
        width = hidden or base.cfg.enc_dim
        self.head = nn.Sequential(
            nn.Linear(base.cfg.enc_dim, width),
            nn.GELU(),
            nn.Linear(width, n_out),
        )

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        feats, _ = self.base.encode_image(pixels)
        return self.head(feats)

    def encoder_parameters(self):
        return list(self.base.image_encoder.parameters())

    def set_encoder_frozen(self, frozen: bool) -> None:
        for p in self.encoder_parameters():
            p.requires_grad_(not frozen)


@dataclass
class FinetuneResult:
    classifier: ImageClassifier
    class_names: tuple[str, ...]
    best_val_auroc: float
    best_epoch: int
    history: list[dict]
    lr_history: list[float] = field(default_factory=list)
    schedule: ScheduleSpec | None = None


def _labels_matrix(examples: list[LabeledExample], n_classes: int, mode: str) -> np.ndarray:
    if mode == "multi_label":
        rows = []
        for ex in examples:
            row = np.zeros(n_classes, dtype=np.int64)
            for lbl in np.atleast_1d(ex.label):
                row[int(lbl)] = 1
            rows.append(row)
        return np.stack(rows)
    return np.asarray([int(ex.label) for ex in examples], dtype=np.int64)


def _safe_macro_auroc(probs: np.ndarray, labels: np.ndarray) -> float:
    """Macro AUROC over columns where both classes occur; errors if none do."""
    n, c = probs.shape
    if labels.ndim == 1:
        onehot = np.zeros((n, c), dtype=np.int64)
        onehot[np.arange(n), labels] = 1
        labels = onehot
    values = []
    for col in range(c):
        try:
            values.append(binary_auroc(probs[:, col], labels[:, col]))
        except UndefinedMetricError:
            continue
    if not values:
        raise UndefinedMetricError("no class with both outcomes in validation split")
    return float(np.mean(values))


def predict_probabilities(
    classifier: ImageClassifier,
    examples: list[LabeledExample],
    mode: str,
    batch_size: int = 64,
) -> np.ndarray:
    """Class probabilities: softmax rows (single label) or sigmoids (multi)."""
    classifier.eval()
    outs = []
    with torch.no_grad():
        for lo in range(0, len(examples), batch_size):
            chunk = examples[lo : lo + batch_size]
            pixels = torch.from_numpy(
                np.stack([ex.pixels for ex in chunk]).astype(np.float32)
            )
            logits = classifier(pixels)
            probs = (
                torch.softmax(logits, dim=1)
                if mode == "single_label"
                else torch.sigmoid(logits)
            )
            outs.append(probs.numpy())
    return np.concatenate(outs, axis=0)


def finetune(
    checkpoint: Checkpoint,
    train_examples: list[LabeledExample],
    val_examples: list[LabeledExample],
    class_names: tuple[str, ...],
    cfg: FinetuneConfig,
    epoch_callback=None,
) -> FinetuneResult:
    """Fine-tune a classifier head (then the encoder) on labeled images.

    The encoder stays frozen for the first ``freeze_epochs`` epochs. After
    each epoch the validation macro AUROC is computed and the best weights
    are retained.
    """
    cfg.validate()
    n_classes = len(class_names)
    if cfg.mode == "single_label" and n_classes < 2:
        raise ConfigurationError("single-label fine-tuning needs >= 2 classes")
    train_labels = _labels_matrix(train_examples, n_classes, cfg.mode)
    if cfg.mode == "single_label":
        present = set(train_labels.tolist())
        missing = [name for i, name in enumerate(class_names) if i not in present]
        if missing:
            raise ConfigurationError(
                f"classes absent from the training split: {missing}"
            )

    torch.manual_seed(cfg.seed)
    classifier = ImageClassifier(checkpoint.build(), n_classes, cfg.head_hidden)
    steps_per_epoch = max(1, math.ceil(len(train_examples) / cfg.batch_size))
    schedule: ScheduleSpec | None = None
    if not cfg.constant_lr:
        schedule = finetune_schedule(
            cfg.peak_lr, cfg.final_lr, cfg.warmup_epochs, cfg.total_epochs,
            steps_per_epoch,
        )
    optimizer = _optimizer_for(
        classifier.parameters(), cfg.peak_lr, cfg.weight_decay, cfg.betas
    )
    loss_fn = (
        nn.CrossEntropyLoss() if cfg.mode == "single_label" else nn.BCEWithLogitsLoss()
    )
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xF17E]))

    val_labels = _labels_matrix(val_examples, n_classes, cfg.mode)
    best_val = -math.inf
    best_state = None
    best_epoch = -1
    history: list[dict] = []
    lr_history: list[float] = []
    step = 0
    for epoch in range(cfg.total_epochs):
        classifier.set_encoder_frozen(epoch < cfg.freeze_epochs)
        classifier.train()
        order = rng.permutation(len(train_examples))
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            sel = order[lo : lo + cfg.batch_size]
            pixels = torch.from_numpy(
                np.stack([train_examples[i].pixels for i in sel]).astype(np.float32)
            )
            if cfg.mode == "single_label":
                target = torch.from_numpy(train_labels[sel])
            else:
                target = torch.from_numpy(train_labels[sel].astype(np.float32))
            lr = cfg.peak_lr if cfg.constant_lr else lr_at(step, schedule)
            lr_history.append(lr)
            _set_lr(optimizer, lr)
            logits = classifier(pixels)
            loss = loss_fn(logits, target)
            if not torch.isfinite(loss):
                raise NumericError(f"fine-tune loss non-finite at step {step}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(
                [p for p in classifier.parameters() if p.requires_grad],
                cfg.grad_clip,
            )
            optimizer.step()
            epoch_loss += float(loss.detach())
            step += 1

        probs = predict_probabilities(classifier, val_examples, cfg.mode)
        val_auroc = _safe_macro_auroc(probs, val_labels)
        history.append(
            {"epoch": epoch, "train_loss": epoch_loss / steps_per_epoch,
             "val_auroc": val_auroc}
        )
        if val_auroc > best_val:
            best_val = val_auroc
            best_epoch = epoch
            best_state = copy.deepcopy(classifier.state_dict())
        if epoch_callback is not None:
            epoch_callback(epoch, classifier)

    classifier.load_state_dict(best_state)
    classifier.set_encoder_frozen(False)
    classifier.eval()
    return FinetuneResult(
        classifier=classifier,
        class_names=class_names,
        best_val_auroc=best_val,
        best_epoch=best_epoch,
        history=history,
        lr_history=lr_history,
        schedule=schedule,
    )


def fewshot_sample(
    examples: list[LabeledExample],
    n_per_class: int,
    seed: int,
    class_names: tuple[str, ...] | None = None,
) -> list[LabeledExample]:
    """Uniform without-replacement sample of n examples per class.

    Classes with fewer than n examples contribute everything they have,
    with a warning. A class with zero examples is an error.
    """
    if n_per_class < 1:
        raise ConfigurationError("n_per_class must be >= 1")
    by_class: dict[int, list[LabeledExample]] = {}
    for ex in examples:
        by_class.setdefault(int(ex.label), []).append(ex)
    labels = sorted(by_class)
    if class_names is not None:
        for idx, name in enumerate(class_names):
            if idx not in by_class:
                raise DataError(f"class {name!r} has zero examples")
    out: list[LabeledExample] = []
    for label in labels:
        pool = sorted(by_class[label], key=lambda ex: ex.image_id)
        rng = np.random.default_rng(np.random.SeedSequence([seed, label]))
        take = min(n_per_class, len(pool))
        if take < n_per_class:
            warnings.warn(
                f"class {label} has only {len(pool)} examples; taking all",
                stacklevel=2,
            )
        chosen = rng.choice(len(pool), size=take, replace=False)
        out.extend(pool[int(i)] for i in sorted(chosen))
    return out
