"""Contrastive and reconstruction losses plus their weighted combination.

Both contrastive terms are symmetric, temperature-scaled softmax losses
over in-batch similarity matrices with positives on the diagonal: the mean
of the row-wise (a -> b) and column-wise (b -> a) cross-entropies. The
reconstruction term is a mean squared error restricted to masked patches.

All functions are pure, differentiable in every tensor argument including
the temperature, and preserve the dtype of their inputs (tests run them in
float64). Softmax normalization subtracts the per-row maximum and
similarities are clamped to [-1, 1] before division by the temperature.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigurationError, DegenerateBatchError, NumericError

TEMPERATURE_RANGE = (0.01, 100.0)


@dataclass
class LossWeights:
    lambda_img_text: float = 0.75
    lambda_img_img: float = 0.75
    lambda_recon: float = 1.0

    def validate(self) -> None:
        weights = (self.lambda_img_text, self.lambda_img_img, self.lambda_recon)
        if any(w < 0 for w in weights):
            raise ConfigurationError("loss weights must be non-negative")
        if all(w == 0 for w in weights):
            raise ConfigurationError("at least one loss weight must be positive")


@dataclass
class LossBreakdown:
    """Per-term values and batch bookkeeping for one training step."""

    l_img_text: float
    l_img_img: float
    l_recon: float
    total: float
    n_text_pairs: int
    n_img_pairs: int
    n_masked: int

    def as_dict(self) -> dict:
        return {
            "l_img_text": self.l_img_text,
            "l_img_img": self.l_img_img,
            "l_recon": self.l_recon,
            "total": self.total,
            "n_text_pairs": self.n_text_pairs,
            "n_img_pairs": self.n_img_pairs,
            "n_masked": self.n_masked,
        }


def _as_tau(tau) -> torch.Tensor:
    t = tau if isinstance(tau, torch.Tensor) else torch.tensor(float(tau), dtype=torch.float64)
    lo, hi = TEMPERATURE_RANGE
    value = float(t.detach())
    # float32 temperatures clamped exactly to the boundary sit one ulp below it
    if not (lo * (1 - 1e-6) <= value <= hi * (1 + 1e-6)):
        raise ConfigurationError(
            f"temperature {value} outside clamp range [{lo}, {hi}]"
        )
    return t


def _check_pair_batch(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.dim() != 2 or b.dim() != 2 or a.shape != b.shape:
        raise DegenerateBatchError(
            f"contrastive inputs must be matching N x d matrices, got "
            f"{tuple(a.shape)} and {tuple(b.shape)}"
        )
    if a.shape[0] < 2:
        raise DegenerateBatchError(
            f"contrastive loss undefined for batch of {a.shape[0]} (no negatives)"
        )
    if not torch.isfinite(a).all() or not torch.isfinite(b).all():
        raise NumericError("non-finite values in contrastive inputs")


def _diagonal_cross_entropy(logits: torch.Tensor) -> torch.Tensor:
    """Mean over rows of -log softmax(logits)[i, i], max-subtracted."""
    shifted = logits - logits.max(dim=1, keepdim=True).values
    lse = torch.logsumexp(shifted, dim=1)
    return (lse - shifted.diagonal()).mean()


def _symmetric_info_nce(a: torch.Tensor, b: torch.Tensor, tau) -> torch.Tensor:
    _check_pair_batch(a, b)
    tau = _as_tau(tau)
    sims = torch.clamp(a @ b.T, -1.0, 1.0)
    logits = sims / tau
    return 0.5 * (_diagonal_cross_entropy(logits) + _diagonal_cross_entropy(logits.T))


def image_text_contrastive(img_embs: torch.Tensor, txt_embs: torch.Tensor, tau) -> torch.Tensor:
    """Symmetric InfoNCE between matched image and text embeddings.

    Row i of both matrices belongs to the same sample; every other row in
    the batch acts as a negative.
    """
    return _symmetric_info_nce(img_embs, txt_embs, tau)


def image_image_contrastive(embs_a: torch.Tensor, embs_b: torch.Tensor, tau) -> torch.Tensor:
    """Symmetric InfoNCE between same-patient cross-modality image pairs."""
    return _symmetric_info_nce(embs_a, embs_b, tau)


def masked_reconstruction_loss(
    reconstructed: torch.Tensor, original: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    """Mean squared error over elements of masked patches only.

    reconstructed/original: [B, P, patch_dim]; mask: [B, P] bool with
    True = masked. Zero masked patches yield 0 by definition.
    """
    if reconstructed.shape != original.shape:
        raise DegenerateBatchError(
            f"reconstruction shapes differ: {tuple(reconstructed.shape)} vs "
            f"{tuple(original.shape)}"
        )
    if mask.shape != reconstructed.shape[:2]:
        raise DegenerateBatchError(
            f"mask shape {tuple(mask.shape)} does not match patch grid "
            f"{tuple(reconstructed.shape[:2])}"
        )
    if not torch.isfinite(reconstructed).all() or not torch.isfinite(original).all():
        raise NumericError("non-finite values in reconstruction inputs")
    n_masked = int(mask.sum())
    if n_masked == 0:
        return torch.zeros((), dtype=reconstructed.dtype)
    sq = (reconstructed - original) ** 2
    per_patch = sq.mean(dim=-1)
    return (per_patch * mask.to(per_patch.dtype)).sum() / n_masked


def weighted_total(weights: LossWeights, l_img_text, l_img_img, l_recon):
    """The exact weighted sum of the three term values."""
    return (
        weights.lambda_img_text * l_img_text
        + weights.lambda_img_img * l_img_img
        + weights.lambda_recon * l_recon
    )


def combined_loss(
    weights: LossWeights,
    tau,
    img_text: tuple[torch.Tensor, torch.Tensor] | None = None,
    img_img: tuple[torch.Tensor, torch.Tensor] | None = None,
    recon: tuple[torch.Tensor, torch.Tensor, torch.Tensor] | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Weighted sum of the available loss terms.

    A term is available when its inputs are present and, for the
    contrastive terms, carry at least two pairs; unavailable terms are
    reported as 0 and contribute nothing to the gradient. All three terms
    unavailable is a degenerate batch.
    """
    weights.validate()
    n_text = 0 if img_text is None else int(img_text[0].shape[0])
    n_img = 0 if img_img is None else int(img_img[0].shape[0])
    n_masked = 0 if recon is None else int(recon[2].sum())
    if n_text < 2 and n_img < 2 and recon is None:
        raise DegenerateBatchError("no loss term available in this batch")

    terms = {
        "it": image_text_contrastive(img_text[0], img_text[1], tau)
        if n_text >= 2
        else None,
        "ii": image_image_contrastive(img_img[0], img_img[1], tau)
        if n_img >= 2
        else None,
        "rec": masked_reconstruction_loss(*recon) if recon is not None else None,
    }
    dtype = next(t.dtype for t in terms.values() if t is not None)
    zero = torch.zeros((), dtype=dtype)
    l_it = terms["it"] if terms["it"] is not None else zero
    l_ii = terms["ii"] if terms["ii"] is not None else zero
    l_rec = terms["rec"] if terms["rec"] is not None else zero

    total = weighted_total(weights, l_it.to(dtype), l_ii.to(dtype), l_rec.to(dtype))
    if not torch.isfinite(total):
        raise NumericError("combined loss is non-finite")
    breakdown = LossBreakdown(
        l_img_text=float(l_it.detach()),
        l_img_img=float(l_ii.detach()),
        l_recon=float(l_rec.detach()),
        total=float(total.detach()),
        n_text_pairs=n_text,
        n_img_pairs=n_img,
        n_masked=n_masked,
    )
    return total, breakdown
