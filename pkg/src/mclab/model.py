"""Shared image encoder, text encoder, patch decoder, and projection heads.

All images, whatever their modality, go through the same patch-based
transformer encoder. Images and text are projected into one unit-sphere
embedding space; a lightweight decoder reconstructs masked patches from the
visible ones. Sizes default to a desk-scale configuration (~1.5M parameters)
that trains on a CPU in minutes.

Checkpoints are a single binary container: magic + format version, a JSON
header (config, counters, RNG state, array manifest), then raw float32
little-endian arrays. Loading rejects mismatched format versions and
round-trips bit-exactly.
"""

from __future__ import annotations

import base64
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, DimensionError, ValidationError
from .text import END_ID, PAD_ID

CHECKPOINT_MAGIC = b"MCLAB-CKPT"
CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    image_size: int = 64
    patch_size: int = 8
    in_channels: int = 3
    enc_dim: int = 128
    enc_depth: int = 4
    enc_heads: int = 4
    dec_dim: int = 64
    dec_depth: int = 2
    text_dim: int = 128
    text_depth: int = 2
    text_heads: int = 4
    vocab_size: int = 64
    max_text_len: int = 64
    proj_dim: int = 128
    mlp_ratio: float = 4.0
    mask_ratio: float = 0.75
    temperature_init: float = 0.07
    learnable_temperature: bool = True
    temperature_clamp: tuple[float, float] = (0.01, 100.0)

    def validate(self) -> None:
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image_size {self.image_size} not divisible by patch_size "
                f"{self.patch_size}"
            )
        for name in ("enc_dim", "enc_depth", "enc_heads", "dec_dim", "dec_depth",
                     "text_dim", "text_depth", "proj_dim", "vocab_size"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigurationError("mask_ratio must lie in [0, 1)")
        lo, hi = self.temperature_clamp
        if not (0 < lo < hi):
            raise ConfigurationError("temperature_clamp must satisfy 0 < lo < hi")
        if not lo <= self.temperature_init <= hi:
            raise ConfigurationError("temperature_init outside temperature_clamp")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_size**2

    @property
    def patch_dim(self) -> int:
        return self.patch_size**2 * self.in_channels


def patchify(pixels: torch.Tensor, patch_size: int) -> torch.Tensor:
    """[B, H, W, C] -> [B, n_patches, patch_size**2 * C], row-major patch order."""
    b, h, w, c = pixels.shape
    gh, gw = h // patch_size, w // patch_size
    x = pixels.reshape(b, gh, patch_size, gw, patch_size, c)
    x = x.permute(0, 1, 3, 2, 4, 5)
    return x.reshape(b, gh * gw, patch_size * patch_size * c)


def unpatchify(patches: torch.Tensor, patch_size: int, channels: int = 3) -> torch.Tensor:
    """Inverse of :func:`patchify` for a square grid."""
    b, n, _ = patches.shape
    g = int(math.isqrt(n))
    x = patches.reshape(b, g, g, patch_size, patch_size, channels)
    x = x.permute(0, 1, 3, 2, 4, 5)
    return x.reshape(b, g * patch_size, g * patch_size, channels)


class TransformerBlock(nn.Module):
    """Pre-norm transformer block: self-attention + MLP, residual both."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim)
        )

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor | None = None):
        h = self.norm1(x)
        attn_out, _ = self.attn(
            h, h, h, key_padding_mask=key_padding_mask, need_weights=False
        )
        x = x + attn_out
        x = x + self.mlp(self.norm2(x))
        return x


class ImageEncoder(nn.Module):
    """Patch projection + learned positional embeddings + transformer stack."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_proj = nn.Linear(cfg.patch_dim, cfg.enc_dim)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.n_patches, cfg.enc_dim))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.enc_dim, cfg.enc_heads, cfg.mlp_ratio)
            for _ in range(cfg.enc_depth)
        )
        self.norm = nn.LayerNorm(cfg.enc_dim)

    def forward(self, patches: torch.Tensor, keep_idx: torch.Tensor | None = None):
        """Encode patch vectors; ``keep_idx`` restricts to visible positions.

        patches: [B, P, patch_dim] (full grid) and keep_idx [B, V] of patch
        indices, or already-gathered [B, V, patch_dim] with keep_idx giving
        their positions.
        """
        x = self.patch_proj(patches)
        if keep_idx is None:
            x = x + self.pos_embed
        else:
            pos = self.pos_embed.expand(x.shape[0], -1, -1)
            pos = torch.gather(
                pos, 1, keep_idx.unsqueeze(-1).expand(-1, -1, x.shape[-1])
            )
            x = x + pos
        for block in self.blocks:
            x = block(x)
        return self.norm(x)


class PatchDecoder(nn.Module):
    """Reconstructs the full patch grid from visible-token features."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Linear(cfg.enc_dim, cfg.dec_dim)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, cfg.dec_dim))
        nn.init.normal_(self.mask_token, std=0.02)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.n_patches, cfg.dec_dim))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.dec_dim, max(cfg.dec_dim // 32, 1), cfg.mlp_ratio)
            for _ in range(cfg.dec_depth)
        )
        self.norm = nn.LayerNorm(cfg.dec_dim)
        self.head = nn.Linear(cfg.dec_dim, cfg.patch_dim)

    def forward(self, visible_feats: torch.Tensor, mask: torch.Tensor):
        """visible_feats: [B, V, enc_dim]; mask: [B, P] bool, True = masked."""
        b, p = mask.shape
        if visible_feats.shape[1] != p - int(mask[0].sum()):
            raise DimensionError(
                (b, p - int(mask[0].sum())),
                tuple(visible_feats.shape[:2]),
                "decoder visible tokens",
            )
        x = self.embed(visible_feats)
        full = self.mask_token.expand(b, p, -1).clone()
        keep_idx = (~mask).nonzero(as_tuple=True)
        full[keep_idx[0], keep_idx[1]] = x.reshape(-1, x.shape[-1])
        full = full + self.pos_embed
        for block in self.blocks:
            full = block(full)
        return self.head(self.norm(full))


class TextEncoder(nn.Module):
    """Token + positional embeddings, transformer stack, end-token pooling."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embed = nn.Embedding(cfg.vocab_size, cfg.text_dim, padding_idx=PAD_ID)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.max_text_len, cfg.text_dim))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.text_dim, cfg.text_heads, cfg.mlp_ratio)
            for _ in range(cfg.text_depth)
        )
        self.norm = nn.LayerNorm(cfg.text_dim)

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        """token_ids: [B, L] -> pooled feature [B, text_dim] at the end token."""
        if token_ids.dim() != 2 or token_ids.shape[1] > self.cfg.max_text_len:
            raise DimensionError(
                ("B", self.cfg.max_text_len), tuple(token_ids.shape), "token ids"
            )
        pad_mask = token_ids == PAD_ID
        x = self.token_embed(token_ids) + self.pos_embed[:, : token_ids.shape[1]]
        for block in self.blocks:
            x = block(x, key_padding_mask=pad_mask)
        x = self.norm(x)
        end_pos = (token_ids == END_ID).float().argmax(dim=1)
        return x[torch.arange(x.shape[0]), end_pos]


def l2_normalize(x: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    return x / x.norm(dim=-1, keepdim=True).clamp_min(eps)


def keep_indices(mask: torch.Tensor) -> torch.Tensor:
    """Ascending visible-patch indices per row of a [B, P] mask (True = masked).

    Every row must mask the same number of patches, which mask_patches
    guarantees.
    """
    b = mask.shape[0]
    return (~mask).nonzero(as_tuple=True)[1].reshape(b, -1)


class ImageTextModel(nn.Module):
    """Joint embedding model: shared image encoder, text encoder, decoder.

    The temperature is stored as a log-parameter so it stays positive; the
    effective value is clamped to the configured range after every
    optimizer step (see the training loop).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.image_encoder = ImageEncoder(cfg)
        self.decoder = PatchDecoder(cfg)
        self.text_encoder = TextEncoder(cfg)
        self.image_proj = nn.Linear(cfg.enc_dim, cfg.proj_dim, bias=False)
        self.text_proj = nn.Linear(cfg.text_dim, cfg.proj_dim, bias=False)
        self.log_tau = nn.Parameter(
            torch.tensor(math.log(cfg.temperature_init)),
            requires_grad=cfg.learnable_temperature,
        )

    @property
    def temperature(self) -> torch.Tensor:
        lo, hi = self.cfg.temperature_clamp
        return self.log_tau.exp().clamp(lo, hi)

    def clamp_temperature_(self) -> None:
        lo, hi = self.cfg.temperature_clamp
        with torch.no_grad():
            self.log_tau.clamp_(math.log(lo), math.log(hi))

    # -- image side ---------------------------------------------------------

    def _check_pixels(self, pixels: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        expected = (cfg.image_size, cfg.image_size, cfg.in_channels)
        if pixels.dim() == 3:
            pixels = pixels.unsqueeze(0)
        if pixels.dim() != 4 or tuple(pixels.shape[1:]) != expected:
            raise DimensionError(("B",) + expected, tuple(pixels.shape), "pixels")
        return pixels

    def encode_image(self, pixels: torch.Tensor):
        """Full-image encoding -> (pooled feature [B, enc_dim], unit embedding)."""
        pixels = self._check_pixels(pixels)
        patches = patchify(pixels, self.cfg.patch_size)
        tokens = self.image_encoder(patches)
        feats = tokens.mean(dim=1)
        return feats, l2_normalize(self.image_proj(feats))

    def mask_patches(self, pixels: torch.Tensor, mask_ratio: float,
                     generator: torch.Generator | None = None):
        """Sample a uniform without-replacement patch mask per image.

        Returns (visible_patches [B, V, patch_dim], mask [B, P] bool with
        True = masked). Exactly round(mask_ratio * n_patches) patches are
        masked, capped at n_patches - 1 so at least one patch stays visible.
        """
        if not 0.0 <= mask_ratio < 1.0:
            raise ConfigurationError("mask_ratio must lie in [0, 1)")
        pixels = self._check_pixels(pixels)
        patches = patchify(pixels, self.cfg.patch_size)
        b, p, _ = patches.shape
        n_masked = min(int(mask_ratio * p + 0.5), p - 1)
        scores = torch.rand(b, p, generator=generator)
        order = scores.argsort(dim=1)
        mask = torch.zeros(b, p, dtype=torch.bool)
        mask.scatter_(1, order[:, :n_masked], True)
        visible = torch.gather(
            patches, 1, keep_indices(mask).unsqueeze(-1).expand(-1, -1, patches.shape[-1])
        )
        return visible, mask

    def encode_visible(self, visible_patches: torch.Tensor, mask: torch.Tensor):
        """Encode visible patches only (positional identity preserved)."""
        return self.image_encoder(visible_patches, keep_idx=keep_indices(mask))

    def reconstruct(self, visible_patches: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Predict pixel values for the full patch grid: [B, P, patch_dim]."""
        feats = self.encode_visible(visible_patches, mask)
        return self.decoder(feats, mask)

    # -- text side ----------------------------------------------------------

    def encode_text(self, token_ids: torch.Tensor):
        """Token ids -> (pooled feature [B, text_dim], unit embedding)."""
        if token_ids.dim() == 1:
            token_ids = token_ids.unsqueeze(0)
        feats = self.text_encoder(token_ids)
        return feats, l2_normalize(self.text_proj(feats))


def build_model(cfg: ModelConfig, seed: int = 0) -> ImageTextModel:
    """Construct a model with seeded, reproducible initialization."""
    torch.manual_seed(seed)
    return ImageTextModel(cfg)


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    config: ModelConfig
    parameters: dict[str, np.ndarray]
    optimizer_state: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    epoch: int = 0
    rng_state: bytes = b""
    val_loss: float = float("nan")
    extra: dict = field(default_factory=dict)

    def build(self) -> ImageTextModel:
        model = ImageTextModel(self.config)
        state = {
            k: torch.from_numpy(v.copy()) for k, v in self.parameters.items()
        }
        model.load_state_dict(state)
        return model


def checkpoint_from_model(
    model: ImageTextModel,
    optimizer_state: dict[str, np.ndarray] | None = None,
    step: int = 0,
    epoch: int = 0,
    rng_state: bytes = b"",
    val_loss: float = float("nan"),
    extra: dict | None = None,
) -> Checkpoint:
    params = {
        k: v.detach().cpu().numpy().astype(np.float32, copy=True)
        for k, v in model.state_dict().items()
    }
    return Checkpoint(
        config=model.cfg,
        parameters=params,
        optimizer_state=optimizer_state or {},
        step=step,
        epoch=epoch,
        rng_state=rng_state,
        val_loss=val_loss,
        extra=extra or {},
    )


def save_checkpoint(ckpt: Checkpoint, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: list[tuple[str, np.ndarray]] = []
    for name, arr in ckpt.parameters.items():
        arrays.append((f"param/{name}", arr))
    for name, arr in ckpt.optimizer_state.items():
        arrays.append((f"opt/{name}", arr))

    manifest = []
    payload = io.BytesIO()
    offset = 0
    for name, arr in arrays:
        data = np.ascontiguousarray(arr, dtype=np.float32)
        raw = data.astype("<f4", copy=False).tobytes()
        manifest.append({"name": name, "shape": list(data.shape), "offset": offset})
        payload.write(raw)
        offset += len(raw)

    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(ckpt.config),
        "step": ckpt.step,
        "epoch": ckpt.epoch,
        "val_loss": ckpt.val_loss,
        "rng_state": base64.b64encode(ckpt.rng_state).decode("ascii"),
        "extra": ckpt.extra,
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.array(CHECKPOINT_FORMAT_VERSION, dtype="<u4").tobytes())
        fh.write(np.array(len(header_bytes), dtype="<u8").tobytes())
        fh.write(header_bytes)
        fh.write(payload.getvalue())
    tmp.replace(path)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file")
    pos = len(CHECKPOINT_MAGIC)
    version = int(np.frombuffer(raw, dtype="<u4", count=1, offset=pos)[0])
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValidationError(
            f"{path}: unsupported checkpoint format_version {version}"
        )
    pos += 4
    header_len = int(np.frombuffer(raw, dtype="<u8", count=1, offset=pos)[0])
    pos += 8
    header = json.loads(raw[pos : pos + header_len].decode("utf-8"))
    pos += header_len

    cfg_dict = dict(header["config"])
    cfg_dict["temperature_clamp"] = tuple(cfg_dict["temperature_clamp"])
    config = ModelConfig(**cfg_dict)
    parameters: dict[str, np.ndarray] = {}
    optimizer_state: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            raw, dtype="<f4", count=count, offset=pos + entry["offset"]
        ).reshape(shape)
        if entry["name"].startswith("param/"):
            parameters[entry["name"][6:]] = arr.copy()
        else:
            optimizer_state[entry["name"][4:]] = arr.copy()
    return Checkpoint(
        config=config,
        parameters=parameters,
        optimizer_state=optimizer_state,
        step=int(header["step"]),
        epoch=int(header["epoch"]),
        rng_state=base64.b64decode(header["rng_state"]),
        val_loss=float(header["val_loss"]),
        extra=header.get("extra", {}),
    )
