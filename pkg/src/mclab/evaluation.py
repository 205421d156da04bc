"""Zero-shot classification, cross-modal retrieval, and protocol runs.

Everything downstream operates on unit-norm embeddings in the shared space:
zero-shot predictions are cosine argmaxes against per-class text prompts;
retrieval ranks a gallery by cosine similarity with deterministic tie
breaking (ascending target id); protocols orchestrate embedding extraction,
metric computation, and structured report emission.

Embedding stores persist as a small binary container (magic "MCLAB-EMB",
little-endian version/count/dim, a side byte, float32 rows, then one UTF-8
metadata line per row) and round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .corpus import CorpusManifest, DEFAULT_MODALITY_LONG_NAMES, ImageRecord
from .errors import ConfigurationError, DataError, ValidationError
from .metrics import aupr, auroc, confidence_interval
from .model import Checkpoint, ImageTextModel, load_checkpoint
from .synthesis import LabeledExample, labeled_dataset_from_corpus
from .text import Vocabulary, build_prompt, keywords_as_text, tokenize
from .training import FinetuneConfig,fewshot_sample, finetune, predict_probabilities

STORE_MAGIC = b"MCLAB-EMB"
STORE_FORMAT_VERSION = 1
_SIDE_BYTES = {"image": b"I", "text": b"T"}
_SIDE_NAMES = {v: k for k, v in _SIDE_BYTES.items()}

DEFAULT_K_LIST = (1, 5, 10)
DEFAULT_SHOTS = (1, 2, 4, 8, 16)
UNIT_NORM_TOL = 1e-6


# ---------------------------------------------------------------------------
# Embedding store
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingStore:
    """Unit-norm embedding rows with ids and per-row metadata."""

    ids: list[str]
    matrix: np.ndarray  # n x d float32, unit-norm rows
    side: str  # "image" | "text"
    metadata: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        if self.side not in _SIDE_BYTES:
            raise ValidationError(f"unknown store side {self.side!r}")
        n = len(self.ids)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != n:
            raise ValidationError("embedding matrix does not match ids")
        if len(set(self.ids)) != n:
            raise ValidationError("embedding store ids must be unique")
        if self.metadata and len(self.metadata) != n:
            raise ValidationError("metadata length does not match ids")
        norms = np.linalg.norm(self.matrix.astype(np.float64), axis=1)
        if n and np.abs(norms - 1.0).max() > UNIT_NORM_TOL:
            raise ValidationError("embedding rows must be unit-norm within 1e-6")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def row_of(self, item_id: str) -> np.ndarray:
        return self.matrix[self.ids.index(item_id)]


def save_store(store: EmbeddingStore, path: Path) -> Path:
    store.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = store.metadata or [{} for _ in store.ids]
    lines = [
        json.dumps({"id": item_id, **entry}, sort_keys=True)
        for item_id, entry in zip(store.ids, meta)
    ]
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(np.array(STORE_FORMAT_VERSION, dtype="<u4").tobytes())
        fh.write(np.array(len(store.ids), dtype="<u8").tobytes())
        fh.write(np.array(store.dim, dtype="<u4").tobytes())
        fh.write(_SIDE_BYTES[store.side])
        fh.write(np.ascontiguousarray(store.matrix, dtype="<f4").tobytes())
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
    tmp.replace(path)
    return path


def load_store(path: Path) -> EmbeddingStore:
    raw = Path(path).read_bytes()
    if raw[: len(STORE_MAGIC)] != STORE_MAGIC:
        raise ValidationError(f"{path}: not an embedding store")
    pos = len(STORE_MAGIC)
    version = int(np.frombuffer(raw, dtype="<u4", count=1, offset=pos)[0])
    if version != STORE_FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported store format_version {version}")
    pos += 4
    count = int(np.frombuffer(raw, dtype="<u8", count=1, offset=pos)[0])
    pos += 8
    dim = int(np.frombuffer(raw, dtype="<u4", count=1, offset=pos)[0])
    pos += 4
    side_byte = raw[pos : pos + 1]
    if side_byte not in _SIDE_NAMES:
        raise ValidationError(f"{path}: unknown side byte {side_byte!r}")
    pos += 1
    matrix = (
        np.frombuffer(raw, dtype="<f4", count=count * dim, offset=pos)
        .reshape(count, dim)
        .copy()
    )
    pos += count * dim * 4
    ids, metadata = [], []
    text = raw[pos:].decode("utf-8")
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        ids.append(obj.pop("id"))
        metadata.append(obj)
    if len(ids) != count:
        raise ValidationError(f"{path}: metadata lines ({len(ids)}) != count ({count})")
    store = EmbeddingStore(
        ids=ids, matrix=matrix, side=_SIDE_NAMES[side_byte], metadata=metadata
    )
    store.validate()
    return store


# ---------------------------------------------------------------------------
# Embedding extraction
# ---------------------------------------------------------------------------


def embed_pixel_batches(
    model: ImageTextModel, pixel_arrays: list[np.ndarray], batch_size: int = 64
) -> np.ndarray:
    """Unit-norm image embeddings for a list of H x W x C arrays."""
    model.eval()
    rows = []
    with torch.no_grad():
        for lo in range(0, len(pixel_arrays), batch_size):
            chunk = np.stack(pixel_arrays[lo : lo + batch_size]).astype(np.float32)
            _, emb = model.encode_image(torch.from_numpy(chunk))
            rows.append(emb.numpy())
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, model.cfg.proj_dim))


def embed_texts(
    model: ImageTextModel, texts: list[str], vocab: Vocabulary, batch_size: int = 256
) -> np.ndarray:
    """Unit-norm text embeddings for raw strings."""
    model.eval()
    rows = []
    with torch.no_grad():
        for lo in range(0, len(texts), batch_size):
            ids = np.stack([tokenize(t, vocab) for t in texts[lo : lo + batch_size]])
            _, emb = model.encode_text(torch.from_numpy(ids))
            rows.append(emb.numpy())
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, model.cfg.proj_dim))


def image_store(
    model: ImageTextModel,
    images: list[ImageRecord],
    labels: dict[str, int] | None = None,
    batch_size: int = 64,
) -> EmbeddingStore:
    matrix = embed_pixel_batches(model, [img.pixels for img in images], batch_size)
    metadata = [
        {
            "modality": img.modality,
            "patient_id": img.patient_id,
            **(
                {"label": labels[img.patient_id]}
                if labels and img.patient_id in labels
                else {}
            ),
        }
        for img in images
    ]
    store = EmbeddingStore(
        ids=[img.image_id for img in images],
        matrix=matrix.astype(np.float32),
        side="image",
        metadata=metadata,
    )
    store.validate()
    return store


def vocabulary_from_checkpoint(ckpt: Checkpoint) -> Vocabulary:
    info = ckpt.extra.get("vocabulary")
    if not info:
        raise ValidationError("checkpoint carries no vocabulary")
    return Vocabulary(
        word_to_id={w: int(i) for w, i in info["words"].items()},
        max_len=int(info["max_len"]),
    )


# ---------------------------------------------------------------------------
# Zero-shot classification
# ---------------------------------------------------------------------------


def zero_shot_classify(
    image_emb: np.ndarray, class_prompts: list[tuple[str, np.ndarray]]
) -> tuple[np.ndarray, str]:
    """Cosine scores against each class prompt and the argmax class.

    Ties go to the class listed first. Class names must be unique.
    """
    names = [name for name, _ in class_prompts]
    if len(names) < 2:
        raise ConfigurationError("zero-shot needs >= 2 classes")
    if len(set(names)) != len(names):
        raise ConfigurationError("duplicate class names in prompt list")
    prompts = np.stack([emb for _, emb in class_prompts]).astype(np.float64)
    scores = prompts @ np.asarray(image_emb, dtype=np.float64)
    return scores, names[int(np.argmax(scores))]


def prompt_embeddings(
    model: ImageTextModel,
    vocab: Vocabulary,
    modality: str,
    class_names: tuple[str, ...],
    long_names: dict[str, str] | None = None,
) -> np.ndarray:
    """One unit-norm prompt embedding per class for a given modality."""
    table = DEFAULT_MODALITY_LONG_NAMES if long_names is None else long_names
    prompts = [build_prompt(modality, name, table) for name in class_names]
    return embed_texts(model, prompts, vocab)


def zero_shot_scores(
    model: ImageTextModel,
    vocab: Vocabulary,
    examples: list[LabeledExample],
    class_names: tuple[str, ...],
    batch_size: int = 64,
) -> np.ndarray:
    """[n, C] cosine scores, each image scored against its modality's prompts."""
    modalities = sorted({ex.modality for ex in examples})
    prompt_bank = {
        m: prompt_embeddings(model, vocab, m, class_names) for m in modalities
    }
    img_embs = embed_pixel_batches(model, [ex.pixels for ex in examples], batch_size)
    scores = np.zeros((len(examples), len(class_names)))
    for i, ex in enumerate(examples):
        scores[i] = prompt_bank[ex.modality] @ img_embs[i]
    return scores


# ---------------------------------------------------------------------------
# Cross-modal retrieval
# ---------------------------------------------------------------------------


@dataclass
class RetrievalResult:
    recall: dict[int, float]
    mean_recall: float

    def validate(self) -> None:
        ks = sorted(self.recall)
        values = [self.recall[k] for k in ks]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValidationError("recall values must lie in [0, 1]")
        if any(a > b for a, b in zip(values, values[1:])):
            raise ValidationError("recall must be monotone in K")
        if self.mean_recall != sum(values) / len(values):
            raise ValidationError("mean_recall must equal the mean over K")


def _best_ranks(
    query_store: EmbeddingStore,
    target_store: EmbeddingStore,
    ground_truth: dict[str, set[str]],
    exclude_self: bool = False,
) -> list[int]:
    """1-based rank of the best correct target for every query.

    Targets are ranked by cosine similarity descending with ties broken by
    ascending target id.
    """
    target_ids = np.asarray(target_store.ids)
    id_rank = np.argsort(np.argsort(target_ids, kind="mergesort"), kind="mergesort")
    target_index = {tid: i for i, tid in enumerate(target_store.ids)}
    target_matrix = target_store.matrix.astype(np.float64)

    best_ranks = []
    for qi, qid in enumerate(query_store.ids):
        if qid not in ground_truth or not ground_truth[qid]:
            raise DataError(f"query {qid!r} has an empty ground-truth set")
        correct = {
            target_index[t] for t in ground_truth[qid] if t in target_index
        }
        if exclude_self:
            correct.discard(target_index.get(qid, -1))
        if not correct:
            raise DataError(
                f"query {qid!r} has no correct target present in the store"
            )
        sims = target_matrix @ query_store.matrix[qi].astype(np.float64)
        if exclude_self and qid in target_index:
            sims[target_index[qid]] = -np.inf
        order = np.lexsort((id_rank, -sims))
        positions = np.empty(len(order), dtype=np.int64)
        positions[order] = np.arange(1, len(order) + 1)
        best_ranks.append(int(min(positions[i] for i in correct)))
    return best_ranks


def recall_at_k(
    query_store: EmbeddingStore,
    target_store: EmbeddingStore,
    ground_truth: dict[str, set[str]],
    k_list: tuple[int, ...] = DEFAULT_K_LIST,
    exclude_self: bool = False,
) -> RetrievalResult:
    """Recall@K: fraction of queries with a correct target in the top K.

    ``exclude_self`` removes the query's own id from its candidate set
    (image-to-image retrieval).
    """
    if max(k_list) > len(target_store.ids):
        raise ConfigurationError(
            f"K={max(k_list)} exceeds target store size {len(target_store.ids)}"
        )
    ranks = np.asarray(_best_ranks(query_store, target_store, ground_truth, exclude_self))
    recall = {k: float((ranks <= k).mean()) for k in k_list}
    values = [recall[k] for k in sorted(recall)]
    result = RetrievalResult(recall=recall, mean_recall=sum(values) / len(values))
    result.validate()
    return result


def _substore(store: EmbeddingStore, ids: list[str]) -> EmbeddingStore:
    index = {sid: i for i, sid in enumerate(store.ids)}
    rows = [index[sid] for sid in ids]
    return EmbeddingStore(
        ids=list(ids),
        matrix=store.matrix[rows],
        side=store.side,
        metadata=[store.metadata[i] for i in rows] if store.metadata else [],
    )


# ---------------------------------------------------------------------------
# Metric reports and protocol orchestration
# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    protocol: str
    dataset: str
    metric: str
    value: float
    ci_low: float | None = None
    ci_high: float | None = None
    n: int | None = None
    seed: int | None = None
    n_per_class: int | None = None
    p_value: float | None = None

    def as_dict(self) -> dict:
        out = {
            "protocol": self.protocol,
            "dataset": self.dataset,
            "metric": self.metric,
            "value": self.value,
        }
        for key in ("ci_low", "ci_high", "n", "seed", "n_per_class", "p_value"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


def write_reports(reports: list[MetricReport], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.as_dict(), sort_keys=True) + "\n")
    return path


def read_reports(path: Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


@dataclass
class EvalOptions:
    dataset_name: str = "synthetic"
    split: str = "test"
    k_list: tuple[int, ...] = DEFAULT_K_LIST
    shots: tuple[int, ...] = DEFAULT_SHOTS
    n_seeds: int = 5
    seed: int = 0
    gallery_patients: int = 100
    class_names: tuple[str, ...] | None = None  # overrides corpus class names
    finetune: FinetuneConfig | None = None
    max_train_examples: int | None = None
    val_subset: int | None = None
    batch_size: int = 64


def _model_and_vocab(checkpoint: Checkpoint | Path) -> tuple[ImageTextModel, Vocabulary, Checkpoint]:
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    return ckpt.build(), vocabulary_from_checkpoint(ckpt), ckpt


def _subset(examples: list[LabeledExample], limit: int | None, seed: int) -> list[LabeledExample]:
    if limit is None or limit >= len(examples):
        return examples
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B5]))
    idx = sorted(rng.choice(len(examples), size=limit, replace=False).tolist())
    return [examples[i] for i in idx]


def evaluate_zeroshot(
    checkpoint: Checkpoint | Path,
    manifest: CorpusManifest,
    options: EvalOptions,
) -> list[MetricReport]:
    model, vocab, _ = _model_and_vocab(checkpoint)
    ds = labeled_dataset_from_corpus(manifest)
    examples = ds.split(options.split)
    if not examples:
        raise DataError(f"no labeled examples in split {options.split!r}")
    class_names = options.class_names or ds.class_names
    if len(class_names) != len(ds.class_names):
        raise ConfigurationError(
            f"{len(class_names)} class names given for {len(ds.class_names)} classes"
        )
    scores = zero_shot_scores(model, vocab, examples, class_names,
                              options.batch_size)
    labels = np.asarray([ex.label for ex in examples])
    return [
        MetricReport(
            protocol="zeroshot", dataset=options.dataset_name,
            metric="macro_auroc", value=auroc(scores, labels, "macro"),
            n=len(examples),
        ),
        MetricReport(
            protocol="zeroshot", dataset=options.dataset_name,
            metric="macro_aupr", value=aupr(scores, labels, "macro"),
            n=len(examples),
        ),
    ]


def _retrieval_stores(
    model: ImageTextModel,
    vocab: Vocabulary,
    manifest: CorpusManifest,
    options: EvalOptions,
):
    """Gallery and query stores for the three retrieval directions.

    The image gallery is sampled by patient so same-patient partners stay
    together; texts come from gallery patients that carry keywords. Text
    ids are patient ids prefixed with "txt:" to keep the two sides distinct.
    """
    patients = manifest.patients(options.split)
    if not patients:
        raise DataError(f"no patients in split {options.split!r}")
    rng = np.random.default_rng(np.random.SeedSequence([options.seed, 0x9A11]))
    n_gallery = min(options.gallery_patients, len(patients))
    chosen = sorted(rng.choice(len(patients), size=n_gallery, replace=False).tolist())
    gallery_patients = [patients[i] for i in chosen]
    images = [img for p in gallery_patients for img in p.images]
    img_store = image_store(model, images, labels=manifest.latent_classes)

    text_patients = [p for p in gallery_patients if p.keywords]
    texts = [keywords_as_text(p.keywords) for p in text_patients]
    txt_store = None
    if texts:
        matrix = embed_texts(model, texts, vocab)
        txt_store = EmbeddingStore(
            ids=[f"txt:{p.patient_id}" for p in text_patients],
            matrix=matrix.astype(np.float32),
            side="text",
            metadata=[
                {"patient_id": p.patient_id,
                 "label": manifest.latent_classes.get(p.patient_id)}
                for p in text_patients
            ],
        )
    return img_store, txt_store, gallery_patients


def _class_of(manifest: CorpusManifest, patient_id: str) -> int:
    return manifest.latent_classes[patient_id]


def evaluate_retrieval(
    checkpoint: Checkpoint | Path,
    manifest: CorpusManifest,
    options: EvalOptions,
) -> list[MetricReport]:
    """t2i, i2i, and i2t retrieval over a patient-sampled gallery.

    Ground truth is shared latent class; image-to-image is additionally
    reported with the stricter same-patient criterion.
    """
    if not manifest.latent_classes:
        raise DataError("retrieval ground truth needs latent class labels")
    model, vocab, _ = _model_and_vocab(checkpoint)
    img_store, txt_store, gallery = _retrieval_stores(model, vocab, manifest, options)
    k_list = options.k_list
    reports: list[MetricReport] = []

    def emit(direction: str, result: RetrievalResult, n: int):
        for k in sorted(result.recall):
            reports.append(
                MetricReport(
                    protocol="retrieval", dataset=options.dataset_name,
                    metric=f"{direction}_recall@{k}", value=result.recall[k], n=n,
                )
            )
        reports.append(
            MetricReport(
                protocol="retrieval", dataset=options.dataset_name,
                metric=f"{direction}_mean_recall", value=result.mean_recall, n=n,
            )
        )

    image_class = {
        img.image_id: _class_of(manifest, p.patient_id)
        for p in gallery
        for img in p.images
    }
    images_of_class: dict[int, set[str]] = {}
    for iid, cls in image_class.items():
        images_of_class.setdefault(cls, set()).add(iid)

    # image -> image, same latent class
    truth_i2i = {
        iid: images_of_class[cls] - {iid} for iid, cls in image_class.items()
    }
    emit(
        "i2i_class",
        recall_at_k(img_store, img_store, truth_i2i, k_list, exclude_self=True),
        len(img_store.ids),
    )

    # image -> image across modalities: query of one modality retrieves among
    # the other modalities only; this isolates cross-modality alignment,
    # which a mixed gallery hides behind same-modality neighbors.
    image_modality = {img.image_id: img.modality for p in gallery for img in p.images}
    modalities = sorted(set(image_modality.values()))
    if len(modalities) >= 2:
        pooled_ranks: list[int] = []
        for query_mod in modalities:
            q_ids = [iid for iid in img_store.ids if image_modality[iid] == query_mod]
            t_ids = [iid for iid in img_store.ids if image_modality[iid] != query_mod]
            if not q_ids or not t_ids:
                continue
            q_store = _substore(img_store, q_ids)
            t_store = _substore(img_store, t_ids)
            t_id_set = set(t_ids)
            truth = {
                qid: (images_of_class[image_class[qid]] & t_id_set) - {qid}
                for qid in q_ids
            }
            pooled_ranks.extend(
                _best_ranks(q_store, t_store, truth)
            )
        ranks = np.asarray(pooled_ranks)
        k_xmod = tuple(k for k in k_list if k <= min(
            sum(1 for m in image_modality.values() if m != qm) for qm in modalities
        ))
        recall = {k: float((ranks <= k).mean()) for k in k_xmod}
        values = [recall[k] for k in sorted(recall)]
        xmod = RetrievalResult(recall=recall, mean_recall=sum(values) / len(values))
        xmod.validate()
        emit("i2i_xmod", xmod, len(ranks))

    # image -> image, same patient (strict variant)
    patient_images = {
        p.patient_id: {img.image_id for img in p.images} for p in gallery
    }
    truth_patient = {
        img.image_id: patient_images[p.patient_id] - {img.image_id}
        for p in gallery
        for img in p.images
        if len(p.images) > 1
    }
    if truth_patient:
        queries = _substore(
            img_store, [iid for iid in img_store.ids if iid in truth_patient]
        )
        emit(
            "i2i_patient",
            recall_at_k(queries, img_store, truth_patient, k_list, exclude_self=True),
            len(queries.ids),
        )

    if txt_store is not None and len(txt_store.ids) >= 2:
        text_class = {
            tid: meta["label"] for tid, meta in zip(txt_store.ids, txt_store.metadata)
        }
        texts_of_class: dict[int, set[str]] = {}
        for tid, cls in text_class.items():
            texts_of_class.setdefault(cls, set()).add(tid)

        truth_t2i = {tid: images_of_class[cls] for tid, cls in text_class.items()}
        emit(
            "t2i",
            recall_at_k(txt_store, img_store, truth_t2i, k_list),
            len(txt_store.ids),
        )
        truth_i2t = {
            iid: texts_of_class.get(cls, set())
            for iid, cls in image_class.items()
            if texts_of_class.get(cls)
        }
        queries = _substore(
            img_store, [iid for iid in img_store.ids if iid in truth_i2t]
        )
        k_text = tuple(k for k in k_list if k <= len(txt_store.ids))
        if k_text:
            emit(
                "i2t",
                recall_at_k(queries, txt_store, truth_i2t, k_text),
                len(queries.ids),
            )
    return reports


def evaluate_fewshot(
    checkpoint: Checkpoint | Path,
    manifest: CorpusManifest,
    options: EvalOptions,
) -> list[MetricReport]:
    """Few-shot protocol: n_seeds runs per shot count, fixed test split."""
    _, _, ckpt = _model_and_vocab(checkpoint)
    ds = labeled_dataset_from_corpus(manifest)
    test = ds.test
    test_labels = np.asarray([ex.label for ex in test])
    val = _subset(ds.val, options.val_subset, options.seed)
    base_cfg = options.finetune or FinetuneConfig()
    reports: list[MetricReport] = []
    for n in options.shots:
        per_seed = []
        for offset in range(options.n_seeds):
            seed = options.seed + offset
            subset = fewshot_sample(ds.train, n, seed, ds.class_names)
            result = finetune(
                ckpt, subset, val, ds.class_names, replace(base_cfg, seed=seed)
            )
            probs = predict_probabilities(result.classifier, test, base_cfg.mode)
            value = auroc(probs, test_labels, "macro")
            per_seed.append(value)
            reports.append(
                MetricReport(
                    protocol="fewshot", dataset=options.dataset_name,
                    metric="macro_auroc", value=value, n=len(test),
                    seed=seed, n_per_class=n,
                )
            )
        mean, lo, hi = confidence_interval(per_seed)
        reports.append(
            MetricReport(
                protocol="fewshot", dataset=options.dataset_name,
                metric="macro_auroc_mean", value=mean, ci_low=lo, ci_high=hi,
                n=options.n_seeds, n_per_class=n,
            )
        )
    return reports


def evaluate_finetune(
    checkpoint: Checkpoint | Path,
    manifest: CorpusManifest,
    options: EvalOptions,
) -> list[MetricReport]:
    """Full-data fine-tune protocol on the labeled corpus."""
    _, _, ckpt = _model_and_vocab(checkpoint)
    ds = labeled_dataset_from_corpus(manifest)
    train = _subset(ds.train, options.max_train_examples, options.seed)
    val = _subset(ds.val, options.val_subset, options.seed)
    cfg = options.finetune or FinetuneConfig()
    result = finetune(ckpt, train, val, ds.class_names, cfg)
    test = ds.test
    probs = predict_probabilities(result.classifier, test, cfg.mode)
    labels = np.asarray([ex.label for ex in test])
    return [
        MetricReport(
            protocol="finetune", dataset=options.dataset_name,
            metric="macro_auroc", value=auroc(probs, labels, "macro"), n=len(test),
        ),
        MetricReport(
            protocol="finetune", dataset=options.dataset_name,
            metric="macro_aupr", value=aupr(probs, labels, "macro"), n=len(test),
        ),
    ]


_PROTOCOLS = {
    "zeroshot": evaluate_zeroshot,
    "retrieval": evaluate_retrieval,
    "fewshot": evaluate_fewshot,
    "finetune": evaluate_finetune,
}


def evaluate_protocol(
    checkpoint: Checkpoint | Path,
    manifest: CorpusManifest,
    protocol: str,
    options: EvalOptions | None = None,
) -> list[MetricReport]:
    """Run one downstream protocol and return its metric reports."""
    if protocol not in _PROTOCOLS:
        raise ConfigurationError(
            f"unknown protocol {protocol!r}; expected one of {sorted(_PROTOCOLS)}"
        )
    return _PROTOCOLS[protocol](checkpoint, manifest, options or EvalOptions())
