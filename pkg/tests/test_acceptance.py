"""Acceptance suite: one test per criterion, each printing a PASS line.

The synthetic end-to-end criteria share a session-scoped corpus (seed 7,
1600/200/400 patients, 4 classes, 2 modalities, 25% text coverage, 64x64
images) and one 20-epoch pretraining run of the default small model. The
generator is first calibrated with an independent supervised classifier on
raw pixels before any representation-quality threshold is enforced.

Run with ``pytest tests/test_acceptance.py -v -s``. The full module trains
several models and takes roughly 20-25 minutes on one CPU core.
"""

import json
import math

import numpy as np
import pytest
import torch

from mclab.evaluation import (
    EvalOptions,
    evaluate_protocol,
    load_store,
    save_store,
    image_store,
)
from mclab.losses import (
    LossWeights,
    combined_loss,
    image_image_contrastive,
    image_text_contrastive,
    masked_reconstruction_loss,
    weighted_total,
)
from mclab.metrics import auroc, binary_aupr, binary_auroc, confidence_interval
from mclab.model import load_checkpoint, save_checkpoint
from mclab.schedules import lr_at
from mclab.synthesis import (
    GeneratorConfig,
    generate_synthetic_corpus,
    labeled_dataset_from_corpus,
)
from mclab.training import FinetuneConfig, PretrainConfig, finetune, pretrain
from mclab.corpus import load_corpus, persist_corpus

from conftest import tiny_model_config
from oracles import (
    ap_rank_walk,
    auroc_pair_count,
    finite_difference_grad,
    recall_full_sort,
    relative_error,
)

GRAD_TOL = 1e-4
FD_STEP = 1e-3


def check(criterion: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {criterion}] {status}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def unit_rows(rng, n, d):
    x = torch.from_numpy(rng.standard_normal((n, d)))
    x = x / x.norm(dim=1, keepdim=True)
    # keep off-diagonal similarities away from the clamp boundary
    return x


# ---------------------------------------------------------------------------
# Criterion 1: gradient suite
# ---------------------------------------------------------------------------


class TestCriterion1GradientSuite:
    def _instance(self, rng):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(4, 17))
        a = unit_rows(rng, n, d).requires_grad_(True)
        b = unit_rows(rng, n, d).requires_grad_(True)
        # tau below ~0.5 makes the h=1e-3 central difference itself inaccurate
        # (truncation error grows like h^2 / tau^2), drowning the comparison
        tau = torch.tensor(float(rng.uniform(0.5, 1.5)), dtype=torch.float64,
                           requires_grad=True)
        return a, b, tau

    def _check_against_fd(self, loss_fn, tensors):
        loss = loss_fn(*[t for t in tensors])
        grads = torch.autograd.grad(loss, tensors, allow_unused=False)
        for i, tensor in enumerate(tensors):
            def partial(value, idx=i):
                args = [
                    value if j == idx else t.detach() for j, t in enumerate(tensors)
                ]
                return loss_fn(*args)

            fd = finite_difference_grad(partial, tensor, h=FD_STEP)
            err = relative_error(grads[i].detach(), fd)
            assert err <= GRAD_TOL, f"input {i}: relative error {err:.2e}"

    def test_image_text_contrastive_gradients(self):
        rng = np.random.default_rng(101)
        for _ in range(20):
            a, b, tau = self._instance(rng)
            self._check_against_fd(
                lambda x, y, t: image_text_contrastive(x, y, t), (a, b, tau)
            )
        check("1", True, "image-text contrastive gradients match FD on 20 instances")

    def test_image_image_contrastive_gradients(self):
        rng = np.random.default_rng(102)
        for _ in range(20):
            a, b, tau = self._instance(rng)
            self._check_against_fd(
                lambda x, y, t: image_image_contrastive(x, y, t), (a, b, tau)
            )
        check("1", True, "image-image contrastive gradients match FD on 20 instances")

    def test_reconstruction_gradients(self):
        rng = np.random.default_rng(103)
        for _ in range(20):
            b = int(rng.integers(1, 5))
            p = int(rng.integers(2, 7))
            d = int(rng.integers(2, 9))
            recon = torch.from_numpy(rng.standard_normal((b, p, d))).requires_grad_(True)
            orig = torch.from_numpy(rng.standard_normal((b, p, d)))
            mask = torch.from_numpy(rng.random((b, p)) < 0.6)
            if not mask.any():
                mask[0, 0] = True

            def loss_fn(x):
                return masked_reconstruction_loss(x, orig, mask)

            loss = loss_fn(recon)
            (grad,) = torch.autograd.grad(loss, recon)
            fd = finite_difference_grad(loss_fn, recon, h=FD_STEP)
            err = relative_error(grad, fd)
            assert err <= GRAD_TOL, f"relative error {err:.2e}"
        check("1", True, "masked reconstruction gradients match FD on 20 instances")

    def test_combined_loss_gradients(self):
        rng = np.random.default_rng(104)
        weights = LossWeights()
        for _ in range(20):
            img, txt, tau = self._instance(rng)
            a, b, _ = self._instance(rng)
            bsz, p, d = 2, 4, 6
            recon = torch.from_numpy(rng.standard_normal((bsz, p, d))).requires_grad_(True)
            orig = torch.from_numpy(rng.standard_normal((bsz, p, d)))
            mask = torch.from_numpy(rng.random((bsz, p)) < 0.6)
            if not mask.any():
                mask[0, 0] = True
            tensors = (img, txt, a, b, recon, tau)

            def loss_fn(i, t, x, y, r, temp):
                total, _ = combined_loss(
                    weights, temp, img_text=(i, t), img_img=(x, y),
                    recon=(r, orig, mask),
                )
                return total

            loss = loss_fn(*tensors)
            grads = torch.autograd.grad(loss, tensors)
            for idx, tensor in enumerate(tensors):
                def partial(value, k=idx):
                    args = [
                        value if j == k else t.detach()
                        for j, t in enumerate(tensors)
                    ]
                    return loss_fn(*args)

                fd = finite_difference_grad(partial, tensor, h=FD_STEP)
                err = relative_error(grads[idx].detach(), fd)
                assert err <= GRAD_TOL, f"combined input {idx}: error {err:.2e}"
        check("1", True, "combined loss gradients match FD on 20 instances")


# ---------------------------------------------------------------------------
# Criterion 2: closed-form loss values
# ---------------------------------------------------------------------------


class TestCriterion2ClosedForms:
    def test_uniform_embeddings_equal_log_n(self):
        for n in (2, 4, 8):
            row = unit_rows(np.random.default_rng(5), 1, 8)
            embs = row.repeat(n, 1)
            value = float(image_text_contrastive(embs, embs, 1.0))
            assert abs(value - math.log(n)) <= 1e-9, (n, value)
        check("2", True, "uniform-embedding contrastive loss equals ln N for N in {2,4,8}")

    def test_orthonormal_two_by_two(self):
        eye = torch.eye(2, dtype=torch.float64)
        expected = math.log(1.0 + math.exp(-1.0))
        v1 = float(image_text_contrastive(eye, eye, 1.0))
        v2 = float(image_image_contrastive(eye, eye, 1.0))
        assert abs(v1 - expected) <= 1e-9 and abs(v2 - expected) <= 1e-9
        check("2", True, f"2x2 orthonormal case equals ln(1+e^-1) = {expected:.6f}")

    def test_combined_equals_weighted_sum(self):
        weights = LossWeights()  # 0.75 / 0.75 / 1.0
        assert abs(weighted_total(weights, 1.0, 2.0, 0.4) - 2.65) <= 1e-12
        rng = np.random.default_rng(6)
        img, txt = unit_rows(rng, 4, 8), unit_rows(rng, 4, 8)
        a, b = unit_rows(rng, 4, 8), unit_rows(rng, 4, 8)
        recon = torch.from_numpy(rng.standard_normal((2, 4, 6)))
        orig = torch.from_numpy(rng.standard_normal((2, 4, 6)))
        mask = torch.from_numpy(rng.random((2, 4)) < 0.5)
        mask[0, 0] = True
        total, bd = combined_loss(
            weights, 0.5, img_text=(img, txt), img_img=(a, b),
            recon=(recon, orig, mask),
        )
        expected = weighted_total(weights, bd.l_img_text, bd.l_img_img, bd.l_recon)
        assert abs(bd.total - expected) <= 1e-12
        check("2", True, "combined loss equals the weighted sum with weights (0.75, 0.75, 1.0)")


# ---------------------------------------------------------------------------
# Criterion 3: metric-oracle equivalence
# ---------------------------------------------------------------------------


class TestCriterion3MetricOracles:
    def test_auroc_equals_pair_count_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            n = int(rng.integers(2, 51))
            scores = np.round(rng.random(n), 2)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert binary_auroc(scores, labels) == auroc_pair_count(scores, labels)
        check("3", True, "AUROC equals the exhaustive pair-count oracle on 200 instances")

    def test_ap_equals_rank_walk_oracle(self):
        rng = np.random.default_rng(32)
        for _ in range(200):
            n = int(rng.integers(2, 51))
            scores = np.round(rng.random(n), 2)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert binary_aupr(scores, labels) == ap_rank_walk(scores, labels)
        check("3", True, "AP equals the rank-walk oracle on 200 instances")

    def test_recall_equals_full_sort_oracle(self):
        from mclab.evaluation import EmbeddingStore, recall_at_k

        rng = np.random.default_rng(33)
        for trial in range(100):
            nq = int(rng.integers(2, 7))
            nt = int(rng.integers(5, 20))
            d = 6

            def store(n, prefix, seed):
                r = np.random.default_rng(seed)
                m = r.standard_normal((n, d))
                m /= np.linalg.norm(m, axis=1, keepdims=True)
                return EmbeddingStore(
                    ids=[f"{prefix}{i:03d}" for i in range(n)],
                    matrix=m.astype(np.float32), side="image",
                )

            q, t = store(nq, "q", trial), store(nt, "t", 999 + trial)
            truth = {}
            for qid in q.ids:
                k = int(rng.integers(1, max(2, nt // 3)))
                picks = rng.choice(nt, size=k, replace=False)
                truth[qid] = {t.ids[i] for i in picks}
            ks = tuple(sorted({1, int(rng.integers(2, 5)), min(10, nt)}))
            mine = recall_at_k(q, t, truth, k_list=ks)
            oracle = recall_full_sort(q.ids, q.matrix, t.ids, t.matrix, truth, ks)
            for k in ks:
                assert mine.recall[k] == oracle[k]
            values = [mine.recall[k] for k in sorted(mine.recall)]
            assert values == sorted(values)
            assert mine.mean_recall == sum(values) / len(values)
        check("3", True, "Recall@K equals the full-sort oracle on 100 instances, "
                         "monotone with exact mean identity")


# ---------------------------------------------------------------------------
# Criterion 4: schedule conformance and freeze behavior
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def schedule_corpus():
    cfg = GeneratorConfig(
        n_patients=80, n_latent_classes=4, modality_set=("CFP", "OCT"),
        text_fraction=0.25, image_size=32, split_counts=(56, 12, 12),
    )
    return generate_synthetic_corpus(cfg, seed=21)


class TestCriterion4Schedules:
    def test_pretrain_lr_replay_matches_closed_form(self, schedule_corpus, tmp_path):
        cfg = PretrainConfig(total_epochs=6, warmup_epochs=2, batch_size=16, seed=2)
        pretrain(schedule_corpus, cfg, tmp_path, model_cfg=tiny_model_config())
        records = [
            json.loads(line)
            for line in (tmp_path / "logs" / "train_log.jsonl").read_text().splitlines()
        ]
        steps = [r for r in records if "step" in r]
        spe = math.ceil(len(schedule_corpus.patients("train")) / 16)
        total = 6 * spe
        warm = 2 * spe
        for rec in steps:
            e = rec["step"] + 1
            if e >= total:
                expected = 0.0
            elif e <= warm:
                expected = 1e-3 * e / warm
            else:
                t = (e - warm) / (total - warm)
                expected = 0.5e-3 * (1 + math.cos(math.pi * t))
            assert abs(rec["lr"] - expected) <= 1e-9, rec
        assert steps[-1]["lr"] == 0.0
        check("4", True, f"pretrain lr matches closed form at all {total} steps; "
                         "final step is exactly 0")

    def test_finetune_lr_replay_freeze_and_boundary_values(self, schedule_corpus,
                                                           small_pretrain_checkpoint):
        ds = labeled_dataset_from_corpus(schedule_corpus)
        cfg = FinetuneConfig(seed=0, batch_size=16)  # default 50-epoch protocol
        snapshots = {}

        def snap(epoch, classifier):
            if epoch <= 6:
                snapshots[epoch] = {
                    k: v.detach().clone()
                    for k, v in classifier.base.image_encoder.state_dict().items()
                }

        result = finetune(
            small_pretrain_checkpoint, ds.train, ds.val[:16], ds.class_names, cfg,
            epoch_callback=snap,
        )
        spe = math.ceil(len(ds.train) / 16)
        sched = result.schedule
        for step, logged in enumerate(result.lr_history):
            e = step + 1
            warm = 10 * spe
            total = 50 * spe
            if e >= total:
                expected = 1e-6
            elif e <= warm:
                expected = 5e-4 * e / warm
            else:
                t = (e - warm) / (total - warm)
                expected = 1e-6 + (5e-4 - 1e-6) * 0.5 * (1 + math.cos(math.pi * t))
            assert abs(logged - expected) <= 1e-9
        assert lr_at(warm - 1, sched) == 5e-4
        assert result.lr_history[warm - 1] == 5e-4
        assert lr_at(total - 1, sched) == 1e-6
        assert result.lr_history[-1] == 1e-6
        check("4", True, "fine-tune lr matches closed form everywhere; exactly 5e-4 "
                         "at warmup end and 1e-6 at the final epoch")

        initial = snapshots[0]
        for epoch in range(5):
            assert all(
                torch.equal(initial[k], snapshots[epoch][k]) for k in initial
            ), f"encoder moved during frozen epoch {epoch}"
        assert any(
            not torch.equal(initial[k], snapshots[5][k]) for k in initial
        ), "encoder still frozen at epoch 5"
        check("4", True, "encoder provably frozen for exactly the first 5 fine-tune epochs")


@pytest.fixture(scope="module")
def small_pretrain_checkpoint(schedule_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("sched_ckpt")
    cfg = PretrainConfig(total_epochs=2, warmup_epochs=1, batch_size=16, seed=4)
    path = pretrain(schedule_corpus, cfg, out, model_cfg=tiny_model_config())
    return load_checkpoint(path)


# ---------------------------------------------------------------------------
# Criterion 5: calibrated synthetic end-to-end run
# ---------------------------------------------------------------------------

ACCEPTANCE_SEED = 7
PRETRAIN_SEED = 0
FEWSHOT_SEED = 100


@pytest.fixture(scope="session")
def acceptance_corpus():
    cfg = GeneratorConfig(
        n_patients=2200,
        n_latent_classes=4,
        modality_set=("CFP", "OCT"),
        text_fraction=0.25,
        image_size=64,
        split_counts=(1600, 200, 400),
    )
    return generate_synthetic_corpus(cfg, ACCEPTANCE_SEED)


@pytest.fixture(scope="session")
def acceptance_run(acceptance_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_run")
    cfg = PretrainConfig(total_epochs=20, seed=PRETRAIN_SEED)
    ckpt_path = pretrain(acceptance_corpus, cfg, out)
    return out, ckpt_path


@pytest.fixture(scope="session")
def acceptance_zeroshot(acceptance_run, acceptance_corpus):
    _, ckpt_path = acceptance_run
    reports = evaluate_protocol(ckpt_path, acceptance_corpus, "zeroshot", EvalOptions())
    return {r.metric: r.value for r in reports}


def _downsampled_features(examples):
    """8x8 block means of raw pixels for the supervised reference classifier."""
    x = np.stack([ex.pixels for ex in examples]).astype(np.float64)
    n, h, w, c = x.shape
    x = x.reshape(n, 8, h // 8, 8, w // 8, c).mean(axis=(2, 4)).reshape(n, -1)
    return np.concatenate([x, np.ones((n, 1))], axis=1)


def _softmax_regression_probs(x_train, y_train, x_test, n_classes, lr=0.5, iters=300):
    weights = np.zeros((x_train.shape[1], n_classes))
    onehot = np.eye(n_classes)[y_train]
    for _ in range(iters):
        z = x_train @ weights
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        weights -= lr * x_train.T @ (p - onehot) / len(y_train)
    z = x_test @ weights
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


@pytest.fixture(scope="session")
def retrieval_metrics(acceptance_run, acceptance_corpus):
    _, ckpt_path = acceptance_run
    reports = evaluate_protocol(
        ckpt_path, acceptance_corpus, "retrieval",
        EvalOptions(gallery_patients=100, seed=0),
    )
    return {r.metric: (r.value, r.n) for r in reports}


@pytest.fixture(scope="session")
def fewshot_reports(acceptance_run, acceptance_corpus):
    _, ckpt_path = acceptance_run
    options = EvalOptions(
        shots=(1, 2, 4, 8, 16), n_seeds=5, seed=FEWSHOT_SEED,
        finetune=FinetuneConfig(), val_subset=100,
    )
    return evaluate_protocol(ckpt_path, acceptance_corpus, "fewshot", options)


class TestCriterion5EndToEnd:
    def test_generator_calibration_with_supervised_oracle(self, acceptance_corpus):
        ds = labeled_dataset_from_corpus(acceptance_corpus)
        x_train = _downsampled_features(ds.train)
        y_train = np.array([ex.label for ex in ds.train])
        x_test = _downsampled_features(ds.test)
        y_test = np.array([ex.label for ex in ds.test])
        probs = _softmax_regression_probs(x_train, y_train, x_test, 4)
        value = auroc(probs, y_test, "macro")
        check("5-calibration", value >= 0.95,
              f"supervised pixel-space oracle reaches AUROC {value:.4f} >= 0.95")

    def test_training_loss_descends(self, acceptance_run):
        out, _ = acceptance_run
        records = [
            json.loads(line)
            for line in (out / "logs" / "train_log.jsonl").read_text().splitlines()
        ]
        steps = [r for r in records if "step" in r]
        first, last = steps[0]["total"], steps[-1]["total"]
        check("5-descent", last < 0.7 * first,
              f"final train loss {last:.3f} is down {(1 - last / first) * 100:.0f}% "
              f"from step-0 loss {first:.3f} (>= 30% required)")

    def test_5a_zero_shot_macro_auroc(self, acceptance_zeroshot):
        value = acceptance_zeroshot["macro_auroc"]
        check("5a", value >= 0.90, f"zero-shot macro AUROC {value:.4f} >= 0.90")

    def test_5b_i2i_recall_at_1(self, retrieval_metrics):
        value, n = retrieval_metrics["i2i_class_recall@1"]
        assert n == 200, f"gallery holds {n} items, expected 200"
        check("5b", value >= 0.50,
              f"i2i Recall@1 (same class, 200-item gallery) {value:.3f} >= 0.50 "
              f"vs chance 0.25")

    def test_5c_t2i_mean_recall(self, retrieval_metrics):
        value, _ = retrieval_metrics["t2i_mean_recall"]
        check("5c", value >= 0.60, f"t2i mean recall {value:.3f} >= 0.60")

    def test_5d_few_shot_monotonicity(self, fewshot_reports):
        runs = [r for r in fewshot_reports if r.metric == "macro_auroc"]
        assert len(runs) == 25, f"{len(runs)} per-run records, expected 25 (5 shots x 5 seeds)"
        means = {
            r.n_per_class: r.value
            for r in fewshot_reports
            if r.metric == "macro_auroc_mean"
        }
        check("5d", means[16] >= means[1],
              f"few-shot mean AUROC at n=16 ({means[16]:.4f}) >= n=1 ({means[1]:.4f}); "
              f"25 run records emitted")

    def test_5e_full_finetune_beats_zero_shot(self, acceptance_run, acceptance_corpus,
                                              acceptance_zeroshot):
        _, ckpt_path = acceptance_run
        options = EvalOptions(
            finetune=FinetuneConfig(seed=0), max_train_examples=400, val_subset=100,
        )
        reports = evaluate_protocol(ckpt_path, acceptance_corpus, "finetune", options)
        ft = {r.metric: r.value for r in reports}["macro_auroc"]
        zs = acceptance_zeroshot["macro_auroc"]
        check("5e", ft >= zs,
              f"full fine-tune macro AUROC {ft:.4f} >= zero-shot {zs:.4f} on the same test set")

    def test_trained_reconstruction_beats_mean_patch_baseline(self, acceptance_run,
                                                              acceptance_corpus):
        from mclab.model import patchify

        _, ckpt_path = acceptance_run
        model = load_checkpoint(ckpt_path).build()
        train_images = acceptance_corpus.images("train")[:256]
        train_patches = patchify(
            torch.from_numpy(np.stack([im.pixels for im in train_images])), 8
        )
        mean_patch = train_patches.reshape(-1, train_patches.shape[-1]).mean(dim=0)

        test_images = acceptance_corpus.images("test")[:128]
        pixels = torch.from_numpy(np.stack([im.pixels for im in test_images]))
        gen = torch.Generator().manual_seed(0)
        visible, mask = model.mask_patches(pixels, model.cfg.mask_ratio, gen)
        with torch.no_grad():
            recon = model.reconstruct(visible, mask)
        target = patchify(pixels, 8)
        model_loss = float(masked_reconstruction_loss(recon, target, mask))
        baseline = mean_patch.expand_as(target)
        baseline_loss = float(masked_reconstruction_loss(baseline, target, mask))
        check("5-recon", model_loss < baseline_loss,
              f"masked-patch loss {model_loss:.4f} beats the mean-patch baseline "
              f"{baseline_loss:.4f}")

    def test_trained_class_prompts_are_separated(self, acceptance_run):
        from mclab.evaluation import prompt_embeddings, vocabulary_from_checkpoint
        from mclab.synthesis import class_names

        _, ckpt_path = acceptance_run
        ckpt = load_checkpoint(ckpt_path)
        model = ckpt.build()
        vocab = vocabulary_from_checkpoint(ckpt)
        prompts = prompt_embeddings(model, vocab, "CFP", class_names(4))
        sims = prompts @ prompts.T
        off_diag = sims[~np.eye(4, dtype=bool)]
        check("5-prompts", float(off_diag.max()) < 1.0 - 1e-6,
              f"distinct class prompt embeddings stay separated "
              f"(max off-diagonal cosine {off_diag.max():.4f})")


# ---------------------------------------------------------------------------
# Criterion 6: ablation direction checks
# ---------------------------------------------------------------------------

ABLATION_SEEDS = (11, 12, 13)
ABLATION_EPOCHS = 6


@pytest.fixture(scope="session")
def ablation_results(acceptance_corpus, tmp_path_factory):
    """Per seed: metrics for the full objective and the two ablations.

    Short runs (6 epochs) keep the comparison away from saturation; all nine
    runs share the acceptance corpus.
    """
    results = {}
    for seed in ABLATION_SEEDS:
        for name, weights in (
            ("full", LossWeights()),
            ("no_img_img", LossWeights(lambda_img_img=0.0)),
            ("no_img_text", LossWeights(lambda_img_text=0.0)),
        ):
            out = tmp_path_factory.mktemp(f"ablate_{name}_{seed}")
            cfg = PretrainConfig(total_epochs=ABLATION_EPOCHS, seed=seed, weights=weights)
            ckpt_path = pretrain(acceptance_corpus, cfg, out)
            retrieval = {
                r.metric: r.value
                for r in evaluate_protocol(
                    ckpt_path, acceptance_corpus, "retrieval",
                    EvalOptions(gallery_patients=100, seed=0),
                )
            }
            zeroshot = {
                r.metric: r.value
                for r in evaluate_protocol(
                    ckpt_path, acceptance_corpus, "zeroshot", EvalOptions()
                )
            }
            results[(name, seed)] = {**retrieval, **zeroshot}
    return results


class TestCriterion6Ablations:
    def test_image_image_term_carries_cross_modal_alignment(self, ablation_results):
        degraded = 0
        details = []
        for seed in ABLATION_SEEDS:
            full = ablation_results[("full", seed)]["i2i_xmod_recall@1"]
            ablated = ablation_results[("no_img_img", seed)]["i2i_xmod_recall@1"]
            details.append(f"seed {seed}: full {full:.3f} vs ablated {ablated:.3f}")
            if ablated < full:
                degraded += 1
        check("6a", degraded >= 2,
              f"dropping the image-image term degrades cross-modality i2i Recall@1 "
              f"in {degraded}/3 seeds ({'; '.join(details)})")

    def test_image_text_term_carries_zero_shot(self, ablation_results):
        values = [
            ablation_results[("no_img_text", seed)]["macro_auroc"]
            for seed in ABLATION_SEEDS
        ]
        mean, lo, hi = confidence_interval(values)
        check("6b", lo <= 0.5 <= hi,
              f"without the image-text term zero-shot AUROC is {mean:.3f} with CI "
              f"({lo:.3f}, {hi:.3f}) covering 0.5")


# ---------------------------------------------------------------------------
# Criterion 7: determinism and persistence
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def repro_corpus():
    cfg = GeneratorConfig(
        n_patients=120, n_latent_classes=4, modality_set=("CFP", "OCT"),
        text_fraction=0.25, image_size=32, split_counts=(96, 12, 12),
    )
    return generate_synthetic_corpus(cfg, seed=9)


class TestCriterion7DeterminismPersistence:
    def test_identical_runs_reproduce_step_0_and_10_losses(self, repro_corpus, tmp_path):
        totals = []
        for sub in ("a", "b"):
            cfg = PretrainConfig(total_epochs=2, batch_size=16, seed=5, warmup_epochs=1)
            out = tmp_path / sub
            pretrain(repro_corpus, cfg, out, model_cfg=tiny_model_config())
            records = [
                json.loads(line)
                for line in (out / "logs" / "train_log.jsonl").read_text().splitlines()
            ]
            steps = {r["step"]: r["total"] for r in records if "step" in r}
            totals.append((steps[0], steps[10]))
        check("7", totals[0] == totals[1],
              f"two identical runs reproduce step-0 and step-10 totals exactly: "
              f"{totals[0]}")

    def test_checkpoint_round_trips_bit_exactly(self, repro_corpus, tmp_path):
        cfg = PretrainConfig(total_epochs=1, batch_size=16, seed=6, warmup_epochs=0.5)
        path = pretrain(repro_corpus, cfg, tmp_path, model_cfg=tiny_model_config())
        ckpt = load_checkpoint(path)
        resaved = save_checkpoint(ckpt, tmp_path / "resaved.ckpt")
        ok = path.read_bytes() == resaved.read_bytes()
        reloaded = load_checkpoint(resaved)
        ok = ok and all(
            ckpt.parameters[k].tobytes() == reloaded.parameters[k].tobytes()
            for k in ckpt.parameters
        )
        check("7", ok, "checkpoint load/save round-trips bit-exactly")

    def test_embedding_store_round_trips_bit_exactly(self, repro_corpus,
                                                     small_pretrain_checkpoint, tmp_path):
        model = small_pretrain_checkpoint.build()
        images = repro_corpus.images("test")[:20]
        store = image_store(model, images, labels=repro_corpus.latent_classes)
        path = save_store(store, tmp_path / "s.emb")
        loaded = load_store(path)
        resaved = save_store(loaded, tmp_path / "s2.emb")
        ok = (
            path.read_bytes() == resaved.read_bytes()
            and loaded.matrix.tobytes() == store.matrix.tobytes()
            and loaded.ids == store.ids
        )
        check("7", ok, "embedding store round-trips bit-exactly")

    def test_corpus_manifest_round_trips_to_equality(self, repro_corpus, tmp_path):
        persist_corpus(repro_corpus, tmp_path / "corpus")
        loaded = load_corpus(tmp_path / "corpus")
        check("7", loaded == repro_corpus,
              "persisted corpus loads back equal (manifest, keywords, pixels)")
