"""Command-line surface: reproducible, configured runs of every stage.

One executable with subcommands (generate-data, pretrain, embed, zeroshot,
retrieve, fewshot, finetune, report). Configuration is a YAML file with
sections {corpus, model, pretrain, finetune, eval}; every field has a
default and unknown keys are rejected. The fully resolved configuration is
echoed into the output directory as ``config.resolved`` so a run can be
reproduced from its outputs alone.

Exit codes: 0 success, 2 usage error, 3 validation/configuration error,
4 runtime or numeric error. A command that fails after creating output
leaves a FAILED marker file in its output directory.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np
import yaml

from .corpus import load_corpus, persist_corpus
from .errors import (
    ConfigurationError,
    DataError,
    McLabError,
    ValidationError,
)
from .evaluation import (
    EvalOptions,
    EmbeddingStore,
    embed_pixel_batches,
    embed_texts,
    evaluate_protocol,
    load_checkpoint,
    save_store,
    vocabulary_from_checkpoint,
    write_reports,
)
from .losses import LossWeights
from .model import ModelConfig
from .synthesis import GeneratorConfig, generate_synthetic_corpus
from .text import keywords_as_text
from .training import FinetuneConfig, PretrainConfig, pretrain

EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

_TUPLE_FIELDS = {
    "modality_set",
    "split_counts",
    "split_fractions",
    "temperature_clamp",
    "betas",
    "k_list",
    "shots",
    "class_names",
}
_NESTED = {"weights": LossWeights, "finetune": FinetuneConfig}


@dataclasses.dataclass
class RunConfig:
    corpus: GeneratorConfig
    model: ModelConfig
    pretrain: PretrainConfig
    finetune: FinetuneConfig
    eval: EvalOptions


_SECTIONS = {
    "corpus": GeneratorConfig,
    "model": ModelConfig,
    "pretrain": PretrainConfig,
    "finetune": FinetuneConfig,
    "eval": EvalOptions,
}


def _build_section(cls, data: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {unknown}")
    kwargs = {}
    for key, value in data.items():
        if key in _NESTED and isinstance(value, dict):
            value = _build_section(_NESTED[key], value, f"{where}.{key}")
        elif key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"bad {where} section: {exc}") from exc


def load_run_config(path: Path | None) -> RunConfig:
    data = {}
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(raw) or {}
        if not isinstance(data, dict):
            raise ConfigurationError("config file must be a mapping of sections")
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigurationError(f"unknown config sections: {unknown}")
    sections = {
        name: _build_section(cls, data.get(name, {}) or {}, name)
        for name, cls in _SECTIONS.items()
    }
    return RunConfig(**sections)


def resolved_config_text(cfg: RunConfig) -> str:
    def clean(obj):
        if isinstance(obj, tuple):
            return [clean(v) for v in obj]
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [clean(v) for v in obj]
        return obj

    payload = {name: clean(asdict(getattr(cfg, name))) for name in _SECTIONS}
    return yaml.safe_dump(payload, sort_keys=True)


def _echo_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved").write_text(resolved_config_text(cfg), encoding="utf-8")


def _prepare_out(out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    for sub in ("logs", "checkpoints", "reports"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    return out_dir


def _fail(out_dir: Path | None, exc: Exception) -> None:
    if out_dir is not None and Path(out_dir).exists():
        try:
            (Path(out_dir) / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n")
        except OSError:
            pass


def _run(body, out_dir: Path | None = None) -> None:
    """Execute a command body with the exit-code contract."""
    try:
        body()
    except (ConfigurationError, ValidationError, DataError) as exc:
        _fail(out_dir, exc)
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except McLabError as exc:
        _fail(out_dir, exc)
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic contract
        _fail(out_dir, exc)
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


@click.group()
def main() -> None:
    """Multi-modal contrastive + masked-reconstruction lab."""


@main.command("generate-data")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=None, help="Overrides any config seed.")
def generate_data(config_path, out_dir, seed):
    """Generate a synthetic corpus into an absent or empty directory."""

    def body():
        if out_dir.exists() and any(out_dir.iterdir()):
            raise ValidationError(f"output directory {out_dir} is not empty")
        cfg = load_run_config(config_path)
        use_seed = seed if seed is not None else 7
        manifest = generate_synthetic_corpus(cfg.corpus, use_seed)
        persist_corpus(manifest, out_dir)
        _echo_config(cfg, out_dir)
        click.echo(
            f"wrote {len(manifest.records)} patients, "
            f"{len(manifest.images())} images to {out_dir}"
        )

    _run(body, out_dir)


@main.command("pretrain")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def pretrain_cmd(config_path, data_dir, out_dir):
    """Pretrain on a corpus directory; writes checkpoint, log, config echo."""

    def body():
        if not Path(data_dir).exists():
            raise ValidationError(f"data directory {data_dir} does not exist")
        cfg = load_run_config(config_path)
        manifest = load_corpus(data_dir)
        out = _prepare_out(out_dir)
        _echo_config(cfg, out)
        ckpt = pretrain(manifest, cfg.pretrain, out, model_cfg=cfg.model)
        click.echo(f"checkpoint: {ckpt}")

    _run(body, out_dir)


@main.command("embed")
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--side", type=click.Choice(["image", "text"]), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test")
@click.option("--out", "out_file", required=True, type=click.Path(path_type=Path))
def embed_cmd(ckpt_path, data_dir, side, split, out_file):
    """Write an embedding store for one side of a corpus split."""

    def body():
        ckpt = load_checkpoint(ckpt_path)
        model = ckpt.build()
        manifest = load_corpus(data_dir)
        if side == "image":
            images = manifest.images(split)
            if not images:
                raise DataError(f"no images in split {split!r}")
            matrix = embed_pixel_batches(model, [img.pixels for img in images])
            store = EmbeddingStore(
                ids=[img.image_id for img in images],
                matrix=matrix.astype(np.float32),
                side="image",
                metadata=[
                    {"modality": img.modality, "patient_id": img.patient_id}
                    for img in images
                ],
            )
        else:
            vocab = vocabulary_from_checkpoint(ckpt)
            patients = [p for p in manifest.patients(split) if p.keywords]
            if not patients:
                raise DataError(f"no keyword texts in split {split!r}")
            texts = [keywords_as_text(p.keywords) for p in patients]
            matrix = embed_texts(model, texts, vocab)
            store = EmbeddingStore(
                ids=[f"txt:{p.patient_id}" for p in patients],
                matrix=matrix.astype(np.float32),
                side="text",
                metadata=[{"patient_id": p.patient_id} for p in patients],
            )
        save_store(store, out_file)
        click.echo(f"wrote {len(store.ids)} x {store.dim} {side} embeddings")

    _run(body)


_PROTOCOL_HELP = {
    "zeroshot": "Zero-shot classification against per-class text prompts.",
    "retrieval": "Cross-modal retrieval: t2i, i2i (three variants), i2t.",
    "fewshot": "Few-shot fine-tuning protocol: n per class x repeat seeds.",
    "finetune": "Full-data fine-tuning with frozen-then-unfrozen encoder.",
}


def _protocol_command(name: str, protocol: str):
    @main.command(name, help=_PROTOCOL_HELP[protocol])
    @click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
    @click.option("--checkpoint", "ckpt_path", required=True,
                  type=click.Path(exists=True, path_type=Path))
    @click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
    @click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
    @click.option("--classes", default=None,
                  help="Comma-separated class names overriding the corpus labels.")
    @click.option("--k", "--K", "k_values", default=None,
                  help='Recall cutoffs, e.g. "1,5,10".')
    @click.option("--shots", default=None, help='Shot counts, e.g. "1,2,4,8,16".')
    @click.option("--seeds", "n_seeds", type=int, default=None,
                  help="Number of protocol repeats.")
    def cmd(config_path, ckpt_path, data_dir, out_dir, classes, k_values, shots, n_seeds):
        def body():
            cfg = load_run_config(config_path)
            options = cfg.eval
            if classes:
                options = dataclasses.replace(
                    options, class_names=tuple(c.strip() for c in classes.split(","))
                )
            if k_values:
                options = dataclasses.replace(
                    options, k_list=tuple(int(v) for v in k_values.split(","))
                )
            if shots:
                options = dataclasses.replace(
                    options, shots=tuple(int(v) for v in shots.split(","))
                )
            if n_seeds is not None:
                options = dataclasses.replace(options, n_seeds=n_seeds)
            if options.finetune is None:
                options = dataclasses.replace(options, finetune=cfg.finetune)
            manifest = load_corpus(data_dir)
            out = _prepare_out(out_dir)
            _echo_config(cfg, out)
            reports = evaluate_protocol(ckpt_path, manifest, protocol, options)
            path = write_reports(reports, out / "reports" / f"{protocol}.jsonl")
            for report in reports:
                click.echo(json.dumps(report.as_dict(), sort_keys=True))
            click.echo(f"reports: {path}")

        _run(body, out_dir)

    cmd.__name__ = f"{name.replace('-', '_')}_cmd"
    return cmd


zeroshot_cmd = _protocol_command("zeroshot", "zeroshot")
retrieve_cmd = _protocol_command("retrieve", "retrieval")
fewshot_cmd = _protocol_command("fewshot", "fewshot")
finetune_cmd = _protocol_command("finetune", "finetune")


@main.command("report")
@click.option("--in", "in_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_file", required=True, type=click.Path(path_type=Path))
def report_cmd(in_dir, out_file):
    """Aggregate metric reports into a table plus plots."""

    def body():
        in_path = Path(in_dir)
        if not in_path.exists():
            raise ValidationError(f"input directory {in_dir} does not exist")
        report_lines = []
        for path in sorted(in_path.rglob("*.jsonl")):
            if path.name == "train_log.jsonl":
                continue
            for line in path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    report_lines.append(json.loads(line))
        if not report_lines:
            raise DataError(f"no metric report lines under {in_dir}")

        out_path = Path(out_file)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        header = f"{'protocol':<10} {'dataset':<12} {'metric':<24} {'value':>8}  extras"
        rows = [header, "-" * len(header)]
        for rec in report_lines:
            extras = {
                k: rec[k]
                for k in ("ci_low", "ci_high", "n", "seed", "n_per_class", "p_value")
                if k in rec
            }
            rows.append(
                f"{rec['protocol']:<10} {rec['dataset']:<12} {rec['metric']:<24} "
                f"{rec['value']:>8.4f}  {extras if extras else ''}"
            )
        out_path.write_text("\n".join(rows) + "\n", encoding="utf-8")

        _write_plots(in_path, out_path.parent, report_lines)
        click.echo(f"aggregated {len(report_lines)} metric lines into {out_path}")

    _run(body)


def _write_plots(in_path: Path, plot_dir: Path, report_lines: list[dict]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    log_files = sorted(in_path.rglob("train_log.jsonl"))
    if log_files:
        records = [
            json.loads(line)
            for line in log_files[0].read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        steps = [r for r in records if "step" in r]
        if steps:
            fig, ax = plt.subplots(figsize=(7, 4))
            xs = [r["step"] for r in steps]
            for key in ("total", "l_img_text", "l_img_img", "l_recon"):
                ax.plot(xs, [r[key] for r in steps], label=key, linewidth=1)
            vals = [r for r in records if r.get("kind") == "val"]
            if vals:
                spe = max(xs) / max(1, (vals[-1]["epoch"] + 1))
                ax.plot(
                    [spe * (v["epoch"] + 1) for v in vals],
                    [v["val_total"] for v in vals],
                    "k--", label="val_total",
                )
            ax.set_xlabel("step")
            ax.set_ylabel("loss")
            ax.legend(fontsize=8)
            fig.tight_layout()
            fig.savefig(plot_dir / "loss_curves.png", dpi=120)
            plt.close(fig)

    fewshot = [
        r for r in report_lines
        if r["protocol"] == "fewshot" and r["metric"] == "macro_auroc"
    ]
    if fewshot:
        by_n: dict[int, list[float]] = {}
        for rec in fewshot:
            by_n.setdefault(int(rec["n_per_class"]), []).append(rec["value"])
        ns = sorted(by_n)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.boxplot([by_n[n] for n in ns], tick_labels=[str(n) for n in ns])
        ax.set_xlabel("labeled examples per class")
        ax.set_ylabel("macro AUROC")
        fig.tight_layout()
        fig.savefig(plot_dir / "fewshot_auroc.png", dpi=120)
        plt.close(fig)


if __name__ == "__main__":
    main()
