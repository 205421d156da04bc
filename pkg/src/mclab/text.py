"""Report text to canonical keywords, zero-shot prompts, and tokenization.

Free-text findings are mapped to ordered hierarchical keyword labels through
a pattern dictionary; a child label ("mild DR") always travels with its
parent ("DR"). Keyword sets are rendered for the text encoder by joining
with ", " in stored order. The tokenizer is a word-level one with a
frequency-fitted vocabulary and four reserved ids.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DEFAULT_MODALITY_LONG_NAMES
from .errors import ConfigurationError, ValidationError

PAD_ID = 0
UNK_ID = 1
START_ID = 2
END_ID = 3
N_RESERVED = 4
DEFAULT_MAX_LEN = 64

VOCAB_FORMAT_VERSION = 1
DICTIONARY_FORMAT_VERSION = 1

_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class KeywordEntry:
    pattern: str
    keywords: tuple[str, ...]
    is_regex: bool = False


class KeywordDictionary:
    """Mapping from text patterns to ordered canonical keyword labels.

    Patterns are matched case-insensitively; literal patterns match on word
    boundaries. All validation happens at construction time, never at match
    time.
    """

    def __init__(self, entries: list[KeywordEntry]):
        self.entries = list(entries)
        self._compiled: list[re.Pattern] = []
        known = {kw for e in self.entries for kw in e.keywords}
        for i, entry in enumerate(self.entries):
            if not entry.keywords:
                raise ConfigurationError(f"dictionary entry {i}: empty keyword list")
            if len(set(entry.keywords)) != len(entry.keywords):
                raise ConfigurationError(
                    f"dictionary entry {i}: duplicate canonical keywords"
                )
            for kw in entry.keywords:
                for parent in parent_labels(kw, known):
                    if parent not in entry.keywords:
                        raise ConfigurationError(
                            f"dictionary entry {i}: child label {kw!r} lacks its "
                            f"parent {parent!r}"
                        )
            if entry.is_regex:
                try:
                    self._compiled.append(re.compile(entry.pattern, re.IGNORECASE))
                except re.error as exc:
                    raise ConfigurationError(
                        f"dictionary entry {i}: invalid regex {entry.pattern!r}: {exc}"
                    ) from exc
            else:
                self._compiled.append(
                    re.compile(rf"\b{re.escape(entry.pattern)}\b", re.IGNORECASE)
                )

    @property
    def canonical_labels(self) -> set[str]:
        return {kw for e in self.entries for kw in e.keywords}

    def match_positions(self, text: str) -> list[tuple[int, int]]:
        """(first match position, entry index) for every entry that matches."""
        hits = []
        for i, pattern in enumerate(self._compiled):
            m = pattern.search(text)
            if m is not None:
                hits.append((m.start(), i))
        return hits


def parent_labels(label: str, known: set[str]) -> list[str]:
    """Canonical labels that are proper token-suffixes of ``label``."""
    tokens = label.split(" ")
    return [
        " ".join(tokens[i:])
        for i in range(1, len(tokens))
        if " ".join(tokens[i:]) in known
    ]


def extract_keywords(report_text: str, dictionary: KeywordDictionary) -> tuple[str, ...]:
    """Canonical keywords of all matching entries, in first-occurrence order.

    Keywords contributed by the same entry keep the entry's internal order;
    entries are visited by the position of their earliest match in the text.
    Returns an empty tuple when nothing matches.
    """
    hits = sorted(dictionary.match_positions(report_text))
    out: list[str] = []
    seen: set[str] = set()
    for _, entry_idx in hits:
        for kw in dictionary.entries[entry_idx].keywords:
            if kw not in seen:
                seen.add(kw)
                out.append(kw)
    return tuple(out)


def keywords_as_text(keywords: tuple[str, ...]) -> str:
    """Render a keyword set for the text encoder: ", "-joined, stored order."""
    return ", ".join(keywords)


def build_prompt(
    modality_tag: str,
    class_name: str,
    long_names: dict[str, str] | None = None,
) -> str:
    """Zero-shot text prompt: "<modality long name>, <class name>".

    The long name comes from the registry (lowercased); a tag without a
    registered long name falls back to the tag itself, lowercased.
    """
    if not modality_tag or not class_name:
        raise ConfigurationError("modality tag and class name must be non-empty")
    table = DEFAULT_MODALITY_LONG_NAMES if long_names is None else long_names
    long = table.get(modality_tag, modality_tag).lower()
    return f"{long}, {class_name}"


# ---------------------------------------------------------------------------
# Dictionary file format: "pattern<TAB>kw1|kw2|...", "re:" prefix for regex,
# "#" comment lines allowed.
# ---------------------------------------------------------------------------


def parse_dictionary(text: str) -> KeywordDictionary:
    entries = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise ConfigurationError(f"dictionary line {line_no}: missing TAB")
        pattern, _, kw_field = line.partition("\t")
        keywords = tuple(k.strip() for k in kw_field.split("|") if k.strip())
        is_regex = pattern.startswith("re:")
        if is_regex:
            pattern = pattern[3:]
        entries.append(KeywordEntry(pattern=pattern, keywords=keywords, is_regex=is_regex))
    return KeywordDictionary(entries)


def load_dictionary(path: Path) -> KeywordDictionary:
    return parse_dictionary(Path(path).read_text(encoding="utf-8"))


def save_dictionary(dictionary: KeywordDictionary, path: Path) -> None:
    lines = [f"# keyword dictionary, format_version={DICTIONARY_FORMAT_VERSION}"]
    for e in dictionary.entries:
        prefix = "re:" if e.is_regex else ""
        lines.append(f"{prefix}{e.pattern}\t{'|'.join(e.keywords)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# Starter dictionary: entries for the synthetic corpus classes (each leaf
# carries a descriptive parent label) plus a worked severity hierarchy.
# Every canonical label also matches itself so that extraction is stable
# under re-extraction from rendered keyword text.
_STARTER_LINES = """\
drusen\tretinal deposits|drusen
retinal deposits\tretinal deposits
hemorrhage\tvascular lesion|hemorrhage
re:h(a)?emorrhage\tvascular lesion|hemorrhage
vascular lesion\tvascular lesion
exudate\tfluid leakage|exudate
fluid leakage\tfluid leakage
atrophy\ttissue degeneration|atrophy
tissue degeneration\ttissue degeneration
edema\tretinal swelling|edema
retinal swelling\tretinal swelling
scarring\tfibrous change|scarring
fibrous change\tfibrous change
neovascularization\tvessel growth|neovascularization
vessel growth\tvessel growth
detachment\tlayer separation|detachment
layer separation\tlayer separation
diabetic retinopathy\tDR
mild diabetic retinopathy\tDR|mild DR
DR\tDR
mild DR\tDR|mild DR
"""


def starter_dictionary() -> KeywordDictionary:
    return parse_dictionary(_STARTER_LINES)


# ---------------------------------------------------------------------------
# Word-level tokenizer
# ---------------------------------------------------------------------------


def words_of(text: str) -> list[str]:
    """Lowercase words, split on whitespace and punctuation."""
    return _WORD_RE.findall(text.lower())


@dataclass
class Vocabulary:
    word_to_id: dict[str, int]
    max_len: int = DEFAULT_MAX_LEN

    @property
    def size(self) -> int:
        return N_RESERVED + len(self.word_to_id)

    def id_to_word(self) -> dict[int, str]:
        return {i: w for w, i in self.word_to_id.items()}


def fit_vocabulary(texts, max_len: int = DEFAULT_MAX_LEN) -> Vocabulary:
    """Fit a vocabulary on training texts only.

    Words are ordered by descending frequency, ties broken lexicographically,
    and assigned ids starting after the reserved block.
    """
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(words_of(text))
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(
        word_to_id={w: N_RESERVED + i for i, (w, _) in enumerate(ordered)},
        max_len=max_len,
    )


def tokenize(text: str, vocab: Vocabulary) -> np.ndarray:
    """Fixed-length id sequence [start, words..., end, pad...].

    Out-of-vocabulary words map to the unknown id; overlong texts keep the
    start of the word sequence.
    """
    ids = [vocab.word_to_id.get(w, UNK_ID) for w in words_of(text)]
    ids = ids[: vocab.max_len - 2]
    seq = [START_ID] + ids + [END_ID]
    seq += [PAD_ID] * (vocab.max_len - len(seq))
    return np.asarray(seq, dtype=np.int64)


def detokenize(ids, vocab: Vocabulary) -> list[str]:
    """Words of a token sequence, reserved ids skipped."""
    inverse = vocab.id_to_word()
    return [inverse[i] for i in np.asarray(ids).tolist() if i >= N_RESERVED]


def save_vocabulary(vocab: Vocabulary, path: Path) -> None:
    header = {
        "format_version": VOCAB_FORMAT_VERSION,
        "vocab_size": vocab.size,
        "max_len": vocab.max_len,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for word, idx in sorted(vocab.word_to_id.items(), key=lambda kv: kv[1]):
        lines.append(f"{word}\t{idx}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path: Path) -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError(f"{path}: empty vocabulary file")
    header = json.loads(lines[0])
    if header.get("format_version") != VOCAB_FORMAT_VERSION:
        raise ValidationError(
            f"{path}: unsupported vocabulary format_version "
            f"{header.get('format_version')!r}"
        )
    word_to_id = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        word, _, idx = line.partition("\t")
        word_to_id[word] = int(idx)
    vocab = Vocabulary(word_to_id=word_to_id, max_len=int(header["max_len"]))
    if vocab.size != header["vocab_size"]:
        raise ValidationError(f"{path}: vocab_size mismatch")
    return vocab
