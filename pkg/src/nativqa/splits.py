"""Stratified train/dev/test splitting, dataset export, and corpus statistics.

Splitting happens independently inside each topic stratum: pairs are shuffled
by a seeded RNG and allocated to the ratio targets by largest-remainder
rounding, so the topic distribution of every split tracks the corpus within
one item per stratum. Exports are byte-stable for a fixed seed and input.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .corpus import (
    QAPair,
    ValidationError,
    dumps_record,
    read_jsonl,
    token_count,
)

SPLIT_NAMES = ("train", "dev", "test")

# Strata smaller than three items cannot feed all three splits; they fill
# test first, then train, then dev.
SMALL_STRATUM_PRIORITY = ("test", "train", "dev")

RNG_ALGORITHM = "mt19937"  # CPython's random.Random; pinned for portability


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.70, 0.10, 0.20)  # train, dev, test
    strata_key: str = "topic"
    rng_seed: int = 0
    test_only: bool = False
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        if self.strata_key != "topic":
            raise ValidationError("only topic stratification is supported")
        if self.rng_algorithm != RNG_ALGORITHM:
            raise ValidationError(f"unsupported rng algorithm {self.rng_algorithm!r}")
        if any(not 0.0 <= r <= 1.0 for r in self.ratios):
            raise ValidationError("ratios must lie in [0, 1]")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValidationError(f"ratios must sum to 1, got {sum(self.ratios)}")


def largest_remainder_allocation(total: int, ratios: tuple[float, float, float]) -> list[int]:
    """Integer allocation of ``total`` by ratio with largest-remainder rounding.

    Quotas are computed in exact rational arithmetic so remainder ties are
    well-defined; leftover items go to the largest fractional remainders,
    ties broken by declaration order (train, dev, test).
    """
    exact = [Fraction(r).limit_denominator(10**9) * total for r in ratios]
    counts = [int(x) for x in exact]
    leftover = total - sum(counts)
    remainders = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in remainders[:leftover]:
        counts[i] += 1
    return counts


def _allocate_stratum(n: int, spec: SplitSpec) -> list[int]:
    if spec.test_only:
        return [0, 0, n]
    nonzero = sum(1 for r in spec.ratios if r > 0)
    if n < 3 and nonzero == 3:
        counts = [0, 0, 0]
        order = {"train": 0, "dev": 1, "test": 2}
        for name in SMALL_STRATUM_PRIORITY[:n]:
            counts[order[name]] = 1
        return counts
    return largest_remainder_allocation(n, spec.ratios)


def stratified_split(
    pairs: list[QAPair], spec: SplitSpec
) -> tuple[list[QAPair], list[QAPair], list[QAPair]]:
    """Partition accepted pairs into train/dev/test within topic strata."""
    for pair in pairs:
        if pair.status != "accepted":
            raise ValidationError(f"pair {pair.id} has status {pair.status}, not accepted")
    assignment = assign_splits(pairs, spec)
    train = [p for p in pairs if assignment[p.id] == "train"]
    dev = [p for p in pairs if assignment[p.id] == "dev"]
    test = [p for p in pairs if assignment[p.id] == "test"]
    return train, dev, test


def assign_splits(pairs: list[QAPair], spec: SplitSpec) -> dict[str, str]:
    """Per-pair split assignment; the allocator behind stratified_split.

    Also used for the provisional routing that decides which pairs get dual
    annotation, where statuses are not yet accepted.
    """
    if len({p.id for p in pairs}) != len(pairs):
        raise ValidationError("duplicate pair ids in split input")
    strata: dict[str, list[QAPair]] = {}
    for pair in pairs:
        strata.setdefault(pair.topic.name, []).append(pair)
    rng = random.Random(spec.rng_seed)
    assignment: dict[str, str] = {}
    for topic in sorted(strata):
        members = sorted(strata[topic], key=lambda p: p.id)
        rng.shuffle(members)
        counts = _allocate_stratum(len(members), spec)
        cursor = 0
        for name, count in zip(SPLIT_NAMES, counts):
            for pair in members[cursor : cursor + count]:
                assignment[pair.id] = name
            cursor += count
    return assignment


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_dataset(
    splits: dict[str, list[QAPair]],
    out_dir: str | Path,
    fmt: str = "jsonl",
    relevance: dict[str, str] | None = None,
) -> dict:
    """Write one file per split per locale plus a manifest with counts/digests.

    Records carry the question, the effective answer, topic, locale fields,
    source URL, and the stored location-relevance label (metadata only).
    """
    if fmt != "jsonl":
        raise ValidationError(f"unsupported export format {fmt!r}")
    ids_seen: set[str] = set()
    for name, pairs in splits.items():
        for pair in pairs:
            if pair.id in ids_seen:
                raise ValidationError(f"overlapping splits: pair {pair.id} appears twice")
            ids_seen.add(pair.id)
    relevance = relevance or {}
    out_dir = Path(out_dir)
    manifest: dict = {"files": {}, "totals": {name: 0 for name in splits}}
    for name, pairs in splits.items():
        by_locale: dict[str, list[QAPair]] = {}
        for pair in pairs:
            by_locale.setdefault(pair.locale.key, []).append(pair)
        for locale_key, members in sorted(by_locale.items()):
            path = out_dir / locale_key / f"{name}.jsonl"
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", encoding="utf-8") as fh:
                for pair in members:
                    fh.write(dumps_record(export_record(pair, relevance.get(pair.id))))
                    fh.write("\n")
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            rel = str(path.relative_to(out_dir))
            manifest["files"][rel] = {"split": name, "count": len(members), "sha256": digest}
            manifest["totals"][name] += len(members)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False), encoding="utf-8"
    )
    return manifest


def export_record(pair: QAPair, relevance: str | None) -> dict:
    return {
        "id": pair.id,
        "question": pair.question,
        "answer": pair.effective_answer,
        "topic": pair.topic.name,
        "language": pair.locale.language,
        "location": pair.locale.location,
        "source_url": pair.source_url,
        "relevance": relevance,
    }


def import_dataset(path: str | Path) -> list[dict]:
    """Read an exported split file back (also accepts third-party files)."""
    return list(read_jsonl(path))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusStats:
    total: int
    per_locale: dict
    per_topic: dict
    mean_question_tokens: float | None
    mean_answer_tokens: float | None

    def __post_init__(self):
        if sum(self.per_locale.values()) != self.total:
            raise ValidationError("per-locale counts must sum to corpus size")
        for mean in (self.mean_question_tokens, self.mean_answer_tokens):
            if mean is not None and mean < 0:
                raise ValidationError("token means cannot be negative")

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "per_locale": self.per_locale,
            "per_topic": self.per_topic,
            "mean_question_tokens": self.mean_question_tokens,
            "mean_answer_tokens": self.mean_answer_tokens,
        }


def corpus_stats(pairs: list[QAPair]) -> CorpusStats:
    """Whitespace-token means and locale/topic histograms for a pair set."""
    per_locale: dict[str, int] = {}
    per_topic: dict[str, int] = {}
    q_tokens = 0
    a_tokens = 0
    for pair in pairs:
        per_locale[pair.locale.key] = per_locale.get(pair.locale.key, 0) + 1
        per_topic[pair.topic.name] = per_topic.get(pair.topic.name, 0) + 1
        q_tokens += token_count(pair.question)
        a_tokens += token_count(pair.effective_answer)
    n = len(pairs)
    return CorpusStats(
        total=n,
        per_locale=per_locale,
        per_topic=per_topic,
        mean_question_tokens=q_tokens / n if n else None,
        mean_answer_tokens=a_tokens / n if n else None,
    )


def per_locale_token_means(pairs: list[QAPair]) -> dict[str, tuple[float, float]]:
    """Per-locale (mean question tokens, mean answer tokens)."""
    grouped: dict[str, list[QAPair]] = {}
    for pair in pairs:
        grouped.setdefault(pair.locale.key, []).append(pair)
    out = {}
    for key, members in sorted(grouped.items()):
        qs = sum(token_count(p.question) for p in members) / len(members)
        ans = sum(token_count(p.effective_answer) for p in members) / len(members)
        out[key] = (qs, ans)
    return out


def render_length_table(means: dict[str, tuple[float, float]]) -> str:
    lines = ["locale        question (avg)  answer (avg)"]
    for key, (q, a) in means.items():
        lines.append(f"{key:<13} {q:>14.1f}  {a:>12.1f}")
    return "\n".join(lines)
