"""Domain reliability: registrable-domain extraction, per-annotator judgments,
majority-vote aggregation, and the reliable-source filter for harvested pairs.

Reliability labels come from three human annotators per domain; only domains
a strict majority calls very reliable pass the filter by default. Three-way
splits are queued for human adjudication instead of silently defaulting.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable
from urllib.parse import urlparse

from .corpus import QAPair, ValidationError, read_jsonl, write_jsonl

RELIABILITY_LABELS = (
    "very_reliable",
    "partially_reliable",
    "not_sure",
    "completely_unreliable",
)

RESOLUTIONS = ("majority", "adjudicated", "unresolved")

# Vendored snapshot is pinned so extraction is identical across machines.
_PSL_RESOURCE = "public_suffix_list.dat"
_PSL_SHA256 = "e8b61e66b90bec30e44e0b90a0b512a1e2b91bd1944acb44a42a67104d2ab2a9"


class DomainExtractionError(ValueError):
    """Raised for URLs no registrable domain can be derived from."""

    def __init__(self, url: str, reason: str):
        super().__init__(f"cannot extract domain from {url!r}: {reason}")
        self.url = url


@dataclass(frozen=True)
class SuffixRules:
    exact: frozenset[str]
    wildcards: frozenset[str]  # parents of "*.x" rules
    exceptions: frozenset[str]
    tlds: frozenset[str]

    @classmethod
    def parse(cls, text: str) -> "SuffixRules":
        exact, wildcards, exceptions = set(), set(), set()
        for line in text.splitlines():
            rule = line.strip()
            if not rule or rule.startswith("//"):
                continue
            if rule.startswith("!"):
                exceptions.add(rule[1:])
            elif rule.startswith("*."):
                wildcards.add(rule[2:])
            else:
                exact.add(rule)
        tlds = {r.rsplit(".", 1)[-1] for r in exact | wildcards | exceptions}
        return cls(frozenset(exact), frozenset(wildcards), frozenset(exceptions), frozenset(tlds))


_rules: SuffixRules | None = None


def suffix_rules() -> SuffixRules:
    global _rules
    if _rules is None:
        data = resources.files("nativqa.data").joinpath(_PSL_RESOURCE).read_bytes()
        digest = hashlib.sha256(data).hexdigest()
        if digest != _PSL_SHA256:
            raise RuntimeError(
                f"public suffix snapshot hash mismatch: expected {_PSL_SHA256}, got {digest}"
            )
        _rules = SuffixRules.parse(data.decode("utf-8"))
    return _rules


def registrable_domain(host: str) -> str:
    """Public-suffix-aware registrable domain (eTLD+1) for a hostname.

    Falls back to the full hostname when the snapshot has no rule for the
    TLD, and returns the host itself when the host IS a public suffix.
    """
    rules = suffix_rules()
    labels = host.lower().rstrip(".").split(".")
    if labels[-1] not in rules.tlds:
        return host.lower().rstrip(".")
    # Longest matching rule wins; an exception rule is itself registrable.
    suffix_len = 1 if labels[-1] in rules.exact else 0
    for start in range(len(labels) - 1, -1, -1):
        candidate = ".".join(labels[start:])
        if candidate in rules.exceptions:
            return candidate
        n = len(labels) - start
        if candidate in rules.exact and n > suffix_len:
            suffix_len = n
        parent = ".".join(labels[start + 1 :])
        if start + 1 < len(labels) and parent in rules.wildcards and n > suffix_len:
            suffix_len = n
    if suffix_len >= len(labels):
        return ".".join(labels)
    return ".".join(labels[-(suffix_len + 1) :])


def extract_domain(source_url: str) -> str:
    """Registrable domain of an absolute URL's host."""
    parsed = urlparse(source_url)
    if not parsed.scheme or not parsed.netloc:
        raise DomainExtractionError(source_url, "not an absolute URL")
    host = parsed.hostname
    if not host:
        raise DomainExtractionError(source_url, "no hostname")
    return registrable_domain(host)


@dataclass(frozen=True)
class DomainRecord:
    """A web domain with per-annotator reliability judgments."""

    domain: str
    judgments: tuple = ()  # (annotator_id, label) pairs
    final_label: str | None = None
    resolution: str = "unresolved"

    def __post_init__(self):
        annotators = [a for a, _ in self.judgments]
        if len(annotators) != len(set(annotators)):
            raise ValidationError(f"duplicate annotator judgments for domain {self.domain}")
        for _, label in self.judgments:
            if label not in RELIABILITY_LABELS:
                raise ValidationError(f"unknown reliability label {label!r}")
        if self.resolution not in RESOLUTIONS:
            raise ValidationError(f"unknown resolution {self.resolution!r}")
        if self.final_label is not None and self.resolution == "unresolved":
            raise ValidationError("final_label requires a resolution")

    def with_judgment(self, annotator_id: str, label: str) -> "DomainRecord":
        """Last-writer-wins upsert of one annotator's judgment."""
        kept = tuple((a, l) for a, l in self.judgments if a != annotator_id)
        return replace(self, judgments=kept + ((annotator_id, label),))

    def to_record(self) -> dict:
        return {
            "domain": self.domain,
            "judgments": [list(j) for j in self.judgments],
            "final_label": self.final_label,
            "resolution": self.resolution,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DomainRecord":
        return cls(
            domain=rec["domain"],
            judgments=tuple((a, l) for a, l in rec.get("judgments", [])),
            final_label=rec.get("final_label"),
            resolution=rec.get("resolution", "unresolved"),
        )


def aggregate_label(rec: DomainRecord) -> DomainRecord:
    """Majority vote over the judgments (order-independent).

    A strict majority (a unique label held by at least two annotators) wins;
    a full split leaves the record unresolved, queued for adjudication.
    """
    if len(rec.judgments) < 3:
        raise ValidationError(f"insufficient judgments for {rec.domain}: need >= 3")
    counts = Counter(label for _, label in rec.judgments)
    (top, top_n), *rest = counts.most_common()
    if top_n >= 2 and (not rest or rest[0][1] < top_n):
        return replace(rec, final_label=top, resolution="majority")
    return replace(rec, final_label=None, resolution="unresolved")


def adjudicate(rec: DomainRecord, label: str) -> DomainRecord:
    if label not in RELIABILITY_LABELS:
        raise ValidationError(f"unknown reliability label {label!r}")
    return replace(rec, final_label=label, resolution="adjudicated")


def extract_registry(pairs: Iterable[QAPair]) -> list[DomainRecord]:
    """Unique source domains of a pair set, as unjudged records."""
    domains = sorted({p.domain for p in pairs})
    return [DomainRecord(domain=d) for d in domains]


def filter_reliable(
    pairs: set[QAPair],
    registry: Iterable[DomainRecord],
    admit_partially_reliable: bool = False,
) -> set[QAPair]:
    """Transition pairs from domains that failed the check to domain_filtered.

    Pairs from passing domains keep their status; pairs whose domain has no
    final label yet (unknown or unresolved) are held unchanged, pending
    judgment. Texts are never touched.
    """
    passing = {"very_reliable"}
    if admit_partially_reliable:
        passing.add("partially_reliable")
    by_domain = {r.domain: r for r in registry}
    out: set[QAPair] = set()
    for pair in pairs:
        rec = by_domain.get(pair.domain)
        if rec is None or rec.final_label is None:
            out.add(pair)  # held: queued for judgment
        elif rec.final_label in passing:
            out.add(pair)
        else:
            out.add(pair.with_status("domain_filtered"))
    return out


def pending_domains(pairs: Iterable[QAPair], registry: Iterable[DomainRecord]) -> list[str]:
    """Domains that still need judgment before their pairs can move on."""
    by_domain = {r.domain: r for r in registry}
    pending = set()
    for pair in pairs:
        rec = by_domain.get(pair.domain)
        if rec is None or rec.final_label is None:
            pending.add(pair.domain)
    return sorted(pending)


def registry_summary(registry: Iterable[DomainRecord]) -> dict:
    """Counts and percentages of reliable vs unreliable labeled domains."""
    records = list(registry)
    labeled = [r for r in records if r.final_label is not None]
    reliable = sum(1 for r in labeled if r.final_label == "very_reliable")
    unreliable = len(labeled) - reliable
    summary = {
        "domains": len(records),
        "labeled": len(labeled),
        "very_reliable": reliable,
        "eliminated": unreliable,
        "unresolved": sum(1 for r in records if r.resolution == "unresolved" and r.judgments),
    }
    if labeled:
        summary["reliable_pct"] = 100.0 * reliable / len(labeled)
        summary["unreliable_pct"] = 100.0 * unreliable / len(labeled)
    return summary


def render_registry_summary(summary: dict) -> str:
    lines = [
        f"domains checked: {summary['domains']}",
        f"labeled: {summary['labeled']} (very reliable: {summary['very_reliable']}, "
        f"eliminated: {summary['eliminated']})",
    ]
    if "reliable_pct" in summary:
        lines.append(
            f"reliable: {summary['reliable_pct']:.2f}% / unreliable: {summary['unreliable_pct']:.2f}%"
        )
    if summary.get("unresolved"):
        lines.append(f"awaiting adjudication: {summary['unresolved']}")
    return "\n".join(lines)


def write_registry(path: str | Path, registry: Iterable[DomainRecord]) -> int:
    return write_jsonl(path, (r.to_record() for r in registry))


def read_registry(path: str | Path) -> list[DomainRecord]:
    return [DomainRecord.from_record(rec) for rec in read_jsonl(path)]
