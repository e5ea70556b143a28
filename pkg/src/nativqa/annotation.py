"""Four-step QA annotation state machine, dual-annotation resolution, and
agreement statistics (Fleiss' kappa, exact-match rate, normalized Levenshtein).

An annotator first judges question validity; only good questions get the
location-relevance, answer-category, and answer-editing steps. Test-set items
are annotated twice, with a third annotator breaking disagreements.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import QAPair, ValidationError, normalize_text

QUESTION_VALIDITY = ("good", "bad")
LOCATION_RELEVANCE = ("yes", "no", "maybe", "unsure")
ANSWER_CATEGORIES = ("correct", "partially_correct", "incorrect", "cannot_find")

_EDIT_REQUIRED = {"partially_correct", "incorrect"}

# Sentinel position component meaning "the original answer, unedited".
_ORIGINAL = "\x00original"


@dataclass(frozen=True)
class AnnotationResult:
    """One annotator's pass through the four-step workflow for one pair."""

    qa_id: str
    annotator_id: str
    validity: str
    relevance: str | None = None
    category: str | None = None
    edited_answer: str | None = None
    elapsed: float = 0.0

    def __post_init__(self):
        if self.validity not in QUESTION_VALIDITY:
            raise ValidationError(f"validity must be one of {QUESTION_VALIDITY}")
        if self.validity == "bad":
            for name in ("relevance", "category", "edited_answer"):
                if getattr(self, name) is not None:
                    raise ValidationError(f"validity=bad forbids step data: {name}")
            return
        if self.relevance is not None and self.relevance not in LOCATION_RELEVANCE:
            raise ValidationError(f"relevance must be one of {LOCATION_RELEVANCE}")
        if self.category is None:
            raise ValidationError("validity=good requires an answer category")
        if self.category not in ANSWER_CATEGORIES:
            raise ValidationError(f"category must be one of {ANSWER_CATEGORIES}")
        if self.category in _EDIT_REQUIRED:
            if not self.edited_answer:
                raise ValidationError(f"category={self.category} requires a non-empty edited_answer")
        elif self.edited_answer is not None:
            raise ValidationError(f"category={self.category} forbids edited_answer")

    def to_record(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "annotator_id": self.annotator_id,
            "validity": self.validity,
            "relevance": self.relevance,
            "category": self.category,
            "edited_answer": self.edited_answer,
            "elapsed": self.elapsed,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AnnotationResult":
        return cls(
            qa_id=rec["qa_id"],
            annotator_id=rec["annotator_id"],
            validity=rec["validity"],
            relevance=rec.get("relevance"),
            category=rec.get("category"),
            edited_answer=rec.get("edited_answer"),
            elapsed=rec.get("elapsed", 0.0),
        )


def advance(qa: QAPair, result: AnnotationResult) -> QAPair:
    """Apply a single annotation to a pending pair (train/dev protocol).

    Bad questions and unverifiable answers are rejected; correct answers are
    accepted as-is; edited answers are accepted with the edit. Relevance is
    metadata only and never filters.
    """
    if qa.status != "annotation_pending":
        raise ValidationError(f"pair {qa.id} is {qa.status}, not annotation_pending")
    if result.qa_id != qa.id:
        raise ValidationError(f"result targets {result.qa_id}, pair is {qa.id}")
    if result.validity == "bad" or result.category == "cannot_find":
        return qa.with_status("rejected")
    if result.category == "correct":
        return qa.with_status("accepted")
    return qa.with_status("accepted", edited_answer=result.edited_answer)


def position_of(result: AnnotationResult) -> tuple:
    """The comparable stance of one annotation: validity, category, effective answer."""
    if result.edited_answer is not None:
        answer = normalize_text(result.edited_answer)
    else:
        answer = _ORIGINAL
    return (result.validity, result.category, answer)


@dataclass(frozen=True)
class Resolution:
    """Outcome of dual/triple annotation for one pair."""

    outcome: str  # resolved | escalate | dropped
    result: AnnotationResult | None = None

    def apply(self, qa: QAPair) -> QAPair:
        if self.outcome != "resolved" or self.result is None:
            raise ValidationError(f"cannot apply a {self.outcome} resolution")
        return advance(qa, self.result)


def resolve_pair(results: Sequence[AnnotationResult]) -> Resolution:
    """Resolve two or three annotations of one pair.

    Two agreeing results (same validity and category, identical effective
    answers after normalization) resolve immediately; two disagreeing results
    escalate for a third annotator; with three, any position held by at least
    two wins, otherwise the pair is dropped.
    """
    if len(results) not in (2, 3):
        raise ValidationError(f"resolve_pair needs 2 or 3 results, got {len(results)}")
    if len({r.qa_id for r in results}) != 1:
        raise ValidationError("results span multiple qa_ids")
    annotators = [r.annotator_id for r in results]
    if len(set(annotators)) != len(annotators):
        raise ValidationError("duplicate annotator in resolution set")

    positions = [position_of(r) for r in results]
    if len(results) == 2:
        if positions[0] == positions[1]:
            return Resolution("resolved", results[0])
        return Resolution("escalate")
    counts = Counter(positions)
    winner, n = counts.most_common(1)[0]
    if n < 2:
        return Resolution("dropped")
    for result, pos in zip(results, positions):
        if pos == winner:
            return Resolution("resolved", result)
    raise AssertionError("unreachable: counted position missing")


def fleiss_kappa(matrix: Sequence[Sequence[int]], n_raters: int) -> float:
    """Chance-corrected agreement for n_raters over item-by-category counts.

    kappa = (P_bar - Pe_bar) / (1 - Pe_bar), where P_bar is the mean per-item
    pairwise agreement and Pe_bar the expected agreement from the category
    marginals.
    """
    if not matrix:
        raise ValidationError("kappa needs at least one item")
    n_categories = len(matrix[0])
    if n_categories < 2:
        raise ValidationError("kappa needs at least two categories")
    if n_raters < 2:
        raise ValidationError("kappa needs at least two raters")
    for row in matrix:
        if len(row) != n_categories:
            raise ValidationError("ragged count matrix")
        if sum(row) != n_raters:
            raise ValidationError(f"row sums to {sum(row)}, expected {n_raters}")

    n_items = len(matrix)
    p_bar = sum(
        (sum(c * c for c in row) - n_raters) / (n_raters * (n_raters - 1)) for row in matrix
    ) / n_items
    marginals = [
        sum(row[j] for row in matrix) / (n_items * n_raters) for j in range(n_categories)
    ]
    pe_bar = sum(p * p for p in marginals)
    if abs(1.0 - pe_bar) < 1e-12:
        if abs(1.0 - p_bar) < 1e-12:
            return 1.0
        raise ValidationError("degenerate marginals: all ratings in one category")
    return (p_bar - pe_bar) / (1.0 - pe_bar)


def levenshtein_distance(a: str, b: str) -> int:
    """Unit-cost edit distance (insertion, deletion, substitution all cost 1)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def normalized_levenshtein(a: str, b: str) -> float:
    """Edit distance divided by the longer string's length; 0 for two empties."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein_distance(a, b) / longest


def edit_agreement_rate(pairs: Sequence[tuple[str, str]]) -> float:
    """Fraction of answer pairs that match exactly after normalization."""
    if not pairs:
        raise ValidationError("edit_agreement_rate needs at least one pair")
    matches = sum(1 for a, b in pairs if normalize_text(a) == normalize_text(b))
    return matches / len(pairs)


@dataclass(frozen=True)
class AgreementReport:
    """Agreement statistics for one task or (language, location, split) cell."""

    task: str
    n_items: int
    fleiss_kappa: float | None = None
    exact_match_rate: float | None = None
    mean_norm_levenshtein: float | None = None

    def __post_init__(self):
        if self.fleiss_kappa is not None and not -1.0 <= self.fleiss_kappa <= 1.0:
            raise ValidationError("kappa out of [-1, 1]")
        for name in ("exact_match_rate", "mean_norm_levenshtein"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} out of [0, 1]")

    def to_record(self) -> dict:
        return {
            "task": self.task,
            "n_items": self.n_items,
            "fleiss_kappa": self.fleiss_kappa,
            "exact_match_rate": self.exact_match_rate,
            "mean_norm_levenshtein": self.mean_norm_levenshtein,
        }


def mean_edit_distance(pairs: Iterable[tuple[str, str]]) -> float | None:
    values = [normalized_levenshtein(normalize_text(a), normalize_text(b)) for a, b in pairs]
    if not values:
        return None
    return sum(values) / len(values)


def render_agreement_table(reports: Sequence[AgreementReport]) -> str:
    """Aligned text table of per-cell agreement plus a trailing average row."""
    headers = ("task", "items", "kappa", "exact match", "mean edit dist")
    rows = []
    for rep in reports:
        rows.append(
            (
                rep.task,
                str(rep.n_items),
                "-" if rep.fleiss_kappa is None else f"{rep.fleiss_kappa:.2f}",
                "-" if rep.exact_match_rate is None else f"{100.0 * rep.exact_match_rate:.2f}%",
                "-" if rep.mean_norm_levenshtein is None else f"{rep.mean_norm_levenshtein:.3f}",
            )
        )
    distances = [r.mean_norm_levenshtein for r in reports if r.mean_norm_levenshtein is not None]
    if distances:
        rows.append(("average", "", "", "", f"{sum(distances) / len(distances):.3f}"))
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)
