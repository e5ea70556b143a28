"""Benchmark models on a test split: zero-shot prompting, response parsing,
metric scoring, judge ratings, report tables, and fine-tune record export.

Model answers arrive as JSON per the prompt contract; parsing degrades
gracefully (strict, then repaired, then raw-text fallback) so one malformed
response never aborts a run. All aggregate numbers are recomputable from the
emitted per-item records.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .corpus import Locale, QAPair, ValidationError
from .metrics import bleu, rouge1_f
from .providers import LLMProvider

log = logging.getLogger(__name__)

LANGUAGE_NAMES = {
    "ar": "Arabic",
    "as": "Assamese",
    "bn": "Bangla",
    "en": "English",
    "hi": "Hindi",
    "ne": "Nepali",
    "tr": "Turkish",
}

ZERO_SHOT_SYSTEM_TEMPLATE = (
    "You are a/an [lang] AI assistant specializing in both short and long-form "
    "question answering. Your task is to provide clear, accurate, and relevant "
    "responses across various fields, ensuring concise and well-structured answers."
)

ZERO_SHOT_USER_TEMPLATE = (
    "Please use your expertise to answer the following [lang] question. "
    "Answer in [lang] and rate your confidence level from 1 to 10. "
    'Provide your response in the following JSON format: '
    '{"answer": "your answer", "score": your confidence score}. '
    "Please provide JSON output only. No additional text. "
    "Question: [question]"
)

JUDGE_INSTRUCTION = (
    "Please act as an impartial judge and evaluate the quality of the response "
    "provided by AI assistant to the user question displayed below. You will be "
    "given a reference answer. Your evaluation should consider factors such as "
    "the helpfulness, relevance, accuracy, depth, creativity, and level of detail "
    "of the response. Begin your evaluation by comparing the assistant's answer "
    "with the reference answer. Then provide a short explanation. Be as objective "
    "as possible. After providing your explanation, please rate the response on a "
    "scale of 1 to 10."
)

# The instruction above specifies no output format; an explicit token keeps
# rating extraction from scraping free text.
JUDGE_FORMAT_SUFFIX = (
    ' You must end your reply by strictly following this format: "Rating: [[rating]]", '
    'for example: "Rating: [[5]]".'
)

CONCISION_SUFFIX = (
    "Make your answer very concise and to the point. Return only the answer "
    "without any explanation, justification or additional text"
)

FINETUNE_SYSTEM_TEMPLATE = (
    "You are a/an [lang] AI assistant specialized in providing detailed and "
    "accurate answers across various fields. Your task is to deliver clear, "
    "concise, and relevant information."
)

_RATING_RE = re.compile(r"\[\[(\d+)\]\]")


def language_name(locale: Locale) -> str:
    try:
        return LANGUAGE_NAMES[locale.language]
    except KeyError:
        raise ValidationError(f"no language name mapping for code {locale.language!r}") from None


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if not self.system or not self.user:
            raise ValidationError("prompt texts must be non-empty")
        if "[lang]" in self.system or "[lang]" in self.user:
            raise ValidationError("language placeholder left unsubstituted")


def build_zero_shot_prompt(question: str, locale: Locale) -> PromptBundle:
    """Render the zero-shot QA prompt for a question in the locale's language."""
    if not question:
        raise ValidationError("question must be non-empty")
    name = language_name(locale)
    system = ZERO_SHOT_SYSTEM_TEMPLATE.replace("[lang]", name)
    user = ZERO_SHOT_USER_TEMPLATE.replace("[lang]", name).replace("[question]", question)
    return PromptBundle(system=system, user=user)


@dataclass(frozen=True)
class ModelResponse:
    raw: str
    answer: str | None = None
    confidence: int | None = None
    parse_status: str = "failed"  # ok | repaired | failed

    def __post_init__(self):
        if self.parse_status not in ("ok", "repaired", "failed"):
            raise ValidationError(f"unknown parse_status {self.parse_status!r}")
        if self.parse_status == "ok" and self.answer is None:
            raise ValidationError("parse_status=ok requires an answer")
        if self.confidence is not None and not 1 <= self.confidence <= 10:
            raise ValidationError("confidence must be in 1..10")


def serialize_model_response(answer: str, confidence: int | None = None) -> str:
    """The response format the prompt contract asks models to produce."""
    payload: dict = {"answer": answer}
    if confidence is not None:
        payload["score"] = confidence
    return json.dumps(payload, ensure_ascii=False)


def _coerce_confidence(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        value = int(value)
    elif isinstance(value, str):
        try:
            value = int(float(value.strip()))
        except ValueError:
            return None
    else:
        return None
    return value if 1 <= value <= 10 else None


def _extract_object(text: str) -> str | None:
    """First balanced {...} block, honoring strings and escapes."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _strip_fences(text: str) -> str:
    stripped = text.strip()
    if not stripped.startswith("```"):
        return stripped
    lines = stripped.splitlines()
    return "\n".join(ln for ln in lines if not ln.strip().startswith("```")).strip()


def parse_model_response(raw: str) -> ModelResponse:
    """Parse the JSON answer contract; failures become statuses, not exceptions.

    Strict parse first; then a repair pass (strip code fences, take the first
    balanced object, coerce the score); if that still fails the raw text is
    kept as the answer and flagged so scores on it are identifiable.
    """

    def from_payload(payload, status):
        answer = payload.get("answer")
        if not isinstance(answer, str):
            return None
        return ModelResponse(
            raw=raw,
            answer=answer,
            confidence=_coerce_confidence(payload.get("score")),
            parse_status=status,
        )

    try:
        payload = json.loads(raw)
        if isinstance(payload, dict):
            parsed = from_payload(payload, "ok")
            if parsed is not None:
                return parsed
    except json.JSONDecodeError:
        pass

    candidate = _strip_fences(raw)
    block = _extract_object(candidate)
    for text in (candidate, block):
        if not text:
            continue
        try:
            payload = json.loads(text)
        except json.JSONDecodeError:
            continue
        if isinstance(payload, dict):
            parsed = from_payload(payload, "repaired")
            if parsed is not None:
                return parsed
    return ModelResponse(raw=raw, answer=raw, confidence=None, parse_status="failed")


# ---------------------------------------------------------------------------
# Judge
# ---------------------------------------------------------------------------


def build_judge_prompt(question: str, model_answer: str, reference_answer: str) -> PromptBundle:
    user = (
        f"{JUDGE_INSTRUCTION}{JUDGE_FORMAT_SUFFIX}\n\n"
        f"[Question]\n{question}\n\n"
        f"[Reference Answer]\n{reference_answer}\n\n"
        f"[Assistant Answer]\n{model_answer}"
    )
    return PromptBundle(system="You are a careful evaluation assistant.", user=user)


def extract_rating(text: str) -> int | None:
    match = _RATING_RE.search(text)
    if not match:
        return None
    rating = int(match.group(1))
    return rating if 1 <= rating <= 10 else None


def llm_judge_rating(
    question: str,
    model_answer: str,
    reference_answer: str,
    judge: LLMProvider,
) -> int | None:
    """Pointwise 1-10 judge rating; one re-ask on a missing or out-of-range
    rating, after which the item stays unrated rather than fabricated."""
    prompt = build_judge_prompt(question, model_answer, reference_answer)
    for attempt in range(2):
        reply = judge.chat(prompt.system, prompt.user, temperature=0.0)
        rating = extract_rating(reply)
        if rating is not None:
            return rating
        log.warning("judge reply without usable rating (attempt %d)", attempt + 1)
    return None


# ---------------------------------------------------------------------------
# Test-set evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricScores:
    bleu: float
    rouge1_f: float
    embedding_f1: float | None = None
    judge_rating: int | None = None

    def __post_init__(self):
        for name in ("bleu", "rouge1_f"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} out of [0, 1]: {value}")
        if self.embedding_f1 is not None and not 0.0 <= self.embedding_f1 <= 1.0 + 1e-9:
            raise ValidationError("embedding_f1 out of [0, 1]")
        if self.judge_rating is not None and not 1 <= self.judge_rating <= 10:
            raise ValidationError("judge_rating out of 1..10")


@dataclass(frozen=True)
class EvalRecord:
    qa_id: str
    locale_key: str
    question: str
    reference: str
    raw_response: str
    answer: str | None
    confidence: int | None
    parse_status: str
    scores: MetricScores | None
    error: str | None = None

    def to_record(self) -> dict:
        rec = {
            "qa_id": self.qa_id,
            "locale": self.locale_key,
            "question": self.question,
            "reference": self.reference,
            "raw_response": self.raw_response,
            "answer": self.answer,
            "confidence": self.confidence,
            "parse_status": self.parse_status,
            "error": self.error,
        }
        if self.scores is not None:
            rec.update(
                {
                    "bleu": self.scores.bleu,
                    "rouge1_f": self.scores.rouge1_f,
                    "embedding_f1": self.scores.embedding_f1,
                    "judge_rating": self.scores.judge_rating,
                }
            )
        return rec


@dataclass
class EvalConfig:
    model_name: str = "model"
    max_tokens: int = 1024
    use_judge: bool = False
    judge: LLMProvider | None = None
    # Optional token encoder with encode(locale, tokens) -> list of vectors;
    # None disables the embedding F1 column.
    encoder: object | None = None


def evaluate_testset(
    test: list[QAPair],
    model: LLMProvider,
    cfg: EvalConfig,
) -> tuple[list[EvalRecord], dict]:
    """Prompt the model on every test pair, score, and aggregate per locale.

    Per-item model failures are recorded and excluded from the means; the
    report carries the exclusion count so gaps are visible.
    """
    if not test:
        raise ValidationError("test set must be non-empty")
    records: list[EvalRecord] = []
    for pair in sorted(test, key=lambda p: p.id):
        reference = pair.effective_answer
        prompt = build_zero_shot_prompt(pair.question, pair.locale)
        try:
            raw = model.chat(
                prompt.system, prompt.user,
                temperature=prompt.temperature, max_tokens=cfg.max_tokens,
            )
        except Exception as exc:
            records.append(
                EvalRecord(
                    qa_id=pair.id, locale_key=pair.locale.key, question=pair.question,
                    reference=reference, raw_response="", answer=None, confidence=None,
                    parse_status="failed", scores=None, error=str(exc),
                )
            )
            continue
        response = parse_model_response(raw)
        answer = response.answer or ""
        emb = None
        if cfg.encoder is not None:
            from .metrics import embedding_f1 as _embedding_f1

            hyp_tokens = answer.split() or [""]
            ref_tokens = reference.split() or [""]
            emb = _embedding_f1(
                cfg.encoder.encode(pair.locale, hyp_tokens),
                cfg.encoder.encode(pair.locale, ref_tokens),
            )
        rating = None
        if cfg.use_judge and cfg.judge is not None:
            rating = llm_judge_rating(pair.question, answer, reference, cfg.judge)
        scores = MetricScores(
            bleu=bleu(answer, reference),
            rouge1_f=rouge1_f(answer, reference),
            embedding_f1=emb,
            judge_rating=rating,
        )
        records.append(
            EvalRecord(
                qa_id=pair.id, locale_key=pair.locale.key, question=pair.question,
                reference=reference, raw_response=raw, answer=response.answer,
                confidence=response.confidence, parse_status=response.parse_status,
                scores=scores,
            )
        )
    report = aggregate_records(records, model_name=cfg.model_name)
    return records, report


def aggregate_records(records: list[EvalRecord], model_name: str = "model") -> dict:
    """Per-locale metric means over scored records, plus exclusion counts."""
    per_locale: dict[str, dict] = {}
    for rec in records:
        cell = per_locale.setdefault(
            rec.locale_key,
            {"n": 0, "excluded": 0, "bleu": [], "rouge1_f": [], "embedding_f1": [], "judge": []},
        )
        if rec.scores is None:
            cell["excluded"] += 1
            continue
        cell["n"] += 1
        cell["bleu"].append(rec.scores.bleu)
        cell["rouge1_f"].append(rec.scores.rouge1_f)
        if rec.scores.embedding_f1 is not None:
            cell["embedding_f1"].append(rec.scores.embedding_f1)
        if rec.scores.judge_rating is not None:
            cell["judge"].append(rec.scores.judge_rating)

    def mean(values):
        return sum(values) / len(values) if values else None

    locales = {}
    for key, cell in sorted(per_locale.items()):
        locales[key] = {
            "n": cell["n"],
            "excluded": cell["excluded"],
            "bleu": mean(cell["bleu"]),
            "rouge1_f": mean(cell["rouge1_f"]),
            "embedding_f1": mean(cell["embedding_f1"]),
            "judge_rating": mean(cell["judge"]),
        }
    return {"model": model_name, "locales": locales}


def tier_summary(report: dict, locales: list[Locale]) -> dict:
    """Re-aggregate per-locale BLEU means by language-resource tier."""
    tier_of = {loc.key: loc.resource_tier for loc in locales}
    grouped: dict[str, list[float]] = {}
    for key, cell in report["locales"].items():
        tier = tier_of.get(key)
        if tier is None or cell["bleu"] is None:
            continue
        grouped.setdefault(tier, []).append(cell["bleu"])
    return {
        tier: sum(values) / len(values)
        for tier, values in sorted(grouped.items())
        if values
    }


def render_eval_table(report: dict) -> str:
    """Aligned text table: one block of metric columns per locale."""
    headers = ["locale", "n", "F1", "BLEU", "Rou.", "judge", "excluded"]
    rows = []
    for key, cell in report["locales"].items():
        rows.append(
            [
                key,
                str(cell["n"]),
                "-" if cell["embedding_f1"] is None else f"{cell['embedding_f1']:.3f}",
                "-" if cell["bleu"] is None else f"{cell['bleu']:.3f}",
                "-" if cell["rouge1_f"] is None else f"{cell['rouge1_f']:.3f}",
                "-" if cell["judge_rating"] is None else f"{cell['judge_rating']:.2f}",
                str(cell["excluded"]),
            ]
        )
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = [f"model: {report['model']}"]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Fine-tune record export
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstructionTemplate:
    id: str
    source_model: str
    text: str
    suffix_applied: bool = False

    def __post_init__(self):
        if not self.text:
            raise ValidationError("template text must be non-empty")
        if self.suffix_applied and not self.text.endswith(CONCISION_SUFFIX):
            raise ValidationError("suffix_applied requires the concision suffix at the end")

    def with_suffix(self) -> "InstructionTemplate":
        if self.suffix_applied:
            return self
        text = self.text.rstrip()
        if not text.endswith("."):
            text += "."
        return replace(self, text=f"{text} {CONCISION_SUFFIX}", suffix_applied=True)


def default_templates() -> list[InstructionTemplate]:
    spec = json.loads(
        resources.files("nativqa.data").joinpath("finetune_templates.json").read_text("utf-8")
    )
    return [
        InstructionTemplate(t["id"], t["source_model"], t["text"]) for t in spec["templates"]
    ]


def build_finetune_records(
    train: list[QAPair],
    templates: list[InstructionTemplate] | None = None,
    seed: int = 0,
) -> list[dict]:
    """Chat-style instruction records: seeded-random template + question + answer.

    Deterministic under a fixed seed; pairs are processed in id order and the
    template stream is replayable from the seed alone.
    """
    if not train:
        raise ValidationError("train set must be non-empty")
    templates = templates or default_templates()
    if not templates:
        raise ValidationError("need at least one instruction template")
    suffixed = [t.with_suffix() for t in templates]
    rng = random.Random(seed)
    records = []
    for pair in sorted(train, key=lambda p: p.id):
        template = suffixed[rng.randrange(len(suffixed))]
        system = FINETUNE_SYSTEM_TEMPLATE.replace("[lang]", language_name(pair.locale))
        records.append(
            {
                "qa_id": pair.id,
                "template_id": template.id,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": f"{template.text}\nQuestion: {pair.question}"},
                    {"role": "assistant", "content": pair.effective_answer},
                ],
            }
        )
    return records


def load_encoder_config() -> dict:
    spec = json.loads(
        resources.files("nativqa.data").joinpath("bertscore_encoders.json").read_text("utf-8")
    )
    return spec["encoders"]


def encoder_for_locale(locale: Locale, encoders: dict | None = None) -> str:
    encoders = encoders or load_encoder_config()
    return encoders.get(locale.key) or encoders.get(locale.language) or encoders["en"]


class HttpEncoder:
    """Client for an external embedding service: (language, tokens) -> vectors.

    The language-specific model name comes from the shipped encoder table;
    the service is expected to answer POST /embed with {"model", "language",
    "tokens"} and return {"vectors": [[...], ...]}.
    """

    def __init__(self, base_url: str, encoders: dict | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.encoders = encoders or load_encoder_config()
        self.timeout = timeout

    def encode(self, locale: Locale, tokens: list[str]) -> list[list[float]]:
        import requests

        resp = requests.post(
            f"{self.base_url}/embed",
            json={
                "model": encoder_for_locale(locale, self.encoders),
                "language": locale.language,
                "tokens": tokens,
            },
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["vectors"]


class HashEncoder:
    """Deterministic pseudo-embeddings so offline fixture runs can exercise
    the embedding F1 path; identical tokens always map to identical vectors."""

    def __init__(self, dim: int = 16):
        self.dim = dim

    def encode(self, locale: Locale, tokens: list[str]) -> list[list[float]]:
        import hashlib

        out = []
        for token in tokens:
            digest = hashlib.sha256(f"{locale.language}:{token}".encode("utf-8")).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            out.append([rng.uniform(-1.0, 1.0) for _ in range(self.dim)])
        return out
