import json
import random
from pathlib import Path

import pytest

from nativqa.corpus import Locale, ValidationError
from nativqa.evaluation import (
    CONCISION_SUFFIX,
    JUDGE_INSTRUCTION,
    EvalConfig,
    InstructionTemplate,
    ModelResponse,
    aggregate_records,
    build_finetune_records,
    build_judge_prompt,
    build_zero_shot_prompt,
    default_templates,
    encoder_for_locale,
    evaluate_testset,
    extract_rating,
    language_name,
    llm_judge_rating,
    parse_model_response,
    render_eval_table,
    serialize_model_response,
    tier_summary,
)
from nativqa.providers import FixtureChatProvider

from helpers import build_pair

FIXTURES = Path(__file__).parent / "fixtures"


class TestZeroShotPrompt:
    def test_question_and_language_substituted(self, doha_en):
        bundle = build_zero_shot_prompt("Does Qatar have beaches?", doha_en)
        assert "Does Qatar have beaches?" in bundle.user
        assert bundle.user.count("English") == 2
        assert "English" in bundle.system
        assert bundle.temperature == 0.0

    def test_bangla_name(self):
        dhaka = Locale("bn", "Dhaka", "low")
        bundle = build_zero_shot_prompt("Question?", dhaka)
        assert "Bangla" in bundle.system
        assert bundle.user.count("Bangla") == 2

    def test_golden_transcript(self, doha_en):
        golden = json.loads((FIXTURES / "zero_shot_prompt_en.json").read_text("utf-8"))
        bundle = build_zero_shot_prompt(golden["question"], doha_en)
        assert bundle.system == golden["system"]
        assert bundle.user == golden["user"]

    def test_unknown_language_code(self):
        locale = Locale("xx", "Nowhere", "low")
        with pytest.raises(ValidationError):
            build_zero_shot_prompt("Q?", locale)

    def test_empty_question(self, doha_en):
        with pytest.raises(ValidationError):
            build_zero_shot_prompt("", doha_en)

    def test_language_names_cover_the_corpus_languages(self):
        for code, expected in [
            ("ar", "Arabic"), ("as", "Assamese"), ("bn", "Bangla"), ("en", "English"),
            ("hi", "Hindi"), ("ne", "Nepali"), ("tr", "Turkish"),
        ]:
            assert language_name(Locale(code, "City")) == expected


class TestParseModelResponse:
    def test_clean_payload(self):
        out = parse_model_response('{"answer":"Doha","score":9}')
        assert out.answer == "Doha"
        assert out.confidence == 9
        assert out.parse_status == "ok"

    def test_fenced_payload_repaired(self):
        out = parse_model_response('```json\n{"answer":"Doha","score":9}\n```')
        assert out.answer == "Doha"
        assert out.confidence == 9
        assert out.parse_status == "repaired"

    def test_failure_keeps_raw_text(self):
        out = parse_model_response("The answer is Doha.")
        assert out.parse_status == "failed"
        assert out.answer == "The answer is Doha."

    def test_empty_string(self):
        out = parse_model_response("")
        assert out.parse_status == "failed"
        assert out.answer == ""

    def test_mutation_corpus_matches_oracle_file(self):
        # 200 mutated payloads with outcomes fixed by the mutation plan.
        cases = [
            json.loads(line)
            for line in (FIXTURES / "parse_mutations.jsonl").read_text("utf-8").splitlines()
            if line
        ]
        assert len(cases) == 200
        for case in cases:
            out = parse_model_response(case["raw"])
            assert out.parse_status == case["expected_status"], case["class"]
            assert out.answer == case["expected_answer"], case["class"]
            assert out.confidence == case["expected_confidence"], case["class"]

    def test_own_serialization_always_parses_ok(self):
        rng = random.Random(3)
        for _ in range(50):
            answer = "".join(rng.choices('abc{}"\\ \n', k=rng.randint(0, 30)))
            raw = serialize_model_response(answer, rng.randint(1, 10))
            out = parse_model_response(raw)
            assert out.parse_status == "ok"
            assert out.answer == answer

    def test_ok_requires_answer(self):
        with pytest.raises(ValidationError):
            ModelResponse(raw="x", answer=None, parse_status="ok")


class TestJudge:
    def test_extraction(self):
        assert extract_rating("solid answer. Rating: [[7]]") == 7
        assert extract_rating("[[11]]") is None
        assert extract_rating("no rating here") is None

    def test_prompt_carries_instruction_and_triple(self):
        bundle = build_judge_prompt("Q?", "model answer", "reference answer")
        assert JUDGE_INSTRUCTION in bundle.user
        assert "Q?" in bundle.user
        assert "model answer" in bundle.user
        assert "reference answer" in bundle.user
        assert "Rating: [[" in bundle.user

    def test_simple_rating(self):
        judge = FixtureChatProvider(default="Good answer. Rating: [[7]]")
        assert llm_judge_rating("Q?", "a", "ref", judge) == 7

    def test_out_of_range_triggers_reask_then_unrated(self):
        judge = FixtureChatProvider(
            rules=[{"contains": "[Question]", "responses": ["Rating: [[11]]", "Rating: [[12]]"]}]
        )
        assert llm_judge_rating("Q?", "a", "ref", judge) is None
        assert len(judge.calls) == 2

    def test_reask_recovers(self):
        judge = FixtureChatProvider(
            rules=[{"contains": "[Question]", "responses": ["no rating", "Rating: [[4]]"]}]
        )
        assert llm_judge_rating("Q?", "a", "ref", judge) == 4

    def test_twenty_case_fixture_mean(self, doha_en):
        # 20 triples: 18 rated directly, one recovered by re-ask, one unrated.
        ratings = [7, 3, 9, 5, 6, 8, 2, 10, 4, 7, 5, 6, 9, 3, 8, 7, 4, 6]
        rules = []
        for i, rating in enumerate(ratings):
            rules.append({"contains": f"question {i:02d}", "response": f"Rating: [[{rating}]]"})
        rules.append({"contains": "question 18", "responses": ["[[99]]", "Rating: [[5]]"]})
        rules.append({"contains": "question 19", "responses": ["nope", "still nope"]})
        judge = FixtureChatProvider(rules=rules)
        got = [
            llm_judge_rating(f"question {i:02d}", "answer", "reference", judge)
            for i in range(20)
        ]
        assert got[:18] == ratings
        assert got[18] == 5
        assert got[19] is None
        rated = [r for r in got if r is not None]
        assert sum(rated) / len(rated) == pytest.approx(
            (sum(ratings) + 5) / 19
        )


def make_test_pairs(n, locale=None, start=0):
    return [
        build_pair(
            f"test question {start + i:03d}?",
            answer=f"reference answer {start + i} with several words",
            url=f"https://example.com/{start + i}",
            locale=locale,
            status="accepted",
        )
        for i in range(n)
    ]


class EchoProvider:
    """Returns each pair's reference verbatim in the contract format."""

    name = "echo"

    def __init__(self, pairs):
        self.by_question = {p.question: p.effective_answer for p in pairs}

    def chat(self, system, user, temperature=0.0, max_tokens=None):
        for question, answer in self.by_question.items():
            if question in user:
                return serialize_model_response(answer, 10)
        raise AssertionError("question not found in prompt")


class TestEvaluateTestset:
    def test_echo_model_scores_one(self, doha_en):
        pairs = make_test_pairs(10)
        records, report = evaluate_testset(pairs, EchoProvider(pairs), EvalConfig("echo"))
        cell = report["locales"]["en-Doha"]
        assert cell["bleu"] == pytest.approx(1.0)
        assert cell["rouge1_f"] == pytest.approx(1.0)
        assert cell["excluded"] == 0

    def test_empty_model_scores_zero(self):
        pairs = make_test_pairs(5)
        model = FixtureChatProvider(default=serialize_model_response(""))
        records, report = evaluate_testset(pairs, model, EvalConfig("empty"))
        assert report["locales"]["en-Doha"]["bleu"] == 0.0

    def test_model_failures_excluded_with_count(self):
        pairs = make_test_pairs(4)

        class FlakyProvider:
            name = "flaky"
            calls = 0

            def chat(self, system, user, temperature=0.0, max_tokens=None):
                FlakyProvider.calls += 1
                if FlakyProvider.calls == 2:
                    raise RuntimeError("provider down")
                return serialize_model_response("some answer")

        records, report = evaluate_testset(pairs, FlakyProvider(), EvalConfig("flaky"))
        cell = report["locales"]["en-Doha"]
        assert cell["excluded"] == 1
        assert cell["n"] == 3
        assert sum(1 for r in records if r.error) == 1

    def test_fifty_item_fixture_aggregates_match_reaggregation(self, doha_en):
        # Oracle: spreadsheet-style recomputation from the emitted records.
        dhaka = Locale("bn", "Dhaka", "low")
        pairs = make_test_pairs(30) + make_test_pairs(20, locale=dhaka, start=500)
        rng = random.Random(77)
        rules = []
        for pair in pairs:
            roll = rng.random()
            if roll < 0.3:
                response = serialize_model_response(pair.effective_answer, 9)
            elif roll < 0.6:
                response = serialize_model_response(
                    " ".join(pair.effective_answer.split()[:3]), 5
                )
            elif roll < 0.8:
                response = f"```json\n{serialize_model_response('unrelated words entirely')}\n```"
            else:
                response = "no json at all"
            rules.append({"contains": pair.question, "response": response})
        model = FixtureChatProvider(rules=rules)
        records, report = evaluate_testset(pairs, model, EvalConfig("fixture-model"))
        assert len(records) == 50
        for locale_key in ("en-Doha", "bn-Dhaka"):
            rows = [r for r in records if r.locale_key == locale_key and r.scores]
            expected_bleu = sum(r.scores.bleu for r in rows) / len(rows)
            expected_rouge = sum(r.scores.rouge1_f for r in rows) / len(rows)
            cell = report["locales"][locale_key]
            assert cell["bleu"] == pytest.approx(expected_bleu, abs=1e-12)
            assert cell["rouge1_f"] == pytest.approx(expected_rouge, abs=1e-12)
        # Per-item dump is sufficient to rebuild the table.
        rebuilt = aggregate_records(records, model_name="fixture-model")
        assert rebuilt == {k: report[k] for k in ("model", "locales")}

    def test_report_renders_language_blocks(self):
        pairs = make_test_pairs(6)
        records, report = evaluate_testset(pairs, EchoProvider(pairs), EvalConfig("echo"))
        table = render_eval_table(report)
        assert "en-Doha" in table
        assert "BLEU" in table and "Rou." in table

    def test_tier_grouping_is_pure_reaggregation(self, doha_en):
        dhaka = Locale("bn", "Dhaka", "low")
        pairs = make_test_pairs(8) + make_test_pairs(8, locale=dhaka, start=300)
        records, report = evaluate_testset(pairs, EchoProvider(pairs), EvalConfig("echo"))
        tiers = tier_summary(report, [doha_en, dhaka])
        assert tiers["high"] == pytest.approx(report["locales"]["en-Doha"]["bleu"])
        assert tiers["low"] == pytest.approx(report["locales"]["bn-Dhaka"]["bleu"])

    def test_empty_testset_rejected(self):
        with pytest.raises(ValidationError):
            evaluate_testset([], FixtureChatProvider(default="x"), EvalConfig())

    def test_judge_ratings_flow_into_report(self):
        pairs = make_test_pairs(3)
        judge = FixtureChatProvider(default="Fine. Rating: [[6]]")
        cfg = EvalConfig("echo", use_judge=True, judge=judge)
        records, report = evaluate_testset(pairs, EchoProvider(pairs), cfg)
        assert report["locales"]["en-Doha"]["judge_rating"] == pytest.approx(6.0)


class TestFinetuneRecords:
    def test_single_template_used_everywhere(self):
        pairs = make_test_pairs(3)
        template = InstructionTemplate("t1", "gpt-4o", "Answer the question.")
        records = build_finetune_records(pairs, [template], seed=1)
        assert len(records) == 3
        assert all(r["template_id"] == "t1" for r in records)

    def test_deterministic_under_seed(self):
        pairs = make_test_pairs(40)
        a = build_finetune_records(pairs, seed=9)
        b = build_finetune_records(pairs, seed=9)
        assert a == b
        c = build_finetune_records(pairs, seed=10)
        assert a != c

    def test_template_histogram_matches_rng_replay(self):
        # Oracle: independent replay of the seeded RNG stream.
        pairs = make_test_pairs(1000)
        templates = default_templates()
        records = build_finetune_records(pairs, templates, seed=123)
        rng = random.Random(123)
        expected_ids = [
            templates[rng.randrange(len(templates))].id
            for _ in sorted(pairs, key=lambda p: p.id)
        ]
        assert [r["template_id"] for r in records] == expected_ids

    def test_concision_suffix_applied(self):
        pairs = make_test_pairs(1)
        records = build_finetune_records(pairs, seed=0)
        user = records[0]["messages"][1]["content"]
        assert CONCISION_SUFFIX in user
        assert "Question: " in user

    def test_chat_shape_and_answer(self):
        pairs = make_test_pairs(1)
        record = build_finetune_records(pairs, seed=0)[0]
        roles = [m["role"] for m in record["messages"]]
        assert roles == ["system", "user", "assistant"]
        assert record["messages"][2]["content"] == pairs[0].effective_answer

    def test_empty_train_rejected(self):
        with pytest.raises(ValidationError):
            build_finetune_records([], seed=0)

    def test_default_templates_ten_per_source_model(self):
        templates = default_templates()
        assert len(templates) == 20
        by_model = {}
        for t in templates:
            by_model.setdefault(t.source_model, []).append(t)
        assert all(len(v) == 10 for v in by_model.values())

    def test_suffix_invariant(self):
        template = InstructionTemplate("t", "gpt-4o", "Do it.")
        with_suffix = template.with_suffix()
        assert with_suffix.suffix_applied
        assert with_suffix.text.endswith(CONCISION_SUFFIX)
        with pytest.raises(ValidationError):
            InstructionTemplate("t", "gpt-4o", "no suffix", suffix_applied=True)


def test_encoder_config_mapping():
    assert encoder_for_locale(Locale("ar", "Doha")) == "aubmindlab/bert-base-arabertv2"
    assert encoder_for_locale(Locale("bn", "Dhaka")) == "csebuetnlp/banglabert"
    assert encoder_for_locale(Locale("bn", "Kolkata")) == "sagorsarker/bangla-bert-base"
    assert encoder_for_locale(Locale("ne", "Kathmandu")) == "bert-base-multilingual-uncased"


class TestEncoders:
    def test_hash_encoder_is_deterministic_and_exercises_embedding_path(self, doha_en):
        from nativqa.evaluation import HashEncoder

        encoder = HashEncoder(dim=8)
        once = encoder.encode(doha_en, ["hot", "day"])
        again = encoder.encode(doha_en, ["hot", "day"])
        assert once == again
        assert len(once) == 2 and len(once[0]) == 8
        pairs = make_test_pairs(4)
        cfg = EvalConfig("echo", encoder=encoder)
        records, report = evaluate_testset(pairs, EchoProvider(pairs), cfg)
        assert report["locales"]["en-Doha"]["embedding_f1"] == pytest.approx(1.0, abs=1e-9)

    def test_http_encoder_posts_language_model_and_tokens(self, doha_en, monkeypatch):
        from nativqa.evaluation import HttpEncoder

        seen = {}

        class FakeResponse:
            def raise_for_status(self):
                pass

            def json(self):
                return {"vectors": [[0.1, 0.2]] * len(seen["json"]["tokens"])}

        def fake_post(url, json=None, timeout=None):
            seen["url"] = url
            seen["json"] = json
            return FakeResponse()

        import requests

        monkeypatch.setattr(requests, "post", fake_post)
        encoder = HttpEncoder("https://embed.test")
        vectors = encoder.encode(doha_en, ["a", "b", "c"])
        assert seen["url"] == "https://embed.test/embed"
        assert seen["json"]["model"] == "bert-base-uncased"
        assert seen["json"]["language"] == "en"
        assert len(vectors) == 3
