"""Scripted annotators: deterministic policies that drain annotation projects
through the HTTP API, for fixture pipelines and end-to-end tests.

A script maps task content to judgments: domains to reliability labels and
questions to four-step results, with optional per-annotator overrides so
disagreements (and the resulting escalations) can be planted deliberately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ValidationError


@dataclass
class AnnotatorScript:
    drc: dict = field(default_factory=dict)  # domain -> label
    qaa: dict = field(default_factory=dict)  # question -> result fields
    drc_default: str = "very_reliable"
    qaa_default: dict = field(
        default_factory=lambda: {"validity": "good", "relevance": "yes", "category": "correct"}
    )
    subjective_default: dict = field(default_factory=lambda: {"accuracy": 4, "usefulness": 4})
    overrides: dict = field(default_factory=dict)  # annotator -> {"drc": {...}, "qaa": {...}}

    @classmethod
    def from_file(cls, path: str | Path) -> "AnnotatorScript":
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            drc=spec.get("drc", {}),
            qaa=spec.get("qaa", {}),
            drc_default=spec.get("drc_default", "very_reliable"),
            qaa_default=spec.get(
                "qaa_default", {"validity": "good", "relevance": "yes", "category": "correct"}
            ),
            subjective_default=spec.get("subjective_default", {"accuracy": 4, "usefulness": 4}),
            overrides=spec.get("overrides", {}),
        )

    def _lookup(self, annotator_id: str, kind: str, key: str):
        personal = self.overrides.get(annotator_id, {}).get(kind, {})
        if key in personal:
            return personal[key]
        return {"drc": self.drc, "qaa": self.qaa}[kind].get(key)

    def decide(self, annotator_id: str, task_kind: str, payload: dict) -> dict:
        """The result this annotator submits for the given task payload."""
        if task_kind == "drc":
            label = self._lookup(annotator_id, "drc", payload["domain"]) or self.drc_default
            return {"label": label}
        if task_kind == "subjective_eval":
            return dict(self.subjective_default)
        if task_kind != "qaa":
            raise ValidationError(f"unknown task kind {task_kind!r}")
        fields = self._lookup(annotator_id, "qaa", payload["question"]) or dict(self.qaa_default)
        result = {
            "qa_id": payload["id"],
            "annotator_id": annotator_id,
            "validity": fields.get("validity", "good"),
            "relevance": None,
            "category": None,
            "edited_answer": None,
            "elapsed": 0.0,
        }
        if result["validity"] == "good":
            result["relevance"] = fields.get("relevance", "yes")
            result["category"] = fields.get("category", "correct")
            if result["category"] in ("partially_correct", "incorrect"):
                result["edited_answer"] = fields.get(
                    "edited_answer", f"{payload.get('answer', '')} (revised)"
                )
        return result


def drain_projects(
    client,
    annotator_ids: list[str],
    script: AnnotatorScript,
    headers_for=None,
    max_rounds: int = 50,
) -> int:
    """Drive annotators round-robin over every project until nothing leases.

    ``client`` is any object with requests-style ``get``/``post`` returning
    responses with ``status_code`` and ``json()`` (the in-process test client
    and a live-server session both qualify). Returns submissions made.
    """
    headers_for = headers_for or (lambda annotator_id: {})
    listing = client.get("/projects", headers=headers_for(annotator_ids[0]))
    listing.raise_for_status()
    project_ids = [p["project_id"] for p in listing.json()["projects"]]
    submitted = 0
    for _ in range(max_rounds):
        idle = True
        for project_id in project_ids:
            for annotator_id in annotator_ids:
                while True:
                    resp = client.post(
                        f"/projects/{project_id}/lease",
                        json={"annotator_id": annotator_id},
                        headers=headers_for(annotator_id),
                    )
                    if resp.status_code == 404:
                        break  # not registered to this project
                    resp.raise_for_status()
                    lease = resp.json()["lease"]
                    if lease is None:
                        break
                    result = script.decide(annotator_id, lease["task_kind"], lease["payload"])
                    ack = client.post(
                        f"/tasks/{lease['task_id']}/result",
                        json={
                            "lease_id": lease["lease_id"],
                            "annotator_id": annotator_id,
                            "result": result,
                        },
                        headers=headers_for(annotator_id),
                    )
                    ack.raise_for_status()
                    submitted += 1
                    idle = False
        if idle:
            return submitted
    raise RuntimeError(f"drain did not converge within {max_rounds} rounds")
