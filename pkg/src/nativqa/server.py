"""Annotation service: task leasing, result persistence, aggregation triggers,
progress and agreement reporting, and export.

The store is single-writer with a write-ahead journal: every mutation is
appended to ``journal.jsonl`` before it touches memory, so a restart replays
to exactly the pre-crash state. A periodic snapshot keeps replay short.
Leasing and submission are linearizable per task via one store lock.
"""

import json
import threading
import time
import uuid
from importlib import resources
from pathlib import Path

from .annotation import (
    AgreementReport,
    AnnotationResult,
    Resolution,
    edit_agreement_rate,
    fleiss_kappa,
    mean_edit_distance,
    resolve_pair,
)
from .corpus import Locale, ValidationError
from .domains import RELIABILITY_LABELS, DomainRecord, aggregate_label

TASK_KINDS = ("drc", "qaa", "subjective_eval")

DEFAULT_LEASE_SECONDS = 30 * 60
SNAPSHOT_EVERY = 500

GUIDELINE_DOCS = {
    "drc": "guideline_drc.md",
    "qaa": "guideline_qaa.md",
    "subjective_eval": "guideline_subjective.md",
}


class LeaseError(ValidationError):
    pass


def validate_result_payload(task_kind: str, payload: dict) -> dict:
    """Check a submitted result against the invariants of its task kind."""
    if task_kind == "qaa":
        AnnotationResult.from_record(payload)  # raises with the violated field
        return payload
    if task_kind == "drc":
        label = payload.get("label")
        if label not in RELIABILITY_LABELS:
            raise ValidationError(f"label must be one of {RELIABILITY_LABELS}, got {label!r}")
        return payload
    if task_kind == "subjective_eval":
        for name in ("accuracy", "usefulness"):
            value = payload.get(name)
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ValidationError(f"{name} must be an integer in 1..5, got {value!r}")
        return payload
    raise ValidationError(f"unknown task kind {task_kind!r}")


class AnnotationStore:
    """Projects, tasks, leases, and results with journaled persistence."""

    def __init__(self, root: str | Path, lease_seconds: int = DEFAULT_LEASE_SECONDS,
                 snapshot_every: int = SNAPSHOT_EVERY):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.lease_seconds = lease_seconds
        self.snapshot_every = snapshot_every
        self._lock = threading.RLock()
        self._events_since_snapshot = 0
        self.projects: dict[str, dict] = {}
        self.tasks: dict[str, dict] = {}
        self.leases: dict[str, dict] = {}
        self._load()

    # -- persistence --------------------------------------------------------

    @property
    def journal_path(self) -> Path:
        return self.root / "journal.jsonl"

    @property
    def snapshot_path(self) -> Path:
        return self.root / "snapshot.json"

    def _load(self):
        if self.snapshot_path.exists():
            state = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            self.projects = state["projects"]
            self.tasks = state["tasks"]
            self.leases = state["leases"]
        if self.journal_path.exists():
            with self.journal_path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._apply(json.loads(line))

    def _journal(self, event: dict):
        with self.journal_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False))
            fh.write("\n")
            fh.flush()
        self._apply(event)
        self._events_since_snapshot += 1
        if self._events_since_snapshot >= self.snapshot_every:
            self.snapshot()

    def snapshot(self):
        with self._lock:
            state = {"projects": self.projects, "tasks": self.tasks, "leases": self.leases}
            tmp = self.snapshot_path.with_suffix(".tmp")
            tmp.write_text(json.dumps(state, ensure_ascii=False), encoding="utf-8")
            tmp.replace(self.snapshot_path)
            self.journal_path.write_text("", encoding="utf-8")
            self._events_since_snapshot = 0

    # -- event application (the only state mutations) ------------------------

    def _apply(self, event: dict):
        kind = event["event"]
        if kind == "create_project":
            self.projects[event["project_id"]] = {
                "project_id": event["project_id"],
                "locale": event["locale"],
                "task_kind": event["task_kind"],
                "required_annotators": event["required_annotators"],
                "annotators": event.get("annotators", []),
                "guideline_version": event.get("guideline_version", "v1"),
            }
        elif kind == "register_annotator":
            annotators = self.projects[event["project_id"]]["annotators"]
            if event["annotator_id"] not in annotators:
                annotators.append(event["annotator_id"])
        elif kind == "add_task":
            self.tasks[event["task_id"]] = {
                "task_id": event["task_id"],
                "project_id": event["project_id"],
                "payload": event["payload"],
                "results": [],
                "status": "open",
                "escalated": False,
                "resolution": None,
            }
        elif kind == "lease":
            self.leases[event["lease_id"]] = {
                "lease_id": event["lease_id"],
                "task_id": event["task_id"],
                "annotator_id": event["annotator_id"],
                "expires_at": event["expires_at"],
            }
        elif kind == "release_lease":
            self.leases.pop(event["lease_id"], None)
        elif kind == "submit":
            task = self.tasks[event["task_id"]]
            task["results"].append(
                {"annotator_id": event["annotator_id"], "result": event["result"]}
            )
            self.leases.pop(event["lease_id"], None)
            self._aggregate(task)
        elif kind == "adjudicate":
            task = self.tasks[event["task_id"]]
            task["status"] = "resolved"
            task["resolution"] = event["resolution"]
        else:
            raise ValueError(f"unknown journal event {kind!r}")

    def _aggregate(self, task: dict):
        project = self.projects[task["project_id"]]
        required = project["required_annotators"]
        kind = project["task_kind"]
        results = task["results"]
        if kind == "drc":
            if len(results) < required:
                return
            rec = DomainRecord(domain=task["payload"]["domain"])
            for entry in results:
                rec = rec.with_judgment(entry["annotator_id"], entry["result"]["label"])
            rec = aggregate_label(rec)
            if rec.final_label is None:
                task["status"] = "needs_adjudication"
            else:
                task["status"] = "resolved"
                task["resolution"] = {"final_label": rec.final_label, "by": rec.resolution}
            return
        if kind == "subjective_eval":
            if len(results) >= required:
                task["status"] = "resolved"
                task["resolution"] = {
                    "accuracy": sum(r["result"]["accuracy"] for r in results) / len(results),
                    "usefulness": sum(r["result"]["usefulness"] for r in results) / len(results),
                }
            return
        # qaa
        if required == 1:
            if results:
                task["status"] = "resolved"
                task["resolution"] = {"result": results[0]["result"], "by": "single"}
            return
        if len(results) < 2:
            return
        parsed = [AnnotationResult.from_record(r["result"]) for r in results]
        resolution: Resolution = resolve_pair(parsed)
        if resolution.outcome == "escalate":
            task["escalated"] = True
        elif resolution.outcome == "resolved":
            task["status"] = "resolved"
            task["resolution"] = {
                "result": resolution.result.to_record(),
                "by": "agreement" if len(parsed) == 2 else "majority",
            }
        else:
            task["status"] = "dropped"
            task["resolution"] = {"by": "no_majority"}

    # -- public API ----------------------------------------------------------

    def create_project(self, project_id: str, locale: Locale, task_kind: str,
                       required_annotators: int, annotators: list[str] | None = None,
                       guideline_version: str = "v1"):
        if task_kind not in TASK_KINDS:
            raise ValidationError(f"task_kind must be one of {TASK_KINDS}")
        if required_annotators < 1:
            raise ValidationError("required_annotators must be >= 1")
        if task_kind == "drc" and required_annotators < 3:
            raise ValidationError("drc majority voting needs required_annotators >= 3")
        with self._lock:
            if project_id in self.projects:
                raise ValidationError(f"project {project_id} already exists")
            self._journal(
                {
                    "event": "create_project",
                    "project_id": project_id,
                    "locale": locale.to_record(),
                    "task_kind": task_kind,
                    "required_annotators": required_annotators,
                    "annotators": list(annotators or []),
                    "guideline_version": guideline_version,
                }
            )

    def register_annotator(self, project_id: str, annotator_id: str):
        with self._lock:
            self._require_project(project_id)
            self._journal(
                {"event": "register_annotator", "project_id": project_id,
                 "annotator_id": annotator_id}
            )

    def add_task(self, project_id: str, task_id: str, payload: dict):
        with self._lock:
            self._require_project(project_id)
            if task_id in self.tasks:
                raise ValidationError(f"task {task_id} already exists")
            self._journal(
                {"event": "add_task", "project_id": project_id, "task_id": task_id,
                 "payload": payload}
            )

    def _require_project(self, project_id: str) -> dict:
        project = self.projects.get(project_id)
        if project is None:
            raise ValidationError(f"unknown project {project_id!r}")
        return project

    def _active_leases(self, now: float) -> list[dict]:
        live = []
        for lease in list(self.leases.values()):
            if lease["expires_at"] <= now:
                self.leases.pop(lease["lease_id"], None)  # expired: back to the pool
            else:
                live.append(lease)
        return live

    def _needed(self, task: dict) -> int:
        required = self.projects[task["project_id"]]["required_annotators"]
        return required + (1 if task["escalated"] else 0)

    def lease_next(self, project_id: str, annotator_id: str,
                   now: float | None = None) -> dict | None:
        """Lease an open task this annotator has not judged; None when exhausted."""
        now = time.time() if now is None else now
        with self._lock:
            project = self._require_project(project_id)
            if annotator_id not in project["annotators"]:
                raise ValidationError(
                    f"annotator {annotator_id!r} is not registered to {project_id}"
                )
            live = self._active_leases(now)
            leased_by_task: dict[str, list[str]] = {}
            for lease in live:
                leased_by_task.setdefault(lease["task_id"], []).append(lease["annotator_id"])
            for task_id in sorted(self.tasks):
                task = self.tasks[task_id]
                if task["project_id"] != project_id or task["status"] != "open":
                    continue
                holders = leased_by_task.get(task_id, [])
                if annotator_id in holders:
                    continue
                if any(r["annotator_id"] == annotator_id for r in task["results"]):
                    continue
                if len(task["results"]) + len(holders) >= self._needed(task):
                    continue
                lease = {
                    "event": "lease",
                    "lease_id": uuid.uuid4().hex,
                    "task_id": task_id,
                    "annotator_id": annotator_id,
                    "expires_at": now + self.lease_seconds,
                }
                self._journal(lease)
                stored = dict(self.leases[lease["lease_id"]])
                stored["task_kind"] = project["task_kind"]
                stored["payload"] = task["payload"]
                stored["guideline_version"] = project["guideline_version"]
                return stored
            return None

    def submit_result(self, task_id: str, lease_id: str, annotator_id: str,
                      result: dict, now: float | None = None) -> dict:
        """Validate and persist one result; aggregation fires at the required count."""
        now = time.time() if now is None else now
        with self._lock:
            task = self.tasks.get(task_id)
            if task is None:
                raise ValidationError(f"unknown task {task_id!r}")
            lease = self.leases.get(lease_id)
            if lease is None or lease["expires_at"] <= now:
                self.leases.pop(lease_id, None)
                raise LeaseError("lease expired or unknown; task returned to the pool")
            if lease["task_id"] != task_id or lease["annotator_id"] != annotator_id:
                raise LeaseError("lease does not match task and annotator")
            if any(r["annotator_id"] == annotator_id for r in task["results"]):
                raise ValidationError(f"annotator {annotator_id} already judged task {task_id}")
            project = self.projects[task["project_id"]]
            validate_result_payload(project["task_kind"], result)
            self._journal(
                {
                    "event": "submit",
                    "task_id": task_id,
                    "lease_id": lease_id,
                    "annotator_id": annotator_id,
                    "result": result,
                }
            )
            return {
                "status": "ok",
                "task_status": task["status"],
                "results": len(task["results"]),
            }

    def adjudicate_task(self, task_id: str, resolution: dict):
        with self._lock:
            if task_id not in self.tasks:
                raise ValidationError(f"unknown task {task_id!r}")
            self._journal({"event": "adjudicate", "task_id": task_id, "resolution": resolution})

    def progress(self, project_id: str) -> dict:
        with self._lock:
            self._require_project(project_id)
            tasks = [t for t in self.tasks.values() if t["project_id"] == project_id]
            return {
                "project_id": project_id,
                "tasks": len(tasks),
                "open": sum(1 for t in tasks if t["status"] == "open"),
                "resolved": sum(1 for t in tasks if t["status"] == "resolved"),
                "dropped": sum(1 for t in tasks if t["status"] == "dropped"),
                "needs_adjudication": sum(
                    1 for t in tasks if t["status"] == "needs_adjudication"
                ),
                "results": sum(len(t["results"]) for t in tasks),
            }

    def list_projects(self) -> list[dict]:
        with self._lock:
            out = []
            for project_id in sorted(self.projects):
                info = dict(self.projects[project_id])
                info.update(self.progress(project_id))
                out.append(info)
            return out

    def export(self, project_id: str) -> list[dict]:
        """All tasks with full judgment history, ordered by task id."""
        with self._lock:
            self._require_project(project_id)
            records = [
                {
                    "type": "manifest",
                    "project_id": project_id,
                    **{k: v for k, v in self.progress(project_id).items() if k != "project_id"},
                }
            ]
            for task_id in sorted(self.tasks):
                task = self.tasks[task_id]
                if task["project_id"] == project_id:
                    records.append(
                        {
                            "type": "task",
                            "task_id": task_id,
                            "status": task["status"],
                            "payload": task["payload"],
                            "results": task["results"],
                            "resolution": task["resolution"],
                        }
                    )
            return records

    def agreement(self, project_id: str) -> AgreementReport:
        """Agreement statistics over this project's multiply-judged tasks."""
        with self._lock:
            project = self._require_project(project_id)
            tasks = [t for t in self.tasks.values() if t["project_id"] == project_id]
            kind = project["task_kind"]
            if kind == "drc":
                labels = list(RELIABILITY_LABELS)
                rows = []
                n = project["required_annotators"]
                for task in tasks:
                    if len(task["results"]) == n:
                        row = [0] * len(labels)
                        for entry in task["results"]:
                            row[labels.index(entry["result"]["label"])] += 1
                        rows.append(row)
                kappa = None
                if rows:
                    try:
                        kappa = fleiss_kappa(rows, n)
                    except ValidationError:
                        kappa = None
                return AgreementReport(task=project_id, n_items=len(rows), fleiss_kappa=kappa)
            if kind == "qaa":
                answer_pairs = []
                for task in tasks:
                    if len(task["results"]) < 2:
                        continue
                    first, second = task["results"][0], task["results"][1]
                    answer_pairs.append(
                        (
                            _effective_answer(first["result"], task["payload"]),
                            _effective_answer(second["result"], task["payload"]),
                        )
                    )
                if not answer_pairs:
                    return AgreementReport(task=project_id, n_items=0)
                return AgreementReport(
                    task=project_id,
                    n_items=len(answer_pairs),
                    exact_match_rate=edit_agreement_rate(answer_pairs),
                    mean_norm_levenshtein=mean_edit_distance(answer_pairs),
                )
            return AgreementReport(task=project_id, n_items=len(tasks))


def _effective_answer(result: dict, payload: dict) -> str:
    edited = result.get("edited_answer")
    if edited is not None:
        return edited
    return payload.get("answer", "")


def load_guideline(task_kind: str) -> str:
    doc = GUIDELINE_DOCS.get(task_kind)
    if doc is None:
        raise ValidationError(f"no guideline for task kind {task_kind!r}")
    return resources.files("nativqa.data.guidelines").joinpath(doc).read_text("utf-8")


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def parse_token_env(raw: str) -> dict[str, str]:
    """Parse "annotator=token,annotator2=token2" into token -> annotator."""
    tokens = {}
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        annotator, _, token = chunk.partition("=")
        if not annotator or not token:
            raise ValidationError(f"bad token entry {chunk!r}; expected annotator=token")
        tokens[token] = annotator
    return tokens


def create_app(store: AnnotationStore, tokens: dict[str, str] | None = None):
    """Build the FastAPI app; ``tokens`` maps bearer tokens to annotator ids.

    With no token map configured the server runs open (local development);
    with one, lease and submit calls must authenticate as the annotator they
    act for.
    """
    from fastapi import FastAPI, Header, HTTPException
    from fastapi.responses import PlainTextResponse
    from pydantic import BaseModel

    app = FastAPI(title="nativqa annotation server")

    class LeaseRequest(BaseModel):
        annotator_id: str

    class ResultRequest(BaseModel):
        lease_id: str
        annotator_id: str
        result: dict

    def authenticate(authorization: str | None, annotator_id: str | None = None):
        if tokens is None:
            return
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="bearer token required")
        identity = tokens.get(authorization.removeprefix("Bearer "))
        if identity is None:
            raise HTTPException(status_code=401, detail="unknown token")
        if annotator_id is not None and identity != annotator_id:
            raise HTTPException(
                status_code=403, detail=f"token does not belong to {annotator_id!r}"
            )

    @app.get("/projects")
    def list_projects(authorization: str | None = Header(default=None)):
        authenticate(authorization)
        return {"projects": store.list_projects()}

    @app.post("/projects/{project_id}/lease")
    def lease(project_id: str, body: LeaseRequest,
              authorization: str | None = Header(default=None)):
        authenticate(authorization, body.annotator_id)
        try:
            lease = store.lease_next(project_id, body.annotator_id)
        except ValidationError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"lease": lease}

    @app.post("/tasks/{task_id}/result")
    def submit(task_id: str, body: ResultRequest,
               authorization: str | None = Header(default=None)):
        authenticate(authorization, body.annotator_id)
        try:
            ack = store.submit_result(task_id, body.lease_id, body.annotator_id, body.result)
        except LeaseError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return ack

    @app.get("/projects/{project_id}/agreement")
    def agreement(project_id: str, authorization: str | None = Header(default=None)):
        authenticate(authorization)
        try:
            return store.agreement(project_id).to_record()
        except ValidationError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/projects/{project_id}/export")
    def export(project_id: str, authorization: str | None = Header(default=None)):
        authenticate(authorization)
        try:
            records = store.export(project_id)
        except ValidationError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        body = "\n".join(json.dumps(rec, ensure_ascii=False) for rec in records)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    @app.get("/guidelines/{task_kind}", response_class=PlainTextResponse)
    def guidelines(task_kind: str, authorization: str | None = Header(default=None)):
        authenticate(authorization)
        try:
            return load_guideline(task_kind)
        except ValidationError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    return app
