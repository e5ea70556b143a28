import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
  applyAction,
  canSubmit,
  toResultPayload,
  type Draft,
  type FormAction,
} from "../src/draft.js";
import { TaskSession, type DraftStorage } from "../src/session.js";
import { BASE_URL } from "./liveServer.js";

class MemStorage implements DraftStorage {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
}

// Scripted behavior for the 20-task fixture project, keyed on task index.
interface ScriptEntry {
  validity: "good" | "bad";
  relevance?: "yes" | "no" | "maybe" | "unsure";
  category?: "correct" | "partially_correct" | "incorrect" | "cannot_find";
  edited?: string;
}

function scriptFor(index: number): ScriptEntry {
  switch (index % 5) {
    case 0:
      return { validity: "bad" };
    case 1:
      return {
        validity: "good",
        relevance: "yes",
        category: "partially_correct",
        edited: `edited answer ${index}`,
      };
    case 2:
      return { validity: "good", relevance: "maybe", category: "correct" };
    case 3:
      return { validity: "good", relevance: "yes", category: "cannot_find" };
    default:
      return { validity: "good", relevance: "no", category: "correct" };
  }
}

function actionsFor(entry: ScriptEntry): FormAction[] {
  if (entry.validity === "bad") return [{ field: "validity", value: "bad" }];
  const actions: FormAction[] = [
    { field: "validity", value: "good" },
    { field: "relevance", value: entry.relevance! },
    { field: "category", value: entry.category! },
  ];
  if (entry.edited !== undefined) {
    actions.push({ field: "editedAnswer", value: entry.edited });
  }
  return actions;
}

describe("scripted session against the live server", () => {
  it("drains the 20-task project; the store holds exactly the scripted results", async () => {
    const api = new ApiClient(BASE_URL);
    const session = new TaskSession(api, "qaa-fixture", "alice", new MemStorage());

    // Build the expected manifest while playing the session.
    const expected = new Map<string, ScriptEntry>();
    let status = await session.start();
    let submitted = 0;
    while (status.state === "task") {
      const lease = status.lease;
      const index = Number(String(lease.payload["id"]).slice(1));
      const entry = scriptFor(index);
      expected.set(String(lease.payload["id"]), entry);
      for (const action of actionsFor(entry)) session.apply(action);
      expect(session.submittable).toBe(true);
      status = await session.submit();
      submitted += 1;
      expect(submitted).toBeLessThanOrEqual(20);
    }
    expect(status.state).toBe("exhausted");
    expect(submitted).toBe(20);

    const records = await api.exportProject("qaa-fixture");
    const manifest = records[0]!;
    expect(manifest["type"]).toBe("manifest");
    expect(manifest["results"]).toBe(20);
    expect(manifest["resolved"]).toBe(20);
    const tasks = records.slice(1) as {
      payload: { id: string };
      results: { annotator_id: string; result: Record<string, unknown> }[];
    }[];
    expect(tasks).toHaveLength(20);
    for (const task of tasks) {
      expect(task.results).toHaveLength(1);
      const stored = task.results[0]!.result;
      const entry = expected.get(task.payload.id)!;
      expect(stored["validity"]).toBe(entry.validity);
      expect(stored["relevance"]).toBe(entry.relevance ?? null);
      expect(stored["category"]).toBe(entry.category ?? null);
      expect(stored["edited_answer"]).toBe(entry.edited ?? null);
      expect(stored["annotator_id"]).toBe("alice");
    }
  }, 30000);
});

// Same PRNG as the offline fuzz, different seed: here every client-submittable
// draft goes to the real validator, which must accept it.
function prng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("live fuzzing of submittable drafts", () => {
  it("the server accepts every payload the form state machine lets through", async () => {
    const api = new ApiClient(BASE_URL);
    const rand = prng(77);
    const projects = ["qaa-fuzz", "drc-fuzz", "subj-fuzz"];
    let accepted = 0;
    for (const projectId of projects) {
      for (;;) {
        const lease = await api.leaseNext(projectId, "fuzzer");
        if (lease === null) break;
        let draft: Draft = {
          kind: lease.task_kind === "qaa" ? "qaa" : lease.task_kind,
          startedAt: 0,
        } as Draft;
        // random walk over the form until the draft becomes submittable
        for (let i = 0; i < 40 && !canSubmit(draft); i += 1) {
          draft = applyAction(draft, randomLiveAction(lease.task_kind, rand), "orig answer");
        }
        if (!canSubmit(draft)) {
          // deterministic finish so each lease is consumed
          draft = finishDraft(draft);
        }
        const payload = toResultPayload(draft, lease, 1000);
        const ack = await api.submitResult(lease.task_id, {
          lease_id: lease.lease_id,
          annotator_id: "fuzzer",
          result: payload,
        });
        expect(ack.status).toBe("ok"); // no invariant rejection, ever
        accepted += 1;
      }
    }
    expect(accepted).toBe(140);
  }, 60000);
});

function randomLiveAction(kind: string, rand: () => number): FormAction {
  if (kind === "drc") {
    const labels = ["very_reliable", "partially_reliable", "not_sure", "completely_unreliable"];
    return { field: "label", value: labels[Math.floor(rand() * 4)]! as never };
  }
  if (kind === "subjective_eval") {
    const field = rand() < 0.5 ? "accuracy" : "usefulness";
    return { field, value: 1 + Math.floor(rand() * 5) } as FormAction;
  }
  const roll = rand();
  if (roll < 0.25) {
    return { field: "validity", value: rand() < 0.3 ? "bad" : "good" };
  }
  if (roll < 0.5) {
    const values = ["yes", "no", "maybe", "unsure"];
    return { field: "relevance", value: values[Math.floor(rand() * 4)]! as never };
  }
  if (roll < 0.75) {
    const values = ["correct", "partially_correct", "incorrect", "cannot_find"];
    return { field: "category", value: values[Math.floor(rand() * 4)]! as never };
  }
  const texts = ["", "  ", "a corrected answer", "final text"];
  return { field: "editedAnswer", value: texts[Math.floor(rand() * texts.length)]! };
}

function finishDraft(draft: Draft): Draft {
  if (draft.kind === "drc") {
    return applyAction(draft, { field: "label", value: "not_sure" });
  }
  if (draft.kind === "subjective_eval") {
    let done = applyAction(draft, { field: "accuracy", value: 3 });
    done = applyAction(done, { field: "usefulness", value: 3 });
    return done;
  }
  let done = applyAction(draft, { field: "validity", value: "good" }, "orig answer");
  done = applyAction(done, { field: "relevance", value: "unsure" }, "orig answer");
  done = applyAction(done, { field: "category", value: "correct" }, "orig answer");
  if (!canSubmit(done)) {
    done = applyAction(done, { field: "editedAnswer", value: "fallback edit" }, "orig answer");
  }
  return done;
}
