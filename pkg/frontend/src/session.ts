import { ApiClient, ApiError, NetworkError } from "./api.js";
import {
  applyAction,
  canSubmit,
  newDraft,
  toResultPayload,
  type Draft,
  type FormAction,
} from "./draft.js";
import type { Lease } from "./types.js";

// localStorage-compatible subset, so tests can inject a map-backed stand-in.
export interface DraftStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

interface PersistedState {
  lease: Lease;
  draft: Draft;
}

export type SessionStatus =
  | { state: "idle" }
  | { state: "task"; lease: Lease; draft: Draft }
  | { state: "exhausted" }
  | { state: "error"; message: string; field?: string };

/** One annotator working through one project: lease, draft, submit, repeat.
 *
 * Drafts persist on every change, so a reload resumes mid-task; a rejected
 * (expired) lease drops the task and moves on; a network failure keeps the
 * draft for a later retry. */
export class TaskSession {
  private lease: Lease | null = null;
  private draft: Draft | null = null;
  private lastError: { message: string; field?: string } | null = null;
  private exhausted = false;

  constructor(
    private readonly api: ApiClient,
    private readonly projectId: string,
    private readonly annotatorId: string,
    private readonly storage: DraftStorage,
    private readonly now: () => number = Date.now,
  ) {}

  private get storageKey(): string {
    return `nativqa-draft:${this.projectId}:${this.annotatorId}`;
  }

  get status(): SessionStatus {
    if (this.lastError) return { state: "error", ...this.lastError };
    if (this.lease && this.draft) return { state: "task", lease: this.lease, draft: this.draft };
    if (this.exhausted) return { state: "exhausted" };
    return { state: "idle" };
  }

  get currentDraft(): Draft | null {
    return this.draft;
  }

  get currentLease(): Lease | null {
    return this.lease;
  }

  /** Restore a persisted draft if one exists, otherwise lease a fresh task. */
  async start(): Promise<SessionStatus> {
    const stored = this.storage.getItem(this.storageKey);
    if (stored) {
      try {
        const state = JSON.parse(stored) as PersistedState;
        if (state.lease.expires_at * 1000 > this.now()) {
          this.lease = state.lease;
          this.draft = state.draft;
          return this.status;
        }
      } catch {
        // unreadable persisted state: fall through to a fresh lease
      }
      this.storage.removeItem(this.storageKey);
    }
    return this.leaseNext();
  }

  async leaseNext(): Promise<SessionStatus> {
    this.lastError = null;
    const lease = await this.api.leaseNext(this.projectId, this.annotatorId);
    if (lease === null) {
      this.lease = null;
      this.draft = null;
      this.exhausted = true;
      this.storage.removeItem(this.storageKey);
      return this.status;
    }
    this.lease = lease;
    this.draft = newDraft(lease, this.now());
    this.exhausted = false;
    this.persist();
    return this.status;
  }

  apply(action: FormAction): Draft {
    if (!this.lease || !this.draft) throw new Error("no active task");
    const original = String(this.lease.payload["answer"] ?? "");
    this.draft = applyAction(this.draft, action, original);
    this.persist();
    return this.draft;
  }

  get submittable(): boolean {
    return this.draft !== null && canSubmit(this.draft);
  }

  /** Submit the current draft; on success auto-lease the next task. */
  async submit(): Promise<SessionStatus> {
    if (!this.lease || !this.draft) throw new Error("no active task");
    if (!canSubmit(this.draft)) throw new Error("draft is not submittable");
    const payload = toResultPayload(this.draft, this.lease, this.now());
    try {
      await this.api.submitResult(this.lease.task_id, {
        lease_id: this.lease.lease_id,
        annotator_id: this.annotatorId,
        result: payload,
      });
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // lease expired server-side: drop the task, surface it, move on
        this.storage.removeItem(this.storageKey);
        this.lease = null;
        this.draft = null;
        this.lastError = { message: `lease expired: ${err.detail}` };
        return this.status;
      }
      if (err instanceof ApiError) {
        // validation rejection: keep the draft, name the field
        this.lastError = { message: err.detail, field: fieldFromDetail(err.detail) };
        return this.status;
      }
      if (err instanceof NetworkError) {
        // draft stays persisted for retry()
        this.lastError = { message: `offline, draft retained: ${err.message}` };
        return this.status;
      }
      throw err;
    }
    this.storage.removeItem(this.storageKey);
    this.lease = null;
    this.draft = null;
    return this.leaseNext();
  }

  /** Retry after a network failure, reusing the retained draft. */
  async retry(): Promise<SessionStatus> {
    this.lastError = null;
    if (this.lease && this.draft) return this.submit();
    return this.leaseNext();
  }

  acknowledgeError(): void {
    this.lastError = null;
  }

  private persist(): void {
    if (this.lease && this.draft) {
      this.storage.setItem(
        this.storageKey,
        JSON.stringify({ lease: this.lease, draft: this.draft } satisfies PersistedState),
      );
    }
  }
}

const FIELD_NAMES = [
  "validity",
  "relevance",
  "category",
  "edited_answer",
  "label",
  "accuracy",
  "usefulness",
];

function fieldFromDetail(detail: string): string | undefined {
  return FIELD_NAMES.find((name) => detail.includes(name));
}
