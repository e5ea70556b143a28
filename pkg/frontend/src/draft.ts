import {
  CATEGORY_VALUES,
  EDIT_REQUIRED,
  RELEVANCE_VALUES,
  RELIABILITY_LABELS,
  type AnswerCategory,
  type Lease,
  type Relevance,
  type ReliabilityLabel,
  type ResultPayload,
  type Validity,
  qaaResultSchema,
} from "./types.js";

// In-progress form state for one task. The state machine clears downstream
// fields whenever an upstream choice invalidates them, so a submittable draft
// can never violate the server's result invariants.

export interface QaaDraft {
  kind: "qaa";
  validity?: Validity;
  relevance?: Relevance;
  category?: AnswerCategory;
  editedAnswer?: string;
  startedAt: number;
}

export interface DrcDraft {
  kind: "drc";
  label?: ReliabilityLabel;
  startedAt: number;
}

export interface SubjectiveDraft {
  kind: "subjective_eval";
  accuracy?: number;
  usefulness?: number;
  startedAt: number;
}

export type Draft = QaaDraft | DrcDraft | SubjectiveDraft;

export function newDraft(lease: Lease, now: number = Date.now()): Draft {
  switch (lease.task_kind) {
    case "qaa":
      return { kind: "qaa", startedAt: now };
    case "drc":
      return { kind: "drc", startedAt: now };
    case "subjective_eval":
      return { kind: "subjective_eval", startedAt: now };
  }
}

// QAA wizard steps, in protocol order.
export const QAA_STEPS = ["validity", "relevance", "category", "edit"] as const;
export type QaaStep = (typeof QAA_STEPS)[number];

export function needsEdit(category: AnswerCategory | undefined): boolean {
  return category !== undefined && EDIT_REQUIRED.includes(category);
}

/** Steps currently shown: a bad question collapses everything after step one,
 * and the edit step only exists for categories that require an edit. */
export function visibleSteps(draft: QaaDraft): QaaStep[] {
  if (draft.validity === "bad") return ["validity"];
  const steps: QaaStep[] = ["validity", "relevance", "category"];
  if (needsEdit(draft.category)) steps.push("edit");
  return steps;
}

/** Index of the first incomplete visible step; the wizard advances only when
 * the current step's field is set. */
export function currentStep(draft: QaaDraft): number {
  const steps = visibleSteps(draft);
  const complete: Record<QaaStep, boolean> = {
    validity: draft.validity !== undefined,
    relevance: draft.relevance !== undefined,
    category: draft.category !== undefined,
    edit: (draft.editedAnswer ?? "").trim() !== "",
  };
  for (let i = 0; i < steps.length; i += 1) {
    if (!complete[steps[i]!]) return i;
  }
  return steps.length;
}

export type FormAction =
  | { field: "validity"; value: Validity }
  | { field: "relevance"; value: Relevance }
  | { field: "category"; value: AnswerCategory }
  | { field: "editedAnswer"; value: string }
  | { field: "label"; value: ReliabilityLabel }
  | { field: "accuracy"; value: number }
  | { field: "usefulness"; value: number };

/** Apply one form interaction, clearing fields the change invalidates. */
export function applyAction(draft: Draft, action: FormAction, originalAnswer = ""): Draft {
  if (draft.kind === "drc") {
    if (action.field !== "label") return draft;
    return { ...draft, label: action.value };
  }
  if (draft.kind === "subjective_eval") {
    if (action.field === "accuracy") return { ...draft, accuracy: action.value };
    if (action.field === "usefulness") return { ...draft, usefulness: action.value };
    return draft;
  }
  switch (action.field) {
    case "validity": {
      if (action.value === "bad") {
        // steps 2-4 collapse; their data must not survive
        return { kind: "qaa", validity: "bad", startedAt: draft.startedAt };
      }
      return { ...draft, validity: "good" };
    }
    case "relevance":
      if (draft.validity !== "good") return draft;
      return { ...draft, relevance: action.value };
    case "category": {
      if (draft.validity !== "good") return draft;
      const next: QaaDraft = { ...draft, category: action.value };
      if (needsEdit(action.value)) {
        // seed the edit box with the original answer for correction
        if (!needsEdit(draft.category)) next.editedAnswer = originalAnswer;
      } else {
        delete next.editedAnswer;
      }
      return next;
    }
    case "editedAnswer":
      if (draft.validity !== "good" || !needsEdit(draft.category)) return draft;
      return { ...draft, editedAnswer: action.value };
    default:
      return draft;
  }
}

/** The field blocking submission, or null when the draft is complete. */
export function blockingField(draft: Draft): string | null {
  if (draft.kind === "drc") {
    return draft.label === undefined ? "label" : null;
  }
  if (draft.kind === "subjective_eval") {
    if (draft.accuracy === undefined) return "accuracy";
    if (draft.usefulness === undefined) return "usefulness";
    return null;
  }
  if (draft.validity === undefined) return "validity";
  if (draft.validity === "bad") return null;
  if (draft.relevance === undefined) return "relevance";
  if (draft.category === undefined) return "category";
  if (needsEdit(draft.category) && (draft.editedAnswer ?? "").trim() === "") {
    return "edited_answer";
  }
  return null;
}

export function canSubmit(draft: Draft): boolean {
  return blockingField(draft) === null;
}

/** Build the wire payload; throws if the draft is incomplete or (belt and
 * braces) fails the schema mirror of the server invariants. */
export function toResultPayload(
  draft: Draft,
  lease: Lease,
  now: number = Date.now(),
): ResultPayload {
  const blocking = blockingField(draft);
  if (blocking !== null) {
    throw new Error(`draft is not submittable: ${blocking} is missing`);
  }
  if (draft.kind === "drc") {
    return { label: draft.label! };
  }
  if (draft.kind === "subjective_eval") {
    return { accuracy: draft.accuracy!, usefulness: draft.usefulness! };
  }
  const payload = {
    qa_id: String(lease.payload["id"] ?? ""),
    annotator_id: lease.annotator_id,
    validity: draft.validity!,
    relevance: draft.validity === "good" ? (draft.relevance ?? null) : null,
    category: draft.validity === "good" ? (draft.category ?? null) : null,
    edited_answer:
      draft.validity === "good" && needsEdit(draft.category)
        ? (draft.editedAnswer ?? "")
        : null,
    elapsed: Math.max(0, (now - draft.startedAt) / 1000),
  };
  return qaaResultSchema.parse(payload);
}

export const ALL_FORM_VALUES = {
  validity: ["good", "bad"],
  relevance: RELEVANCE_VALUES,
  category: CATEGORY_VALUES,
  label: RELIABILITY_LABELS,
} as const;
