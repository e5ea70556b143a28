import { z } from "zod";

// Label vocabularies, one-to-one with the server enums.

export const RELIABILITY_LABELS = [
  "very_reliable",
  "partially_reliable",
  "not_sure",
  "completely_unreliable",
] as const;
export type ReliabilityLabel = (typeof RELIABILITY_LABELS)[number];

export const RELIABILITY_LABEL_TEXT: Record<ReliabilityLabel, string> = {
  very_reliable: "Very reliable",
  partially_reliable: "Partially reliable",
  not_sure: "Not sure",
  completely_unreliable: "Completely unreliable",
};

export const VALIDITY_VALUES = ["good", "bad"] as const;
export type Validity = (typeof VALIDITY_VALUES)[number];

export const RELEVANCE_VALUES = ["yes", "no", "maybe", "unsure"] as const;
export type Relevance = (typeof RELEVANCE_VALUES)[number];

export const CATEGORY_VALUES = [
  "correct",
  "partially_correct",
  "incorrect",
  "cannot_find",
] as const;
export type AnswerCategory = (typeof CATEGORY_VALUES)[number];

export const EDIT_REQUIRED: readonly AnswerCategory[] = ["partially_correct", "incorrect"];

export type TaskKind = "drc" | "qaa" | "subjective_eval";

// Server payload shapes.

export interface Lease {
  lease_id: string;
  task_id: string;
  annotator_id: string;
  expires_at: number;
  task_kind: TaskKind;
  payload: Record<string, unknown>;
  guideline_version: string;
}

export interface LeaseResponse {
  lease: Lease | null;
}

export interface ProjectInfo {
  project_id: string;
  task_kind: TaskKind;
  required_annotators: number;
  tasks: number;
  open: number;
  resolved: number;
  results: number;
}

// Result payloads, validated client-side with the same invariants the server
// enforces: a bad question carries no step 2-4 data; partially correct and
// incorrect answers require a non-empty edit; other categories forbid one.

export const qaaResultSchema = z
  .object({
    qa_id: z.string().min(1),
    annotator_id: z.string().min(1),
    validity: z.enum(VALIDITY_VALUES),
    relevance: z.enum(RELEVANCE_VALUES).nullable(),
    category: z.enum(CATEGORY_VALUES).nullable(),
    edited_answer: z.string().nullable(),
    elapsed: z.number().min(0),
  })
  .superRefine((value, ctx) => {
    if (value.validity === "bad") {
      for (const field of ["relevance", "category", "edited_answer"] as const) {
        if (value[field] !== null) {
          ctx.addIssue({
            code: "custom",
            path: [field],
            message: `a bad question must not carry ${field}`,
          });
        }
      }
      return;
    }
    if (value.category === null) {
      ctx.addIssue({ code: "custom", path: ["category"], message: "category is required" });
      return;
    }
    if (EDIT_REQUIRED.includes(value.category)) {
      if (!value.edited_answer || value.edited_answer.trim() === "") {
        ctx.addIssue({
          code: "custom",
          path: ["edited_answer"],
          message: `category ${value.category} requires an edited answer`,
        });
      }
    } else if (value.edited_answer !== null) {
      ctx.addIssue({
        code: "custom",
        path: ["edited_answer"],
        message: `category ${value.category} forbids an edited answer`,
      });
    }
  });

export type QaaResult = z.infer<typeof qaaResultSchema>;

export const drcResultSchema = z.object({
  label: z.enum(RELIABILITY_LABELS),
});
export type DrcResult = z.infer<typeof drcResultSchema>;

export const subjectiveResultSchema = z.object({
  accuracy: z.number().int().min(1).max(5),
  usefulness: z.number().int().min(1).max(5),
});
export type SubjectiveResult = z.infer<typeof subjectiveResultSchema>;

export type ResultPayload = QaaResult | DrcResult | SubjectiveResult;

export interface SubmitBody {
  lease_id: string;
  annotator_id: string;
  result: ResultPayload;
}

export interface SubmitAck {
  status: string;
  task_status: string;
  results: number;
}
