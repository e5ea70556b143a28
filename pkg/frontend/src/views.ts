import {
  CATEGORY_VALUES,
  RELEVANCE_VALUES,
  RELIABILITY_LABELS,
  RELIABILITY_LABEL_TEXT,
  type Lease,
} from "./types.js";
import {
  blockingField,
  canSubmit,
  currentStep,
  needsEdit,
  visibleSteps,
  type Draft,
  type DrcDraft,
  type QaaDraft,
  type QaaStep,
  type SubjectiveDraft,
} from "./draft.js";

// View models are plain data; the DOM layer only renders them. Keeping the
// decision logic here makes the whole UI testable without a browser.

export interface OptionView {
  value: string;
  text: string;
  selected: boolean;
}

export interface StepView {
  step: QaaStep;
  title: string;
  active: boolean;
  options: OptionView[];
  editBox?: { value: string; seededFrom: string };
}

export interface TaskViewModel {
  kind: "drc" | "qaa" | "subjective_eval";
  taskId: string;
  title: string;
  sourceUrl: string | null;
  question?: string;
  answer?: string;
  domain?: string;
  options?: OptionView[];          // drc
  steps?: StepView[];              // qaa
  scales?: { name: string; values: OptionView[] }[]; // subjective
  submitEnabled: boolean;
  message: string | null;
}

const STEP_TITLES: Record<QaaStep, string> = {
  validity: "1. Is this a good question?",
  relevance: "2. Is it related to the location?",
  category: "3. How correct is the answer?",
  edit: "4. Edit the answer",
};

const BLOCKING_MESSAGES: Record<string, string> = {
  validity: "Choose whether the question is good or bad.",
  relevance: "Choose the question's relevance to the location.",
  category: "Choose an answer category.",
  edited_answer: "The edited answer cannot be empty for this category.",
  label: "Choose one reliability label.",
  accuracy: "Rate the response's accuracy.",
  usefulness: "Rate the response's usefulness.",
};

function message(draft: Draft): string | null {
  const blocking = blockingField(draft);
  return blocking === null ? null : (BLOCKING_MESSAGES[blocking] ?? blocking);
}

function str(payload: Record<string, unknown>, key: string): string {
  const value = payload[key];
  return typeof value === "string" ? value : "";
}

export function renderDrc(lease: Lease, draft: DrcDraft): TaskViewModel {
  return {
    kind: "drc",
    taskId: lease.task_id,
    title: "Domain reliability check",
    domain: str(lease.payload, "domain"),
    sourceUrl: str(lease.payload, "source_url") || `https://${str(lease.payload, "domain")}/`,
    options: RELIABILITY_LABELS.map((label) => ({
      value: label,
      text: RELIABILITY_LABEL_TEXT[label],
      selected: draft.label === label,
    })),
    submitEnabled: canSubmit(draft),
    message: message(draft),
  };
}

export function renderQaa(lease: Lease, draft: QaaDraft): TaskViewModel {
  const steps = visibleSteps(draft);
  const activeIndex = currentStep(draft);
  const originalAnswer = str(lease.payload, "answer");
  const stepViews: StepView[] = steps.map((step, index) => {
    const view: StepView = {
      step,
      title: STEP_TITLES[step],
      active: index === activeIndex,
      options: [],
    };
    if (step === "validity") {
      view.options = [
        { value: "good", text: "Good question", selected: draft.validity === "good" },
        { value: "bad", text: "Bad question", selected: draft.validity === "bad" },
      ];
    } else if (step === "relevance") {
      view.options = RELEVANCE_VALUES.map((value) => ({
        value,
        text: value,
        selected: draft.relevance === value,
      }));
    } else if (step === "category") {
      view.options = CATEGORY_VALUES.map((value) => ({
        value,
        text: value.replace("_", " "),
        selected: draft.category === value,
      }));
    } else {
      view.editBox = {
        value: draft.editedAnswer ?? originalAnswer,
        seededFrom: originalAnswer,
      };
    }
    return view;
  });
  return {
    kind: "qaa",
    taskId: lease.task_id,
    title: "QA annotation",
    question: str(lease.payload, "question"),
    answer: originalAnswer,
    sourceUrl: str(lease.payload, "source_url") || null,
    steps: stepViews,
    submitEnabled: canSubmit(draft),
    message: message(draft),
  };
}

export function renderSubjective(lease: Lease, draft: SubjectiveDraft): TaskViewModel {
  const scale = (name: "accuracy" | "usefulness") =>
    [1, 2, 3, 4, 5].map((value) => ({
      value: String(value),
      text: String(value),
      selected: draft[name] === value,
    }));
  return {
    kind: "subjective_eval",
    taskId: lease.task_id,
    title: "Response evaluation",
    question: str(lease.payload, "question"),
    answer: str(lease.payload, "model_answer"),
    sourceUrl: null,
    scales: [
      { name: "accuracy", values: scale("accuracy") },
      { name: "usefulness", values: scale("usefulness") },
    ],
    submitEnabled: canSubmit(draft),
    message: message(draft),
  };
}

export function renderTask(lease: Lease, draft: Draft): TaskViewModel {
  if (draft.kind === "drc") return renderDrc(lease, draft);
  if (draft.kind === "subjective_eval") return renderSubjective(lease, draft);
  return renderQaa(lease, draft);
}

export { needsEdit };
