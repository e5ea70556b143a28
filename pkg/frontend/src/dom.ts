import type { TaskSession } from "./session.js";
import type { FormAction } from "./draft.js";
import { renderTask } from "./views.js";
import type { TaskViewModel, OptionView } from "./views.js";

// Thin DOM layer: renders view models and forwards interactions to the
// session. All decision logic lives in draft.ts / views.ts.

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  for (const child of children) node.append(child);
  return node;
}

function optionGroup(
  name: string,
  options: OptionView[],
  onPick: (value: string) => void,
): HTMLElement {
  const group = el("div", { class: "options", role: "radiogroup", "data-group": name });
  for (const option of options) {
    const id = `${name}-${option.value}`;
    const input = el("input", {
      type: "radio",
      name,
      id,
      value: option.value,
    }) as HTMLInputElement;
    input.checked = option.selected;
    input.addEventListener("change", () => onPick(option.value));
    group.append(el("label", { for: id, class: "option" }, [input, option.text]));
  }
  return group;
}

export function renderInto(
  root: HTMLElement,
  session: TaskSession,
  guideline: string,
  onAction: (action: FormAction) => void,
  onSubmit: () => void,
): void {
  root.replaceChildren();
  const status = session.status;
  if (status.state === "exhausted") {
    root.append(el("p", { class: "done" }, ["No tasks left in this project. Thank you!"]));
    return;
  }
  if (status.state === "error") {
    root.append(el("p", { class: "error" }, [status.message]));
    const retry = el("button", {}, ["Retry"]);
    retry.addEventListener("click", () => {
      void session.retry().then(() => renderInto(root, session, guideline, onAction, onSubmit));
    });
    root.append(retry);
    return;
  }
  if (status.state !== "task") {
    root.append(el("p", {}, ["Loading…"]));
    return;
  }

  const view: TaskViewModel = renderTask(status.lease, status.draft);
  root.append(el("h2", {}, [view.title]));

  const panel = el("aside", { class: "guideline" });
  panel.append(el("h3", {}, ["Guidelines"]), el("pre", {}, [guideline]));
  root.append(panel);

  if (view.kind === "drc") {
    root.append(
      el("p", {}, [
        "Domain: ",
        el("a", { href: view.sourceUrl ?? "#", target: "_blank", rel: "noopener" }, [
          view.domain ?? "",
        ]),
      ]),
    );
    root.append(
      optionGroup("label", view.options ?? [], (value) =>
        onAction({ field: "label", value: value as never }),
      ),
    );
  } else if (view.kind === "qaa") {
    root.append(el("p", { class: "question" }, [view.question ?? ""]));
    root.append(el("p", { class: "answer" }, [view.answer ?? ""]));
    if (view.sourceUrl) {
      root.append(
        el("p", {}, [
          el("a", { href: view.sourceUrl, target: "_blank", rel: "noopener" }, ["Source page"]),
        ]),
      );
    }
    for (const step of view.steps ?? []) {
      const section = el("section", {
        class: step.active ? "step active" : "step",
        "data-step": step.step,
      });
      section.append(el("h3", {}, [step.title]));
      if (step.editBox) {
        const box = el("textarea", { rows: "6" }) as HTMLTextAreaElement;
        box.value = step.editBox.value;
        box.addEventListener("input", () =>
          onAction({ field: "editedAnswer", value: box.value }),
        );
        section.append(box);
      } else {
        section.append(
          optionGroup(step.step, step.options, (value) =>
            onAction({ field: step.step, value: value as never } as FormAction),
          ),
        );
      }
      root.append(section);
    }
  } else {
    root.append(el("p", { class: "question" }, [view.question ?? ""]));
    root.append(el("p", { class: "answer" }, [view.answer ?? ""]));
    for (const scale of view.scales ?? []) {
      const section = el("section", { class: "scale" });
      section.append(el("h3", {}, [scale.name]));
      section.append(
        optionGroup(scale.name, scale.values, (value) =>
          onAction({ field: scale.name as "accuracy" | "usefulness", value: Number(value) }),
        ),
      );
      root.append(section);
    }
  }

  if (view.message) root.append(el("p", { class: "inline-message" }, [view.message]));
  const submit = el("button", { class: "submit" }, ["Submit"]) as HTMLButtonElement;
  submit.disabled = !view.submitEnabled;
  submit.addEventListener("click", onSubmit);
  root.append(submit);
}
