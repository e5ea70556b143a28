import { ApiClient } from "./api.js";
import { renderInto } from "./dom.js";
import { TaskSession } from "./session.js";

// Browser entry point. Configuration via query string:
//   ?server=http://127.0.0.1:8080&project=qaa-test-en-Doha&annotator=alice&token=...

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server") ?? "http://127.0.0.1:8080";
  const project = params.get("project");
  const annotator = params.get("annotator");
  const token = params.get("token") ?? undefined;
  const root = document.getElementById("app");
  if (!root) return;

  const api = new ApiClient(server, token);
  if (!project || !annotator) {
    const projects = await api.listProjects();
    root.replaceChildren();
    const list = document.createElement("ul");
    for (const info of projects) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      const next = new URLSearchParams(params);
      next.set("project", info.project_id);
      link.href = `?${next.toString()}`;
      link.textContent = `${info.project_id} (${info.open} open of ${info.tasks})`;
      item.append(link);
      list.append(item);
    }
    const hint = document.createElement("p");
    hint.textContent = annotator
      ? "Pick a project:"
      : "Add &annotator=<your id> to the URL, then pick a project:";
    root.append(hint, list);
    return;
  }

  const kind = (await api.listProjects()).find((p) => p.project_id === project)?.task_kind;
  const guideline = kind ? await api.guideline(kind) : "";
  const session = new TaskSession(api, project, annotator, window.localStorage);

  const rerender = () =>
    renderInto(
      root,
      session,
      guideline,
      (action) => {
        session.apply(action);
        rerender();
      },
      () => {
        void session.submit().then(rerender);
      },
    );

  await session.start();
  rerender();
}

void boot();
