// Prompter session: the agenda, rendered in rank order, with two-click
// decisions. An in-flight lock guarantees one API call per decision.

import { AgendaItem, Api, ApiError } from "./api.js";
import { clear, el } from "./dom.js";

export interface SessionScreen {
  root: HTMLElement;
  refresh(): Promise<void>;
  flush(): Promise<void>;
}

export function sessionScreen(doc: Document, api: Api): SessionScreen {
  const root = el(doc, "section", { class: "screen session-screen" });
  const heading = el(doc, "h2", {}, ["Your session"]);
  const error = el(doc, "p", { class: "error", role: "alert" });
  const list = el(doc, "ol", { class: "agenda" });
  root.append(heading, error, list);

  let items: AgendaItem[] = [];
  let busy = false;
  let inflight: Promise<void> = Promise.resolve();

  function run(action: () => Promise<unknown>): void {
    if (busy) return; // a decision is already on the wire
    busy = true;
    inflight = (async () => {
      error.textContent = "";
      try {
        await action();
      } catch (err) {
        error.textContent = err instanceof ApiError ? err.message : String(err);
      } finally {
        busy = false;
      }
      await refresh();
    })();
  }

  function decisionRow(item: AgendaItem): HTMLElement {
    const respond =
      item.kind === "pending_handoff"
        ? (d: "accept" | "decline") => api.respondHandoff(item.task_id, d)
        : (d: "accept" | "decline") => api.respondInvitation(item.task_id, d);
    const accept = el(doc, "button", { class: "accept" }, ["Accept"]);
    const decline = el(doc, "button", { class: "decline" }, ["Decline"]);
    accept.addEventListener("click", () => run(() => respond("accept")));
    decline.addEventListener("click", () => run(() => respond("decline")));
    const label =
      item.kind === "pending_handoff"
        ? `${item.detail.from} offers you "${item.detail.title}"`
        : `${item.detail.from} invites you to "${item.detail.title}"`;
    return el(doc, "li", { class: `item ${item.kind}`, "data-task": item.task_id }, [
      el(doc, "span", { class: "label" }, [label]),
      accept,
      decline,
    ]);
  }

  function actionableRow(item: AgendaItem): HTMLElement {
    const done = el(doc, "button", { class: "complete" }, ["Done"]);
    done.addEventListener("click", () => run(() => api.complete(item.task_id)));
    const breakDown = el(doc, "button", { class: "break-down" }, ["Break it down"]);
    const row = el(doc, "li", { class: "item actionable_task", "data-task": item.task_id }, [
      el(doc, "span", { class: "label" }, [`Work on "${item.detail.title}"`]),
      done,
      breakDown,
    ]);
    breakDown.addEventListener("click", () => {
      if (row.querySelector(".subtask-form")) return;
      const title = el(doc, "input", { class: "subtask-title", placeholder: "Subtask title" });
      const create = el(doc, "button", { class: "create-subtask" }, ["Create subtask"]);
      create.addEventListener("click", () => {
        const value = title.value.trim();
        if (!value) return;
        run(() => api.createTask(value, item.task_id));
      });
      row.append(el(doc, "div", { class: "subtask-form" }, [title, create]));
    });
    return row;
  }

  function watchedRow(item: AgendaItem): HTMLElement {
    const text = `${item.detail.actor}: ${item.detail.kind} on ${item.task_id}`;
    return el(doc, "li", { class: "item watched_update", "data-task": item.task_id }, [text]);
  }

  function render(): void {
    clear(list);
    for (const item of items) {
      if (item.kind === "pending_handoff" || item.kind === "pending_invitation") {
        list.append(decisionRow(item));
      } else if (item.kind === "actionable_task") {
        list.append(actionableRow(item));
      } else {
        list.append(watchedRow(item));
      }
    }
    if (!items.length) {
      list.append(el(doc, "li", { class: "empty" }, ["Nothing needs your attention."]));
    }
  }

  async function refresh(): Promise<void> {
    items = await api.agenda();
    render();
  }

  return { root, refresh, flush: () => inflight };
}
