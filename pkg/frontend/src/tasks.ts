// Goal detail: participants, the sharing matrix, handoffs, comments — plus
// the template launcher. Owners get the editing affordances; everyone else
// gets a read-only view of what the sharing policy lets them see.

import { Api, ApiError, ParsedTemplate, SharingMatrix, TaskView } from "./api.js";
import { clear, el } from "./dom.js";

const UPDATE_KINDS: (keyof SharingMatrix)[] = [
  "creation",
  "handoff_and_response",
  "status_change",
  "completion",
  "comment",
];

export interface TasksScreen {
  root: HTMLElement;
  refresh(): Promise<void>;
  select(taskId: string): Promise<void>;
  flush(): Promise<void>;
}

export function tasksScreen(doc: Document, api: Api): TasksScreen {
  const root = el(doc, "section", { class: "screen tasks-screen" });
  const error = el(doc, "p", { class: "error", role: "alert" });
  const goalList = el(doc, "ul", { class: "goal-list" });
  const detail = el(doc, "div", { class: "task-detail" });
  const templatePanel = el(doc, "div", { class: "template-panel" });
  root.append(
    el(doc, "h2", {}, ["Your goals"]),
    error,
    goalList,
    detail,
    el(doc, "h2", {}, ["Launch a template"]),
    templatePanel,
  );

  let tasks: TaskView[] = [];
  let selected: string | null = null;
  let inflight: Promise<void> = Promise.resolve();

  function run(action: () => Promise<unknown>): void {
    inflight = (async () => {
      error.textContent = "";
      try {
        await action();
      } catch (err) {
        error.textContent = err instanceof ApiError ? err.message : String(err);
      }
      await refresh();
    })();
  }

  function renderGoals(): void {
    clear(goalList);
    for (const task of tasks) {
      const open = el(doc, "button", { class: "open-task", "data-task": task.task_id }, [
        `${task.title} (${task.status}, owner ${task.owner})`,
      ]);
      open.addEventListener("click", () => {
        selected = task.task_id;
        renderDetail();
      });
      goalList.append(el(doc, "li", { "data-task": task.task_id }, [open]));
    }
    if (!tasks.length) goalList.append(el(doc, "li", { class: "empty" }, ["No goals yet."]));
  }

  function sharingGrid(task: TaskView): HTMLElement {
    const grid = el(doc, "table", { class: "sharing-grid" });
    const header = el(doc, "tr", {}, [el(doc, "th", {}, ["update"])]);
    for (const user of task.participants) header.append(el(doc, "th", {}, [user]));
    grid.append(header);
    for (const kind of UPDATE_KINDS) {
      const row = el(doc, "tr", {}, [el(doc, "td", {}, [kind])]);
      const rule = task.sharing[kind];
      for (const user of task.participants) {
        const box = el(doc, "input", {
          type: "checkbox",
          class: "share-box",
          "data-kind": kind,
          "data-user": user,
        }) as HTMLInputElement;
        box.checked = rule === "all" || rule.includes(user);
        row.append(el(doc, "td", {}, [box]));
      }
      grid.append(row);
    }
    const save = el(doc, "button", { class: "save-sharing" }, ["Save sharing"]);
    save.addEventListener("click", () => {
      const matrix: Partial<SharingMatrix> = {};
      for (const kind of UPDATE_KINDS) {
        const receivers = Array.from(
          grid.querySelectorAll<HTMLInputElement>(`input[data-kind="${kind}"]`),
        )
          .filter((box) => box.checked)
          .map((box) => box.getAttribute("data-user") as string);
        matrix[kind] = receivers.length === task.participants.length ? "all" : receivers;
      }
      run(() => api.setSharing(task.task_id, matrix));
    });
    return el(doc, "div", { class: "sharing" }, [
      el(doc, "h4", {}, ["Who hears about what"]),
      grid,
      save,
    ]);
  }

  function renderDetail(): void {
    clear(detail);
    const task = tasks.find((t) => t.task_id === selected);
    if (!task) return;
    const isOwner = task.owner === api.user;
    detail.append(
      el(doc, "h3", { class: "task-title" }, [`${task.title} (${task.task_id})`]),
      el(doc, "p", {}, [`Owner: ${task.owner} - status: ${task.status}`]),
    );

    const members = el(doc, "ul", { class: "participants" });
    for (const user of task.participants) {
      members.append(el(doc, "li", { "data-user": user }, [user]));
    }
    for (const invitation of task.pending_invitations) {
      members.append(
        el(doc, "li", { class: "pending", "data-user": invitation.user }, [
          `${invitation.user} (pending)`,
        ]),
      );
    }
    detail.append(el(doc, "h4", {}, ["Participants"]), members);

    for (const comment of task.comments) {
      detail.append(el(doc, "p", { class: "comment" }, [`${comment.author}: ${comment.text}`]));
    }

    if (!isOwner) {
      detail.append(el(doc, "p", { class: "readonly-note" }, ["Only the owner can edit this goal."]));
      return;
    }

    const inviteInput = el(doc, "input", { class: "invite-user", placeholder: "user id" });
    const inviteButton = el(doc, "button", { class: "invite" }, ["Invite"]);
    inviteButton.addEventListener("click", () => {
      const user = inviteInput.value.trim();
      if (!user) return;
      run(() => api.invite(task.task_id, user));
    });
    detail.append(el(doc, "div", { class: "row" }, [inviteInput, inviteButton]));

    const handoffInput = el(doc, "input", { class: "handoff-user", placeholder: "user id" });
    const handoffButton = el(doc, "button", { class: "offer-handoff" }, ["Offer handoff"]);
    handoffButton.addEventListener("click", () => {
      const user = handoffInput.value.trim();
      if (!user) return;
      run(() => api.offerHandoff(task.task_id, user));
    });
    detail.append(el(doc, "div", { class: "row" }, [handoffInput, handoffButton]));

    detail.append(sharingGrid(task));
  }

  function renderTemplatePanel(): void {
    clear(templatePanel);
    const text = el(doc, "textarea", { class: "template-text", rows: "8" });
    const parseButton = el(doc, "button", { class: "parse-template" }, ["Parse"]);
    const result = el(doc, "div", { class: "parse-result" });
    templatePanel.append(text, parseButton, result);

    parseButton.addEventListener("click", () => {
      inflight = (async () => {
        error.textContent = "";
        clear(result);
        let parsed: ParsedTemplate;
        try {
          parsed = await api.parseTemplate(text.value);
        } catch (err) {
          error.textContent = err instanceof ApiError ? err.message : String(err);
          return;
        }
        if (parsed.violations.length) {
          for (const violation of parsed.violations) {
            result.append(
              el(doc, "p", { class: "violation" }, [`${violation.rule}: ${violation.subject}`]),
            );
          }
          return;
        }
        result.append(
          el(doc, "p", { class: "template-name" }, [
            `${parsed.template.name} - ${parsed.template.steps.length} steps`,
          ]),
        );
        const bindings = el(doc, "div", { class: "bindings" });
        for (const role of parsed.template.roles) {
          bindings.append(
            el(doc, "label", { class: "binding", "data-role": role }, [
              `${role}: `,
              el(doc, "input", { class: "bind-user", "data-role": role, placeholder: "user id" }),
            ]),
          );
        }
        const launch = el(doc, "button", { class: "launch-template" }, ["Launch"]);
        launch.addEventListener("click", () => {
          const binding: Record<string, string> = {};
          for (const input of bindings.querySelectorAll<HTMLInputElement>("input.bind-user")) {
            const role = input.getAttribute("data-role") as string;
            if (input.value.trim()) binding[role] = input.value.trim();
            input.parentElement?.classList.remove("missing");
          }
          inflight = (async () => {
            error.textContent = "";
            try {
              const launched = await api.launchTemplate(text.value, binding);
              result.append(
                el(doc, "p", { class: "launch-result" }, [
                  `Launched: ${launched.events.filter((e) => e.kind === "TaskCreated").length} tasks created, root ${launched.root}.`,
                ]),
              );
            } catch (err) {
              if (err instanceof ApiError && err.errorName === "UnboundRole") {
                for (const missing of err.detail.split(",")) {
                  bindings
                    .querySelector(`label[data-role="${missing}"]`)
                    ?.classList.add("missing");
                }
                error.textContent = `Bind every role before launching (missing: ${err.detail}).`;
              } else {
                error.textContent = err instanceof ApiError ? err.message : String(err);
              }
              return;
            }
            await refresh();
          })();
        });
        result.append(bindings, launch);
      })();
    });
  }

  async function refresh(): Promise<void> {
    tasks = await api.tasks();
    renderGoals();
    renderDetail();
    if (!templatePanel.hasChildNodes()) renderTemplatePanel();
  }

  return {
    root,
    refresh,
    async select(taskId: string) {
      selected = taskId;
      await refresh();
    },
    flush: async () => {
      await inflight;
      await inflight; // a launch queued from inside a parse settles on the second wait
    },
  };
}
