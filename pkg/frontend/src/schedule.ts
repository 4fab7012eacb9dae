// Schedule editor: pick the daily times a prompter session should knock.

import { Api, ApiError } from "./api.js";
import { clear, el, isValidTime } from "./dom.js";

export interface ScheduleScreen {
  root: HTMLElement;
  refresh(): Promise<void>;
  flush(): Promise<void>;
}

export function scheduleScreen(doc: Document, api: Api): ScheduleScreen {
  const root = el(doc, "section", { class: "screen schedule-screen" });
  const heading = el(doc, "h2", {}, ["Engagement sessions"]);
  const list = el(doc, "ul", { class: "time-list" });
  const input = el(doc, "input", {
    class: "time-input",
    placeholder: "HH:MM",
    maxlength: "5",
  });
  const addButton = el(doc, "button", { class: "add-time" }, ["Add time"]);
  const saveButton = el(doc, "button", { class: "save-schedule" }, ["Save schedule"]);
  const notice = el(doc, "p", { class: "notice" });
  const error = el(doc, "p", { class: "error", role: "alert" });
  root.append(
    heading,
    el(doc, "p", {}, ["Short daily sessions keep your goals moving. You will be prompted at these times."]),
    list,
    el(doc, "div", { class: "row" }, [input, addButton]),
    saveButton,
    notice,
    error,
  );

  let times: string[] = [];
  let inflight: Promise<void> = Promise.resolve();

  function render(): void {
    clear(list);
    for (const time of times) {
      const remove = el(doc, "button", { class: "remove-time", "data-time": time }, ["Remove"]);
      remove.addEventListener("click", () => {
        times = times.filter((t) => t !== time);
        render();
      });
      list.append(el(doc, "li", { "data-time": time }, [time + " ", remove]));
    }
    if (!times.length) {
      list.append(el(doc, "li", { class: "empty" }, ["No sessions scheduled."]));
    }
  }

  addButton.addEventListener("click", () => {
    const value = input.value.trim();
    if (!isValidTime(value)) {
      error.textContent = `"${value}" is not a valid HH:MM time.`;
      return; // inline validation only; nothing goes to the API
    }
    error.textContent = "";
    if (!times.includes(value)) {
      times = [...times, value].sort();
    }
    input.value = "";
    render();
  });

  saveButton.addEventListener("click", () => {
    inflight = (async () => {
      error.textContent = "";
      try {
        await api.setSchedule(times);
        const stored = await api.schedule();
        times = stored.times;
        notice.textContent = stored.times.length
          ? `Saved. Sessions at ${stored.times.join(", ")}.`
          : "Saved. No sessions scheduled - you will not be prompted.";
      } catch (err) {
        error.textContent = err instanceof ApiError ? err.message : String(err);
      }
      render();
    })();
  });

  return {
    root,
    async refresh() {
      const stored = await api.schedule();
      times = stored.times;
      notice.textContent = "";
      error.textContent = "";
      render();
    },
    flush: () => inflight,
  };
}
