// Application shell: sign-in, navigation, and the session banner. All state
// that matters lives on the server; a reload rebuilds every screen from the
// API.

import { Api } from "./api.js";
import { clear, el } from "./dom.js";
import { scheduleScreen } from "./schedule.js";
import { sessionScreen } from "./session.js";
import { tasksScreen } from "./tasks.js";

export interface App {
  root: HTMLElement;
  signIn(user: string): Promise<void>;
  show(screen: "schedule" | "session" | "tasks"): Promise<void>;
  flush(): Promise<void>;
}

export function createApp(doc: Document, api: Api): App {
  const root = el(doc, "div", { class: "app" });
  const banner = el(doc, "div", { class: "banner" });
  const nav = el(doc, "nav", { class: "nav" });
  const main = el(doc, "main", { class: "main" });
  root.append(banner, nav, main);

  const screens = {
    schedule: scheduleScreen(doc, api),
    session: sessionScreen(doc, api),
    tasks: tasksScreen(doc, api),
  };
  let current: keyof typeof screens = "session";

  for (const [name, label] of [
    ["session", "Session"],
    ["schedule", "Schedule"],
    ["tasks", "Goals & templates"],
  ] as const) {
    const button = el(doc, "button", { class: `nav-${name}` }, [label]);
    button.addEventListener("click", () => {
      void show(name);
    });
    nav.append(button);
  }

  async function updateBanner(): Promise<void> {
    const schedule = await api.schedule();
    clear(banner);
    if (!schedule.times.length) {
      banner.append("No sessions scheduled.");
      return;
    }
    const link = el(doc, "a", { href: "#session", class: "banner-link" }, [
      `Sessions at ${schedule.times.join(", ")} - open your prompter`,
    ]);
    link.addEventListener("click", () => {
      void show("session");
    });
    banner.append(link);
  }

  async function show(name: keyof typeof screens): Promise<void> {
    current = name;
    clear(main);
    main.append(screens[name].root);
    await screens[name].refresh();
    await updateBanner();
  }

  return {
    root,
    async signIn(user: string) {
      await api.register(user);
      await show(current);
    },
    show,
    async flush() {
      await screens[current].flush();
    },
  };
}

// Browser entry point; tests build the app against jsdom instead.
export function mount(win: Window & typeof globalThis, baseUrl: string): void {
  const doc = win.document;
  const api = new Api(baseUrl);
  const app = createApp(doc, api);
  const login = el(doc, "div", { class: "login" }, [
    el(doc, "input", { id: "login-user", placeholder: "your user id" }),
  ]);
  const go = el(doc, "button", { id: "login-go" }, ["Sign in"]);
  login.append(go);
  doc.body.append(login);
  go.addEventListener("click", () => {
    const input = doc.getElementById("login-user") as HTMLInputElement;
    if (!input.value.trim()) return;
    void app.signIn(input.value.trim()).then(() => {
      login.remove();
      doc.body.append(app.root);
    });
  });
}
