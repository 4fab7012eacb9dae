// Typed client for the coordination service's JSON API. Every screen talks
// to the server through this module; nothing else issues requests.

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface EventRecord {
  seq: number;
  ts: string;
  actor: string;
  kind: string;
  task_id: string | null;
  payload: Record<string, unknown>;
}

export interface AgendaItem {
  kind: "pending_handoff" | "pending_invitation" | "actionable_task" | "watched_update";
  task_id: string;
  detail: Record<string, unknown>;
  rank: number;
}

export interface SharingMatrix {
  creation: "all" | string[];
  handoff_and_response: "all" | string[];
  status_change: "all" | string[];
  completion: "all" | string[];
  comment: "all" | string[];
}

export interface TaskView {
  task_id: string;
  title: string;
  owner: string;
  status: "active" | "completed" | "abandoned";
  parent: string | null;
  participants: string[];
  depends_on: string[];
  pending_handoffs: { to: string; offered_at: string; seq: number }[];
  pending_invitations: { user: string; sent_at: string; seq: number }[];
  sharing: SharingMatrix;
  comments: { author: string; text: string; at: string; seq: number }[];
  actionable: boolean;
  created_at: string;
}

export interface ParsedTemplate {
  template: {
    name: string;
    roles: string[];
    steps: { id: string; title: string; owner_role: string; after: string[] }[];
  };
  canonical: string;
  violations: { rule: string; subject: string; detail: string }[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorName: string,
    readonly detail: string,
  ) {
    super(`${errorName}${detail ? `: ${detail}` : ""}`);
  }
}

export class Api {
  token: string | null = null;
  user: string | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(
        response.status,
        typeof payload.error === "string" ? payload.error : `HTTP ${response.status}`,
        typeof payload.detail === "string" ? payload.detail : "",
      );
    }
    return payload;
  }

  async register(user: string): Promise<void> {
    const result = await this.request("POST", "/users", { user });
    this.token = result.token;
    this.user = result.user;
  }

  health(): Promise<{ status: string; cursor: number }> {
    return this.request("GET", "/health");
  }

  schedule(): Promise<{ times: string[]; tz: string }> {
    return this.request("GET", "/users/me/schedule");
  }

  setSchedule(times: string[], tz = "+00:00"): Promise<unknown> {
    return this.request("PUT", "/users/me/schedule", { times, tz });
  }

  async agenda(): Promise<AgendaItem[]> {
    return (await this.request("GET", "/users/me/agenda")).items;
  }

  updates(since = 0): Promise<{ events: EventRecord[]; next: number | null }> {
    return this.request("GET", `/users/me/updates?since=${since}`);
  }

  async tasks(): Promise<TaskView[]> {
    return (await this.request("GET", "/tasks")).tasks;
  }

  async task(id: string): Promise<TaskView> {
    return (await this.request("GET", `/tasks/${id}`)).task;
  }

  async createTask(title: string, parent?: string, dependsOn?: string[]): Promise<string> {
    const body: Record<string, unknown> = { title };
    if (parent) body.parent = parent;
    if (dependsOn && dependsOn.length) body.depends_on = dependsOn;
    return (await this.request("POST", "/tasks", body)).task_id;
  }

  offerHandoff(id: string, to: string): Promise<unknown> {
    return this.request("POST", `/tasks/${id}/handoff`, { to });
  }

  respondHandoff(id: string, decision: "accept" | "decline"): Promise<unknown> {
    return this.request("POST", `/tasks/${id}/handoff/response`, { decision });
  }

  invite(id: string, user: string): Promise<unknown> {
    return this.request("POST", `/tasks/${id}/invitations`, { user });
  }

  respondInvitation(id: string, decision: "accept" | "decline"): Promise<unknown> {
    return this.request("POST", `/tasks/${id}/invitations/response`, { decision });
  }

  complete(id: string): Promise<unknown> {
    return this.request("POST", `/tasks/${id}/complete`);
  }

  abandon(id: string): Promise<unknown> {
    return this.request("POST", `/tasks/${id}/abandon`);
  }

  comment(id: string, text: string): Promise<unknown> {
    return this.request("POST", `/tasks/${id}/comments`, { text });
  }

  setSharing(id: string, matrix: Partial<SharingMatrix>): Promise<unknown> {
    return this.request("PUT", `/tasks/${id}/sharing`, matrix);
  }

  parseTemplate(text: string): Promise<ParsedTemplate> {
    return this.request("POST", "/templates/parse", { text });
  }

  launchTemplate(
    text: string,
    binding: Record<string, string>,
  ): Promise<{ events: EventRecord[]; root: string }> {
    return this.request("POST", "/templates/launch", { text, binding });
  }

  recordEngagement(slot: number, opened: boolean, resolved = 0): Promise<unknown> {
    return this.request("POST", "/engagement", { slot, opened, resolved });
  }
}
