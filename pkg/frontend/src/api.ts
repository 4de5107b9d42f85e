/** Typed fetch client for the chat service. No state, no DOM. */

import type {
  AgentReply,
  CreateSessionRequest,
  Health,
  SelectOutcome,
  SessionDescriptor,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/**
 * Base URL resolution, most specific first: explicit argument, the
 * `CONVREC_BASE_URL` global (set by config.js in the browser), the
 * environment variable of the same name (node), else same-origin.
 */
export function resolveBaseUrl(explicit?: string): string {
  if (explicit !== undefined) return explicit;
  const fromGlobal = (globalThis as Record<string, unknown>).CONVREC_BASE_URL;
  if (typeof fromGlobal === "string") return fromGlobal;
  const env = (globalThis as { process?: { env?: Record<string, string> } })
    .process?.env?.CONVREC_BASE_URL;
  if (typeof env === "string") return env;
  return "";
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl?: string, private readonly fetchFn: typeof fetch = fetch) {
    this.baseUrl = resolveBaseUrl(baseUrl).replace(/\/$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail = (payload as { detail?: string }).detail ?? response.statusText;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  createSession(req: CreateSessionRequest): Promise<SessionDescriptor> {
    return this.request("POST", "/api/session", req);
  }

  sendMessage(sessionId: string, text: string): Promise<AgentReply> {
    return this.request("POST", `/api/session/${sessionId}/message`, { text });
  }

  selectItem(sessionId: string, itemId: string): Promise<SelectOutcome> {
    return this.request("POST", `/api/session/${sessionId}/select`, { item_id: itemId });
  }

  selectNoneFound(sessionId: string): Promise<SelectOutcome> {
    return this.request("POST", `/api/session/${sessionId}/select`, { none_found: true });
  }

  getSession(sessionId: string): Promise<SessionDescriptor> {
    return this.request("GET", `/api/session/${sessionId}`);
  }

  health(): Promise<Health> {
    return this.request("GET", "/api/health");
  }
}
