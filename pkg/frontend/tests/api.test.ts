import { afterEach, describe, expect, it } from "vitest";

import { ApiClient, ApiError, resolveBaseUrl } from "../src/api.js";
import { fakeService, fixture } from "./helpers.js";

afterEach(() => {
  delete (globalThis as Record<string, unknown>).CONVREC_BASE_URL;
  delete process.env.CONVREC_BASE_URL;
});

describe("resolveBaseUrl", () => {
  it("prefers the explicit argument", () => {
    (globalThis as Record<string, unknown>).CONVREC_BASE_URL = "http://global";
    expect(resolveBaseUrl("http://arg")).toBe("http://arg");
  });

  it("falls back to the global, then the environment, then same-origin", () => {
    process.env.CONVREC_BASE_URL = "http://env";
    expect(resolveBaseUrl()).toBe("http://env");
    (globalThis as Record<string, unknown>).CONVREC_BASE_URL = "http://global";
    expect(resolveBaseUrl()).toBe("http://global");
    delete (globalThis as Record<string, unknown>).CONVREC_BASE_URL;
    delete process.env.CONVREC_BASE_URL;
    expect(resolveBaseUrl()).toBe("");
  });

  it("strips a trailing slash from the base url", () => {
    const client = new ApiClient("http://host:8080/");
    expect(client.baseUrl).toBe("http://host:8080");
  });
});

describe("ApiClient against the recorded service", () => {
  it("creates a session with the request body the service expects", async () => {
    const svc = fakeService();
    const client = new ApiClient("", svc.fetchFn);
    const descriptor = await client.createSession({ study_mode: true, seed: 1 });
    expect(svc.calls[0]).toEqual({
      method: "POST",
      path: "/api/session",
      body: { study_mode: true, seed: 1 },
    });
    expect(descriptor.session_id).toBe(fixture("session_study").session_id);
    expect(descriptor.target?.facets).toEqual(fixture("session_study").target.facets);
  });

  it("sends messages to the session-scoped path", async () => {
    const svc = fakeService();
    const client = new ApiClient("http://host", svc.fetchFn);
    const reply = await client.sendMessage("abc123", "hello there");
    expect(svc.calls[0]!.path).toBe("http://host/api/session/abc123/message");
    expect(svc.calls[0]!.body).toEqual({ text: "hello there" });
    expect(reply.kind).toBe("question");
  });

  it("selects items and reports none-found", async () => {
    const svc = fakeService();
    const client = new ApiClient("", svc.fetchFn);
    const wrong = await client.selectItem("abc123", "item_000");
    expect(svc.calls[0]!.body).toEqual({ item_id: "item_000" });
    expect(wrong.closed).toBe(false);
    const gone = await client.selectNoneFound("abc123");
    expect(svc.calls[1]!.body).toEqual({ none_found: true });
    expect(gone.closed).toBe(true);
    expect(gone.correct).toBe(false);
  });

  it("maps service errors onto ApiError with the detail message", async () => {
    const svc = fakeService();
    const client = new ApiClient("", svc.fetchFn);
    await client.sendMessage("abc123", "one");
    await client.sendMessage("abc123", "two");
    await client.sendMessage("abc123", "three");
    const err = await client.sendMessage("abc123", "four").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.message).toContain("no further messages");
  });

  it("maps network failure onto status 0", async () => {
    const svc = fakeService();
    svc.setDown(true);
    const client = new ApiClient("", svc.fetchFn);
    const err = await client.health().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(0);
    expect(err.message).toContain("unreachable");
  });

  it("parses the health payload", async () => {
    const svc = fakeService();
    const client = new ApiClient("", svc.fetchFn);
    const health = await client.health();
    expect(health).toEqual(fixture("health"));
  });
});
