/** Fixture loading and a scripted fetch standing in for the service. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export function fixture<T = any>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, `${name}.json`), "utf8")) as T;
}

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

/**
 * A fake chat service with the recorded session frozen in: the first
 * three messages walk question -> question -> recommendations, a wrong
 * pick burns an attempt, picking the recorded target succeeds. No
 * network, no backend.
 */
export function fakeService() {
  const created = fixture("session_study");
  const replies = [
    fixture("reply_question_1"),
    fixture("reply_question_2"),
    fixture("reply_recommendations"),
  ];
  const target: string = fixture("session_study").target.item_id;
  const calls: RecordedCall[] = [];
  let messages = 0;
  let closed = false;
  let down = false;

  const respond = (status: number, body: unknown) =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  const fetchFn = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const path = String(input);
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    calls.push({ method, path, body });
    if (down) throw new TypeError("fetch failed");

    if (method === "GET" && path.endsWith("/api/health")) {
      return respond(200, fixture("health"));
    }
    if (method === "POST" && path.endsWith("/api/session")) {
      return respond(200, body?.study_mode ? created : fixture("session_free"));
    }
    if (method === "POST" && path.endsWith("/message")) {
      if (closed || messages >= replies.length) {
        return respond(409, { detail: "session is succeeded; no further messages are accepted" });
      }
      return respond(200, replies[messages++]);
    }
    if (method === "POST" && path.endsWith("/select")) {
      if (body?.none_found) {
        closed = true;
        return respond(200, fixture("select_none_found"));
      }
      if (body?.item_id === target) {
        closed = true;
        return respond(200, fixture("select_success"));
      }
      return respond(200, fixture("select_wrong"));
    }
    if (method === "GET" && path.includes("/api/session/")) {
      return respond(200, fixture(closed ? "session_terminal" : "session_resumed"));
    }
    return respond(404, { detail: `unknown session at ${path}` });
  };

  return {
    fetchFn: fetchFn as typeof fetch,
    calls,
    target,
    setDown(value: boolean) {
      down = value;
    },
  };
}
