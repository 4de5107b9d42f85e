import { describe, expect, it } from "vitest";

import {
  applyError,
  applyReply,
  applySelect,
  applyUserMessage,
  nextPage,
  startView,
} from "../src/state.js";
import {
  escapeHtml,
  renderApp,
  renderComposer,
  renderErrorBanner,
  renderOutcomeBanner,
  renderRecommendations,
  renderTargetPanel,
} from "../src/render.js";
import { fixture } from "./helpers.js";

const NOW = "2026-08-15T12:00:00.000Z";

const studyStart = () => startView(fixture("session_study"), NOW);
const listedView = () => {
  let view = applyUserMessage(studyStart(), "hi there", NOW);
  view = applyReply(view, fixture("reply_question_1"), NOW);
  view = applyUserMessage(view, "cuisine_8, please.", NOW);
  view = applyReply(view, fixture("reply_recommendations"), NOW);
  return view;
};

describe("study-mode side panels", () => {
  it("shows one target row per facet before chat begins", () => {
    const html = renderTargetPanel(studyStart());
    const facets = Object.entries(fixture("session_study").target.facets) as [
      string,
      string,
    ][];
    expect((html.match(/<tr>/g) ?? []).length).toBe(facets.length);
    for (const [name, value] of facets) {
      expect(html).toContain(name);
      expect(html).toContain(value);
    }
  });

  it("free mode renders no target panel", () => {
    expect(renderTargetPanel(startView(fixture("session_free"), NOW))).toBe("");
  });

  it("full study start screen", () => {
    expect(renderApp(studyStart())).toMatchSnapshot();
  });
});

describe("chat exchange", () => {
  it("question replies render as agent bubbles", () => {
    let view = applyUserMessage(studyStart(), "hi there", NOW);
    view = applyReply(view, fixture("reply_question_1"), NOW);
    const html = renderApp(view);
    expect(html).toContain(`class="bubble user"`);
    expect(html).toContain(fixture("reply_question_1").text);
    expect(html).toMatchSnapshot();
  });

  it("escapes hostile message text", () => {
    const view = applyUserMessage(studyStart(), `<script>alert("x")</script>`, NOW);
    const html = renderApp(view);
    expect(html).not.toContain("<script>alert");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("recommendation cards", () => {
  it("renders pages of three with rank, facets, and a select button", () => {
    const view = listedView();
    const html = renderRecommendations(view);
    expect((html.match(/<article class="card"/g) ?? []).length).toBe(3);
    expect(html).toContain("page 1 of 3");
    expect(html).toContain(`data-action="prev-page" disabled`);
    expect(html).toContain(`data-action="next-page" `);
    const first = fixture("reply_recommendations").items[0];
    expect(html).toContain(`#${first.rank}`);
    expect(html).toContain(`data-action="select" data-item-id="${first.item_id}"`);
    expect(html).toMatchSnapshot();
  });

  it("the next-page control walks the recorded list in order", () => {
    const view = nextPage(listedView());
    const html = renderRecommendations(view);
    const expected = fixture("reply_recommendations").items.slice(3, 6);
    for (const card of expected) {
      expect(html).toContain(card.item_id);
    }
    expect(html).toContain("page 2 of 3");
  });

  it("never renders a datum the service did not send", () => {
    const reply = fixture("reply_recommendations");
    let view = listedView();
    const pages = [view, nextPage(view), nextPage(nextPage(view))];
    const sentIds = new Set(reply.items.map((c: { item_id: string }) => c.item_id));
    const sentValues = new Set(
      reply.items.flatMap((c: { facets: Record<string, string> }) => Object.values(c.facets)),
    );
    for (const page of pages) {
      const html = renderRecommendations(page);
      for (const id of html.matchAll(/data-item-id="([^"]+)"/g)) {
        expect(sentIds.has(id[1]!)).toBe(true);
      }
      for (const cell of html.matchAll(/<td>([^<]+)<\/td>/g)) {
        expect(sentValues.has(cell[1]!)).toBe(true);
      }
    }
  });
});

describe("belief debug panel", () => {
  it("draws meters only for probabilities the service reported", () => {
    const view = applyReply(studyStart(), fixture("reply_question_1"), NOW);
    const html = renderApp(view);
    const reported = fixture("reply_question_1").debug.belief;
    for (const meter of html.matchAll(/<meter min="0" max="1" value="([^"]+)"/g)) {
      const p = Number(meter[1]);
      expect(p).toBeGreaterThanOrEqual(0);
      expect(p).toBeLessThanOrEqual(1);
    }
    expect(Object.keys(reported).every((facet) => html.includes(facet))).toBe(true);
  });
});

describe("outcome banner", () => {
  it("success shows the rank and reward", () => {
    const view = applySelect(listedView(), fixture("select_success"));
    const html = renderOutcomeBanner(view);
    expect(html).toContain(`rank ${fixture("select_success").tau}`);
    expect(html).toContain("Reward");
    expect(renderApp(view)).toMatchSnapshot();
  });

  it("failure names the outcome", () => {
    const view = applySelect(listedView(), fixture("select_none_found"));
    expect(renderOutcomeBanner(view)).toContain("wrong_quit");
  });

  it("terminal sessions disable the composer with a status note", () => {
    const view = applySelect(listedView(), fixture("select_success"));
    const html = renderComposer(view);
    expect(html).toContain("disabled");
    expect(html).toContain("succeeded");
  });
});

describe("error banner", () => {
  it("offers retry only for retryable failures", () => {
    const down = applyError(studyStart(), "service unreachable: fetch failed", true);
    expect(renderErrorBanner(down)).toContain(`data-action="retry"`);
    const conflict = applyError(studyStart(), "session is succeeded", false);
    expect(renderErrorBanner(conflict)).not.toContain("retry");
  });
});

describe("escapeHtml", () => {
  it("neutralizes every html metacharacter", () => {
    expect(escapeHtml(`<a href="x">&'`)).toBe("&lt;a href=&quot;x&quot;&gt;&amp;&#39;");
  });
});
