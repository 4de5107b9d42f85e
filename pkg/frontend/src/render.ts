/**
 * Pure HTML renderers over ChatViewState. Strings in, strings out; the
 * DOM layer (main.ts) swaps innerHTML and delegates events through
 * data-action attributes. Keeping this module DOM-free is what lets the
 * snapshot tests run offline.
 */

import {
  cardsOnPage,
  canType,
  isTerminal,
  pageCount,
  type ChatViewState,
} from "./state.js";
import type { ItemCard } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function facetRows(card: ItemCard): string {
  return Object.entries(card.facets)
    .map(
      ([name, value]) =>
        `<tr><th scope="row">${escapeHtml(name)}</th><td>${escapeHtml(value)}</td></tr>`,
    )
    .join("");
}

export function renderTargetPanel(view: ChatViewState): string {
  if (!view.studyMode || view.target === null) return "";
  return `<section class="panel target-panel" aria-label="target item">
  <h2>Find this item</h2>
  <table>${facetRows(view.target)}</table>
</section>`;
}

export function renderHistoryPanel(view: ChatViewState): string {
  if (!view.studyMode || view.visited.length === 0) return "";
  const rows = view.visited
    .map(
      (card) =>
        `<li>${escapeHtml(card.item_id)}${
          card.rating !== undefined ? ` <span class="rating">rated ${card.rating.toFixed(1)}</span>` : ""
        }</li>`,
    )
    .join("");
  return `<section class="panel history-panel" aria-label="your history">
  <h2>Places you visited</h2>
  <ul>${rows}</ul>
</section>`;
}

export function renderBeliefPanel(view: ChatViewState): string {
  if (view.beliefRows.length === 0) return "";
  const rows = view.beliefRows
    .map((row) => {
      const bars = row.entries
        .map(
          (e) =>
            `<div class="belief-bar"><span class="belief-value">${escapeHtml(e.value)}</span>` +
            `<meter min="0" max="1" value="${e.p.toFixed(6)}"></meter>` +
            `<span class="belief-p">${e.p.toFixed(2)}</span></div>`,
        )
        .join("");
      return `<div class="belief-facet"><h3>${escapeHtml(row.facet)}</h3>${bars}</div>`;
    })
    .join("");
  return `<section class="panel belief-panel" aria-label="belief debug">
  <h2>Agent belief</h2>${rows}
</section>`;
}

export function renderMessages(view: ChatViewState): string {
  const bubbles = view.messages
    .map(
      (m) =>
        `<li class="bubble ${m.speaker}"><span class="text">${escapeHtml(m.text)}</span>` +
        `<time datetime="${escapeHtml(m.timestamp)}">${escapeHtml(m.timestamp)}</time></li>`,
    )
    .join("\n");
  return `<ol class="messages" aria-live="polite">${bubbles}</ol>`;
}

function renderCard(card: ItemCard): string {
  return `<article class="card" data-item-id="${escapeHtml(card.item_id)}">
  <header><span class="rank">#${card.rank ?? "?"}</span> ${escapeHtml(card.item_id)}</header>
  <table>${facetRows(card)}</table>
  <button type="button" data-action="select" data-item-id="${escapeHtml(card.item_id)}">
    This is it
  </button>
</article>`;
}

export function renderRecommendations(view: ChatViewState): string {
  if (view.recommendations.length === 0) return "";
  const pages = pageCount(view);
  const cards = cardsOnPage(view).map(renderCard).join("\n");
  const attempts =
    view.attemptsLeft !== null
      ? `<p class="attempts">Not that one. ${view.attemptsLeft} ${
          view.attemptsLeft === 1 ? "try" : "tries"
        } left.</p>`
      : "";
  const controls =
    view.status === "recommending"
      ? `<button type="button" data-action="none-found">None of these</button>`
      : "";
  return `<section class="recommendations" aria-label="recommendations">
${attempts}
<div class="card-grid">
${cards}
</div>
<nav class="pager">
  <button type="button" data-action="prev-page" ${view.page === 0 ? "disabled" : ""}>previous</button>
  <span class="page-label">page ${view.page + 1} of ${pages}</span>
  <button type="button" data-action="next-page" ${view.page >= pages - 1 ? "disabled" : ""}>next page</button>
</nav>
${controls}
</section>`;
}

export function renderOutcomeBanner(view: ChatViewState): string {
  if (view.outcome === null) return "";
  if (view.outcome.correct) {
    const reward =
      view.outcome.reward !== null ? ` Reward ${view.outcome.reward.toFixed(2)}.` : "";
    return `<aside class="banner success" role="status">
  Found it at rank ${view.outcome.tau}!${reward}
</aside>`;
  }
  return `<aside class="banner failure" role="status">
  Session closed: ${escapeHtml(view.outcome.outcome)}. Better luck next time.
</aside>`;
}

export function renderErrorBanner(view: ChatViewState): string {
  if (view.error === null) return "";
  const retry = view.error.retryable
    ? `<button type="button" data-action="retry">retry</button>`
    : "";
  return `<aside class="banner error" role="alert">
  ${escapeHtml(view.error.message)} ${retry}
</aside>`;
}

export function renderComposer(view: ChatViewState): string {
  const disabled = canType(view) ? "" : "disabled";
  let note = "";
  if (view.status === "recommending") {
    note = `<p class="status-note">Pick from the list (or "None of these").</p>`;
  } else if (isTerminal(view)) {
    note = `<p class="status-note">This session is ${view.status}; start a new one to keep chatting.</p>`;
  }
  return `<form class="composer" data-action="send">
  <input name="text" type="text" placeholder="Say what you are looking for" ${disabled} autocomplete="off">
  <button type="submit" ${disabled}>Send</button>
</form>
${note}`;
}

export function renderStartControls(view: ChatViewState): string {
  if (view.sessionId !== null) return "";
  return `<section class="start-controls">
  <button type="button" data-action="start-study">Start study session</button>
  <button type="button" data-action="start-free">Start free chat</button>
</section>`;
}

export function renderApp(view: ChatViewState): string {
  const status = view.status ?? "no session";
  return `<div class="app">
<header class="top-bar">
  <h1>convrec webchat</h1>
  <span class="status status-${escapeHtml(String(status))}">${escapeHtml(String(status))}</span>
</header>
${renderErrorBanner(view)}
${renderStartControls(view)}
<div class="columns">
  <aside class="side">
    ${renderTargetPanel(view)}
    ${renderHistoryPanel(view)}
    ${renderBeliefPanel(view)}
  </aside>
  <main class="chat">
    ${renderMessages(view)}
    ${renderRecommendations(view)}
    ${renderOutcomeBanner(view)}
    ${renderComposer(view)}
  </main>
</div>
</div>`;
}
