/**
 * ChatViewState and its pure transitions. Every field mirrors a service
 * response field; nothing here invents data the backend never sent.
 * Messages are append-only; callers supply timestamps so transitions stay
 * deterministic under test.
 */

import type {
  AgentReply,
  BeliefPayload,
  ItemCard,
  SelectOutcome,
  SessionDescriptor,
  SessionStatus,
} from "./types.js";

export const PAGE_SIZE = 3; // kappa: cards shown per page

export interface Message {
  speaker: "user" | "agent" | "system";
  text: string;
  timestamp: string;
}

export interface BeliefRow {
  facet: string;
  /** top-3 values by probability, descending */
  entries: { value: string; p: number }[];
}

export interface OutcomeBanner {
  outcome: string;
  correct: boolean;
  tau: number | null;
  reward: number | null;
}

export interface ErrorBanner {
  message: string;
  retryable: boolean;
}

export interface ChatViewState {
  sessionId: string | null;
  status: SessionStatus | null;
  policy: string | null;
  studyMode: boolean;
  messages: Message[];
  target: ItemCard | null;
  visited: ItemCard[];
  recommendations: ItemCard[];
  page: number;
  beliefRows: BeliefRow[];
  outcome: OutcomeBanner | null;
  attemptsLeft: number | null;
  error: ErrorBanner | null;
  busy: boolean;
}

export function initialView(): ChatViewState {
  return {
    sessionId: null,
    status: null,
    policy: null,
    studyMode: false,
    messages: [],
    target: null,
    visited: [],
    recommendations: [],
    page: 0,
    beliefRows: [],
    outcome: null,
    attemptsLeft: null,
    error: null,
    busy: false,
  };
}

function assertProbability(facet: string, value: string, p: number): void {
  if (!(p >= 0 && p <= 1)) {
    throw new RangeError(`belief ${facet}=${value} has probability ${p} outside [0,1]`);
  }
}

/** Per-facet top-3 rows from the service's belief payload. */
export function beliefRows(belief: BeliefPayload): BeliefRow[] {
  return Object.entries(belief).map(([facet, dist]) => {
    const entries = Object.entries(dist)
      .map(([value, p]) => {
        assertProbability(facet, value, p);
        return { value, p };
      })
      .sort((a, b) => b.p - a.p || a.value.localeCompare(b.value))
      .slice(0, 3);
    return { facet, entries };
  });
}

function append(view: ChatViewState, message: Message): ChatViewState {
  return { ...view, messages: [...view.messages, message] };
}

/** Initialize (or resume) the view from a session descriptor. */
export function startView(descriptor: SessionDescriptor, now: string): ChatViewState {
  let view: ChatViewState = {
    ...initialView(),
    sessionId: descriptor.session_id,
    status: descriptor.status,
    policy: descriptor.policy,
    studyMode: descriptor.study_mode,
    target: descriptor.target,
    visited: descriptor.visited ?? [],
    recommendations: descriptor.shown ?? [],
    beliefRows: descriptor.belief ? beliefRows(descriptor.belief) : [],
  };
  for (const entry of descriptor.history) {
    view = append(view, {
      speaker: entry.role,
      text: entry.text,
      timestamp: now,
    });
  }
  if (descriptor.outcome !== null) {
    view.outcome = {
      outcome: descriptor.outcome,
      correct: descriptor.outcome === "success",
      tau: descriptor.tau,
      reward: null,
    };
  }
  return view;
}

/** Optimistic append of the user's message before the service answers. */
export function applyUserMessage(view: ChatViewState, text: string, now: string): ChatViewState {
  return append(view, { speaker: "user", text, timestamp: now });
}

export function applyReply(view: ChatViewState, reply: AgentReply, now: string): ChatViewState {
  let next = append(view, { speaker: "agent", text: reply.text, timestamp: now });
  next = {
    ...next,
    status: reply.status,
    beliefRows: beliefRows(reply.debug.belief),
    error: null,
  };
  if (reply.kind === "recommendations") {
    next = { ...next, recommendations: reply.items, page: 0 };
  }
  return next;
}

export function applySelect(view: ChatViewState, outcome: SelectOutcome): ChatViewState {
  const next: ChatViewState = { ...view, status: outcome.status, error: null };
  if (!outcome.closed) {
    return { ...next, attemptsLeft: outcome.attempts_left ?? null };
  }
  return {
    ...next,
    attemptsLeft: null,
    outcome: {
      outcome: outcome.outcome ?? (outcome.correct ? "success" : "wrong_quit"),
      correct: outcome.correct,
      tau: outcome.tau ?? null,
      reward: outcome.reward ?? null,
    },
  };
}

export function applyError(view: ChatViewState, message: string, retryable: boolean): ChatViewState {
  return { ...view, error: { message, retryable } };
}

export function clearError(view: ChatViewState): ChatViewState {
  return { ...view, error: null };
}

export function isTerminal(view: ChatViewState): boolean {
  return view.status === "succeeded" || view.status === "failed";
}

export function canType(view: ChatViewState): boolean {
  return view.status === "active" && !view.busy;
}

// ---- pagination (pages of PAGE_SIZE cards) ----

export function pageCount(view: ChatViewState): number {
  return Math.ceil(view.recommendations.length / PAGE_SIZE);
}

export function cardsOnPage(view: ChatViewState): ItemCard[] {
  const start = view.page * PAGE_SIZE;
  return view.recommendations.slice(start, start + PAGE_SIZE);
}

export function nextPage(view: ChatViewState): ChatViewState {
  const last = Math.max(pageCount(view) - 1, 0);
  return { ...view, page: Math.min(view.page + 1, last) };
}

export function prevPage(view: ChatViewState): ChatViewState {
  return { ...view, page: Math.max(view.page - 1, 0) };
}
