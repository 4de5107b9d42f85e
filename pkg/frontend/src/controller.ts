/**
 * Glue between the API client and the view state. One in-flight request
 * per session, enforced here: actions taken while busy are dropped. The
 * view is only advanced from service responses (plus the documented
 * optimistic echo of the user's own message).
 */

import { ApiClient, ApiError } from "./api.js";
import {
  applyError,
  applyReply,
  applySelect,
  applyUserMessage,
  canType,
  clearError,
  initialView,
  nextPage,
  prevPage,
  startView,
  type ChatViewState,
} from "./state.js";

export type RenderSink = (view: ChatViewState) => void;

export class ChatController {
  view: ChatViewState = initialView();
  private lastAction: (() => Promise<void>) | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly sink: RenderSink,
    private readonly clock: () => string = () => new Date().toISOString(),
  ) {}

  private emit(view: ChatViewState): void {
    this.view = view;
    this.sink(view);
  }

  /** Runs one service call while holding the single in-flight slot. */
  private async exclusive(action: () => Promise<void>): Promise<void> {
    if (this.view.busy) return;
    this.lastAction = action;
    this.emit({ ...this.view, busy: true });
    try {
      await action();
    } catch (err) {
      this.handleError(err);
    } finally {
      this.emit({ ...this.view, busy: false });
    }
  }

  private handleError(err: unknown): void {
    if (err instanceof ApiError) {
      // 0 = network down: offer retry. 409 = stale view of the session
      // state machine: the conflict message explains what to do instead.
      this.emit(applyError(this.view, err.message, err.status === 0));
      return;
    }
    this.emit(applyError(this.view, String(err), false));
  }

  startSession(studyMode: boolean, seed?: number, policy?: string): Promise<void> {
    return this.exclusive(async () => {
      const descriptor = await this.api.createSession({
        study_mode: studyMode,
        ...(seed !== undefined ? { seed } : {}),
        ...(policy !== undefined ? { policy } : {}),
      });
      this.emit(startView(descriptor, this.clock()));
    });
  }

  /** Reload-and-resume: rebuild the whole view from GET state. */
  resumeSession(sessionId: string): Promise<void> {
    return this.exclusive(async () => {
      const descriptor = await this.api.getSession(sessionId);
      this.emit(startView(descriptor, this.clock()));
    });
  }

  send(text: string): Promise<void> {
    const trimmed = text.trim();
    if (trimmed === "" || !canType(this.view) || this.view.sessionId === null) {
      return Promise.resolve();
    }
    // optimistic echo happens once, outside the retryable action
    this.emit(applyUserMessage(this.view, trimmed, this.clock()));
    return this.exclusive(async () => {
      const reply = await this.api.sendMessage(this.view.sessionId!, trimmed);
      this.emit(applyReply(this.view, reply, this.clock()));
    });
  }

  select(itemId: string): Promise<void> {
    if (this.view.sessionId === null) return Promise.resolve();
    return this.exclusive(async () => {
      const outcome = await this.api.selectItem(this.view.sessionId!, itemId);
      this.emit(applySelect(this.view, outcome));
    });
  }

  noneFound(): Promise<void> {
    if (this.view.sessionId === null) return Promise.resolve();
    return this.exclusive(async () => {
      const outcome = await this.api.selectNoneFound(this.view.sessionId!);
      this.emit(applySelect(this.view, outcome));
    });
  }

  retry(): Promise<void> {
    const action = this.lastAction;
    if (action === null) return Promise.resolve();
    this.emit(clearError(this.view));
    return this.exclusive(action);
  }

  turnPage(direction: 1 | -1): void {
    this.emit(direction === 1 ? nextPage(this.view) : prevPage(this.view));
  }
}
