/**
 * Browser entry point: mounts the controller on #app, delegates clicks
 * and the composer submit through data-action attributes, and remembers
 * the session id so a reload resumes via GET state.
 */

import { ApiClient } from "./api.js";
import { ChatController } from "./controller.js";
import { renderApp } from "./render.js";

const SESSION_KEY = "convrec.session_id";

function mount(root: HTMLElement): ChatController {
  const controller = new ChatController(new ApiClient(), (view) => {
    root.innerHTML = renderApp(view);
    if (view.sessionId !== null) {
      localStorage.setItem(SESSION_KEY, view.sessionId);
    }
  });

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (target === null || target.dataset.action === "send") return;
    switch (target.dataset.action) {
      case "start-study":
        void controller.startSession(true);
        break;
      case "start-free":
        void controller.startSession(false);
        break;
      case "select":
        void controller.select(target.dataset.itemId ?? "");
        break;
      case "none-found":
        void controller.noneFound();
        break;
      case "next-page":
        controller.turnPage(1);
        break;
      case "prev-page":
        controller.turnPage(-1);
        break;
      case "retry":
        void controller.retry();
        break;
    }
  });

  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement;
    if (form.dataset.action !== "send") return;
    event.preventDefault();
    const input = form.elements.namedItem("text") as HTMLInputElement;
    void controller.send(input.value);
  });

  return controller;
}

const root = document.getElementById("app");
if (root !== null) {
  const controller = mount(root);
  const previous = localStorage.getItem(SESSION_KEY);
  root.innerHTML = renderApp(controller.view);
  if (previous !== null) {
    void controller.resumeSession(previous).then(() => {
      if (controller.view.sessionId === null) {
        // expired or evicted: forget it and show the start screen
        localStorage.removeItem(SESSION_KEY);
      }
    });
  }
}
