// Bootstrap: session id and role live in the URL hash, so reloading the page
// reconstructs the identical view from GET /api/sessions/{id}.  State updates
// come from a 1-second poll plus the response of every posted event.

import { ApiError, createSession, getSession, postEvent, type AnswerValue, type Role } from "./api.js";
import { render, type Handlers } from "./render.js";
import { initialViewState, type ViewState } from "./state.js";

const POLL_MS = 1000;

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

let view: ViewState = initialViewState();
let pollTimer: number | undefined;

function sessionIdFromHash(): string | null {
  const match = /sid=([0-9a-f]+)/.exec(location.hash);
  return match ? match[1] : null;
}

function draw(): void {
  render(root as HTMLElement, view, handlers);
}

function applySession(session: ViewState["session"]): void {
  view = { ...view, session, error: null };
  draw();
}

function applyError(error: unknown): void {
  const message = error instanceof ApiError ? error.message : "service unreachable";
  view = { ...view, error: message };
  draw();
}

async function refresh(): Promise<void> {
  const sid = sessionIdFromHash();
  if (!sid) return;
  try {
    applySession(await getSession(sid));
  } catch (error) {
    applyError(error);
  }
}

function startPolling(): void {
  if (pollTimer !== undefined) clearInterval(pollTimer);
  pollTimer = setInterval(refresh, POLL_MS) as unknown as number;
}

async function send(event: Parameters<typeof postEvent>[1]): Promise<void> {
  const sid = sessionIdFromHash();
  if (!sid || view.busy) return;
  view = { ...view, busy: true };
  try {
    applySession(await postEvent(sid, event));
  } catch (error) {
    applyError(error);
    await refresh(); // protocol error: re-sync without losing the transcript
  } finally {
    view = { ...view, busy: false };
  }
}

const handlers: Handlers = {
  onAsk: (text) => void send({ type: "question", payload: { text } }),
  onAnswer: (answer: AnswerValue) => void send({ type: "answer", payload: { answer } }),
  onReady: () => void send({ type: "ready", payload: {} }),
  onGuess: (objectId) => void send({ type: "guess", payload: { object_id: objectId } }),
  onNewSession: (role: Role) => {
    void (async () => {
      try {
        const created = await createSession(role);
        location.hash = `sid=${created.session_id}`;
        applySession(created.state);
      } catch (error) {
        applyError(error);
      }
    })();
  },
};

void refresh();
startPolling();
draw();
