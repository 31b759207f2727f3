// Pure view-state helpers: what the current role may do, what to show.
// The screen is a function of the role-filtered service state plus pending
// input; no game rule is decided here.

import type { SessionView } from "./api.js";

export interface ViewState {
  session: SessionView | null;
  error: string | null; // inline protocol error; the transcript stays
  busy: boolean;
}

export function initialViewState(): ViewState {
  return { session: null, error: null, busy: false };
}

export function canAsk(s: SessionView): boolean {
  return s.role === "questioner" && s.phase === "questioning";
}

export function canDeclareReady(s: SessionView): boolean {
  const answered = s.transcript.filter((e) => e.answer !== null).length;
  return s.role === "questioner" && s.phase === "questioning" && answered >= 1;
}

export function canPickObject(s: SessionView): boolean {
  return s.role === "questioner" && s.phase === "guessing";
}

export function canAnswer(s: SessionView): boolean {
  return s.role === "oracle" && s.phase === "awaiting_answer";
}

export function pendingQuestion(s: SessionView): string | null {
  if (s.phase !== "awaiting_answer" || s.transcript.length === 0) return null;
  const last = s.transcript[s.transcript.length - 1];
  return last.answer === null ? last.question : null;
}

export function waitingForAgent(s: SessionView): boolean {
  if (s.phase === "finished") return false;
  if (s.role === "questioner") return s.phase === "awaiting_answer";
  return s.phase !== "awaiting_answer";
}

export interface Banner {
  kind: "success" | "failure" | "incomplete";
  text: string;
}

export function outcomeBanner(s: SessionView): Banner | null {
  if (s.phase !== "finished" || s.outcome === null) return null;
  if (s.outcome === "success") return { kind: "success", text: "Success! The object was found." };
  if (s.outcome === "failure") return { kind: "failure", text: "Failure: wrong object." };
  return { kind: "incomplete", text: "Game abandoned (timeout)." };
}

// Objects are rendered only when the service revealed them; the target
// highlight exists only for the oracle (or once the game is over).
export function showOverlay(s: SessionView): boolean {
  return s.objects.length > 0;
}

export function highlightedObjectId(s: SessionView): number | null {
  if (s.role === "oracle") return s.target_id;
  return s.phase === "finished" ? s.target_id : null;
}

export function questionsLeft(s: SessionView): number {
  return Math.max(0, s.question_budget - s.questions_asked);
}
