// Typed client for the play-service HTTP API.  All game legality lives on the
// server; this module only shapes requests and surfaces protocol errors.

export type Role = "questioner" | "oracle";
export type Phase = "questioning" | "awaiting_answer" | "guessing" | "finished";
export type Outcome = "success" | "failure" | "incomplete";
export type AnswerValue = "Yes" | "No" | "N/A";

export interface ObjectView {
  object_id: number;
  category: string;
  category_id: number;
  bbox: [number, number, number, number];
  area: number;
}

export interface TranscriptEntry {
  question: string;
  answer: AnswerValue | null;
}

export interface SessionView {
  session_id: string;
  role: Role;
  phase: Phase;
  outcome: Outcome | null;
  question_budget: number;
  questions_asked: number;
  image: { image_id: number; width: number; height: number; file_name: string | null };
  transcript: TranscriptEntry[];
  objects: ObjectView[];
  target_id: number | null;
  guess_id: number | null;
}

export type EventBody =
  | { type: "question"; payload: { text: string } }
  | { type: "answer"; payload: { answer: AnswerValue } }
  | { type: "ready"; payload: Record<string, never> }
  | { type: "guess"; payload: { object_id: number } };

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export async function createSession(
  role: Role,
  seed?: number,
  imageId?: number,
): Promise<{ session_id: string; state: SessionView }> {
  return request("/api/sessions", {
    method: "POST",
    body: JSON.stringify({ role, seed: seed ?? null, image_id: imageId ?? null }),
  });
}

export async function getSession(sessionId: string): Promise<SessionView> {
  return request(`/api/sessions/${sessionId}`);
}

export async function postEvent(sessionId: string, event: EventBody): Promise<SessionView> {
  return request(`/api/sessions/${sessionId}/events`, {
    method: "POST",
    body: JSON.stringify(event),
  });
}
