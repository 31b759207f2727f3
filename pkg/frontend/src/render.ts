// DOM rendering: the whole screen is rebuilt from the view state on every
// update, so a page reload reconstructs an identical view from the service.

import type { AnswerValue, SessionView } from "./api.js";
import { colorFor, scaleBox, stageSize } from "./overlay.js";
import {
  canAnswer,
  canAsk,
  canDeclareReady,
  canPickObject,
  highlightedObjectId,
  outcomeBanner,
  pendingQuestion,
  questionsLeft,
  showOverlay,
  waitingForAgent,
  type ViewState,
} from "./state.js";

export interface Handlers {
  onAsk(text: string): void;
  onAnswer(answer: AnswerValue): void;
  onReady(): void;
  onGuess(objectId: number): void;
  onNewSession(role: "questioner" | "oracle"): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderLanding(root: HTMLElement, handlers: Handlers): void {
  const panel = el("div", "landing");
  panel.appendChild(el("h1", undefined, "GuessWhat?!"));
  panel.appendChild(
    el("p", "hint",
       "One object in the scene is secret. The questioner asks yes/no questions; the oracle answers; then the questioner picks the object."),
  );
  const questioner = el("button", "primary", "Play as questioner");
  questioner.onclick = () => handlers.onNewSession("questioner");
  const oracle = el("button", "primary", "Play as oracle");
  oracle.onclick = () => handlers.onNewSession("oracle");
  panel.append(questioner, oracle);
  root.replaceChildren(panel);
}

function renderStage(session: SessionView, handlers: Handlers): HTMLElement {
  const { width, height, scale } = stageSize(session.image.width, session.image.height, 560, 420);
  const stage = el("div", "stage");
  stage.style.width = `${width}px`;
  stage.style.height = `${height}px`;
  if (session.image.file_name) {
    // served by the play service when an image directory is configured;
    // on a metadata-only corpus this silently stays a blank stage
    stage.style.backgroundImage = `url(/images/${encodeURIComponent(session.image.file_name)})`;
    stage.style.backgroundSize = "100% 100%";
  }
  if (!showOverlay(session)) {
    stage.appendChild(el("p", "stage-hint", "Objects are hidden until the guess phase."));
    return stage;
  }
  const pickable = canPickObject(session);
  const highlighted = highlightedObjectId(session);
  for (const object of session.objects) {
    const box = scaleBox(object.bbox, scale);
    const node = el("div", "object-box");
    node.style.left = `${box.left}px`;
    node.style.top = `${box.top}px`;
    node.style.width = `${box.width}px`;
    node.style.height = `${box.height}px`;
    node.style.borderColor = colorFor(object.category_id);
    node.dataset.objectId = String(object.object_id);
    if (object.object_id === highlighted) node.classList.add("target");
    if (object.object_id === session.guess_id) node.classList.add("guessed");
    node.appendChild(el("span", "object-label", object.category));
    if (pickable) {
      node.classList.add("pickable");
      node.onclick = () => handlers.onGuess(object.object_id);
    }
    stage.appendChild(node);
  }
  return stage;
}

function renderTranscript(session: SessionView): HTMLElement {
  const list = el("ol", "transcript");
  for (const entry of session.transcript) {
    const item = el("li");
    item.appendChild(el("span", "question", entry.question));
    item.appendChild(el("span", `answer ${entry.answer ?? "pending"}`, entry.answer ?? "…"));
    list.appendChild(item);
  }
  return list;
}

function renderControls(session: SessionView, handlers: Handlers): HTMLElement {
  const controls = el("div", "controls");
  if (session.role === "questioner") {
    const form = el("form");
    const input = el("input");
    input.type = "text";
    input.placeholder = "Ask a yes/no question";
    input.disabled = !canAsk(session);
    const ask = el("button", "primary", "Ask");
    ask.disabled = !canAsk(session);
    form.onsubmit = (event) => {
      event.preventDefault();
      if (input.value.trim()) handlers.onAsk(input.value.trim());
      input.value = "";
    };
    form.append(input, ask);
    controls.appendChild(form);
    const ready = el("button", undefined, "Ready to guess");
    ready.disabled = !canDeclareReady(session);
    ready.onclick = () => handlers.onReady();
    controls.appendChild(ready);
    if (canPickObject(session)) {
      controls.appendChild(el("p", "hint", "Click the object you think is the secret one."));
    }
  } else {
    const question = pendingQuestion(session);
    controls.appendChild(
      el("p", "pending-question", question ?? "Waiting for the next question…"),
    );
    for (const answer of ["Yes", "No", "N/A"] as AnswerValue[]) {
      const button = el("button", "answer-button", answer);
      button.disabled = !canAnswer(session);
      button.onclick = () => handlers.onAnswer(answer);
      controls.appendChild(button);
    }
  }
  return controls;
}

export function render(root: HTMLElement, view: ViewState, handlers: Handlers): void {
  if (!view.session) {
    renderLanding(root, handlers);
    return;
  }
  const session = view.session;
  const page = el("div", "game");

  const header = el("header");
  header.appendChild(el("h1", undefined, "GuessWhat?!"));
  header.appendChild(el("span", "role-tag", `you are the ${session.role}`));
  header.appendChild(
    el("span", "budget", `${questionsLeft(session)} of ${session.question_budget} questions left`),
  );
  page.appendChild(header);

  const banner = outcomeBanner(session);
  if (banner) page.appendChild(el("div", `banner ${banner.kind}`, banner.text));
  if (view.error) page.appendChild(el("div", "banner error", view.error));
  if (!banner && waitingForAgent(session)) {
    page.appendChild(el("div", "waiting", "waiting for the agent…"));
  }

  const main = el("div", "columns");
  main.appendChild(renderStage(session, handlers));
  const side = el("div", "side");
  side.appendChild(renderTranscript(session));
  side.appendChild(renderControls(session, handlers));
  main.appendChild(side);
  page.appendChild(main);

  if (banner) {
    const again = el("button", "primary", "Play again");
    again.onclick = () => handlers.onNewSession(session.role);
    page.appendChild(again);
  }
  root.replaceChildren(page);
}
