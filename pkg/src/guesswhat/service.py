"""HTTP service for live games: a human plays questioner or oracle against
agents in the complementary roles.

Every session is an append-only event log on disk; the in-memory state is
always the fold of the log, so a restart replays to exactly where it left
off.  Responses are role-filtered: a questioner never sees the object list
before the guess phase."""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence

from pydantic import BaseModel

from .core import Answer, GameRecord, ImageMeta, ObjectRef, Status, is_eligible_object
from .data import game_from_dict, game_to_dict, tokenize
from .engine import (
    AskQuestion,
    GiveAnswer,
    Guess,
    Phase,
    ProtocolError,
    ReadyToGuess,
    SessionState,
    abandon,
    apply_event,
    state_to_record,
)

ROLE_QUESTIONER = "questioner"
ROLE_ORACLE = "oracle"

DEFAULT_QUESTION_BUDGET = 5
DEFAULT_IDLE_TIMEOUT_S = 30 * 60


class NotFoundError(KeyError):
    pass


@dataclass
class ServiceConfig:
    corpus_path: Optional[str] = None
    data_dir: str = "sessions"
    oracle_checkpoint: Optional[str] = None
    guesser_checkpoint: Optional[str] = None
    qgen_checkpoint: Optional[str] = None
    static_dir: Optional[str] = None
    images_dir: Optional[str] = None
    host: str = "127.0.0.1"
    port: int = 8000
    question_budget: int = DEFAULT_QUESTION_BUDGET
    idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S
    beam_width: int = 5


_ENV_PREFIX = "GUESSWHAT_"


def load_service_config(
    config_file: Optional[str] = None, overrides: Optional[dict] = None
) -> ServiceConfig:
    """Merge order: defaults < config file < explicit overrides < environment."""
    merged: dict = {}
    if config_file:
        merged.update(json.loads(Path(config_file).read_text()))
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    for key in ServiceConfig.__dataclass_fields__:
        env = os.environ.get(_ENV_PREFIX + key.upper())
        if env is not None:
            merged[key] = (
                int(env) if key in ("port", "question_budget", "beam_width") else
                float(env) if key == "idle_timeout_s" else env
            )
    unknown = set(merged) - set(ServiceConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    return ServiceConfig(**merged)


# ---------------------------------------------------------------------------
# agents plugged into the non-human roles


class OracleAgent(Protocol):
    def answer(self, state: SessionState, question: str) -> Answer: ...


class QuestionerAgent(Protocol):
    def next_question(self, state: SessionState) -> str: ...
    def pick_object(self, state: SessionState) -> int: ...


class ModelOracleAgent:
    def __init__(self, model):
        self.model = model

    def answer(self, state: SessionState, question: str) -> Answer:
        target = next(o for o in state.objects if o.object_id == state.target_id)
        return self.model.answer(question, target, state.image)


class ModelQuestionerAgent:
    def __init__(self, qgen, guesser, beam_width: int = 5):
        self.qgen = qgen
        self.guesser = guesser
        self.beam_width = beam_width

    def next_question(self, state: SessionState) -> str:
        tokens = self.qgen.generate(state.qa_pairs(), state.image, width=self.beam_width)
        return self.qgen.question_text(tokens) or "?"

    def pick_object(self, state: SessionState) -> int:
        dist = self.guesser.distribution(state.qa_pairs(), state.objects, state.image)
        return state.objects[int(dist.argmax())].object_id


def _object_is_left(obj: ObjectRef, image: ImageMeta) -> bool:
    return obj.bbox[0] + obj.bbox[2] / 2.0 < image.width / 2.0


class ScriptedOracleAgent:
    """Truthful rule-based oracle over category names and left/right wording."""

    def answer(self, state: SessionState, question: str) -> Answer:
        target = next(o for o in state.objects if o.object_id == state.target_id)
        text = question.lower()
        tokens = set(tokenize(question))
        for obj in state.objects:
            name = obj.category_name.lower()
            if name and name in text:
                return Answer.YES if target.category_name.lower() == name else Answer.NO
        if "left" in tokens:
            return Answer.YES if _object_is_left(target, state.image) else Answer.NO
        if "right" in tokens:
            return Answer.NO if _object_is_left(target, state.image) else Answer.YES
        return Answer.NA


class ScriptedQuestionerAgent:
    """Asks category probes in sorted order, then side probes, and guesses the
    lowest-id object consistent with the answers."""

    def next_question(self, state: SessionState) -> str:
        asked = {e.question for e in state.transcript}
        for name in sorted({o.category_name.lower() for o in state.objects}):
            q = f"is it a {name} ?"
            if q not in asked:
                return q
        for q in ("is it on the left ?", "is it on the right ?"):
            if q not in asked:
                return q
        return "is it the first one ?"

    def _consistent(self, obj: ObjectRef, state: SessionState) -> bool:
        for qa in state.qa_pairs():
            if qa.answer is Answer.NA:
                continue
            yes = qa.answer is Answer.YES
            text = qa.question.lower()
            matched_category = False
            for name in {o.category_name.lower() for o in state.objects}:
                if name and name in text:
                    if (obj.category_name.lower() == name) != yes:
                        return False
                    matched_category = True
                    break
            if matched_category:
                continue
            tokens = set(tokenize(qa.question))
            if "left" in tokens and _object_is_left(obj, state.image) != yes:
                return False
            if "right" in tokens and _object_is_left(obj, state.image) == yes:
                return False
        return True

    def pick_object(self, state: SessionState) -> int:
        candidates = [o for o in state.objects if self._consistent(o, state)]
        pool = candidates or list(state.objects)
        return min(pool, key=lambda o: o.object_id).object_id


# ---------------------------------------------------------------------------
# session store (event sourcing)


@dataclass
class LiveSession:
    session_id: str
    game_id: int
    human_role: str
    state: SessionState
    question_budget: int
    last_event_at: float
    log_path: Path
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def questions_asked(self) -> int:
        return len(self.state.transcript)


def _event_from_dict(payload_type: str, payload: dict):
    if payload_type == "question":
        return AskQuestion(text=str(payload["text"]))
    if payload_type == "answer":
        return GiveAnswer(answer=Answer(payload["answer"]))
    if payload_type == "ready":
        return ReadyToGuess()
    if payload_type == "guess":
        return Guess(object_id=int(payload["object_id"]))
    raise ProtocolError(f"unknown event type {payload_type!r}")


# events each human role may submit
_ROLE_EVENTS = {
    ROLE_QUESTIONER: {"question", "ready", "guess"},
    ROLE_ORACLE: {"answer"},
}


class SessionStore:
    def __init__(
        self,
        games: Sequence[GameRecord],
        data_dir: str,
        oracle_agent: OracleAgent,
        questioner_agent: QuestionerAgent,
        question_budget: int = DEFAULT_QUESTION_BUDGET,
        idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
    ):
        if not games:
            raise ValueError("session store needs a non-empty game corpus")
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.oracle_agent = oracle_agent
        self.questioner_agent = questioner_agent
        self.question_budget = question_budget
        self.idle_timeout_s = idle_timeout_s
        # one context per image: its objects come from the first game seen
        self.images: Dict[int, GameRecord] = {}
        for game in games:
            self.images.setdefault(game.image.image_id, game)
        self.sessions: Dict[str, LiveSession] = {}
        self._replay_all()

    # -- persistence

    def _append(self, session: LiveSession, entry: dict) -> None:
        entry = {"ts": time.time(), **entry}
        with open(session.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay_all(self) -> None:
        for path in sorted(self.data_dir.glob("*.events.ndjson")):
            session = self._replay(path)
            self.sessions[session.session_id] = session

    def _replay(self, path: Path) -> LiveSession:
        lines = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        head = lines[0]
        if head["type"] != "create":
            raise ValueError(f"{path}: first event must be create")
        payload = head["payload"]
        game = game_from_dict(payload["game"])
        state = SessionState.new(game.image, game.objects, game.target_id)
        last_ts = head["ts"]
        for entry in lines[1:]:
            last_ts = entry["ts"]
            if entry["type"] == "timeout":
                state = abandon(state)
            else:
                state = apply_event(state, _event_from_dict(entry["type"], entry.get("payload", {})))
        return LiveSession(
            session_id=payload["session_id"],
            game_id=payload["game_id"],
            human_role=payload["human_role"],
            state=state,
            question_budget=payload.get("question_budget", self.question_budget),
            last_event_at=last_ts,
            log_path=path,
        )

    # -- lifecycle

    def create(
        self, human_role: str, image_id: Optional[int] = None, seed: Optional[int] = None
    ) -> LiveSession:
        if human_role not in (ROLE_QUESTIONER, ROLE_ORACLE):
            raise ValueError(f"unknown role {human_role!r}")
        import random as _random

        rng = _random.Random(seed)
        if image_id is None:
            image_id = rng.choice(sorted(self.images))
        if image_id not in self.images:
            raise NotFoundError(f"unknown image {image_id}")
        base = self.images[image_id]
        eligible = [o for o in base.objects if is_eligible_object(o)] or list(base.objects)
        target = rng.choice(sorted(eligible, key=lambda o: o.object_id))
        session_id = uuid.uuid4().hex
        game_id = max((s.game_id for s in self.sessions.values()), default=0) + 1
        skeleton = GameRecord(
            game_id=game_id,
            image=base.image,
            objects=base.objects,
            target_id=target.object_id,
        )
        session = LiveSession(
            session_id=session_id,
            game_id=game_id,
            human_role=human_role,
            state=SessionState.new(base.image, base.objects, target.object_id),
            question_budget=self.question_budget,
            last_event_at=time.time(),
            log_path=self.data_dir / f"{session_id}.events.ndjson",
        )
        self._append(
            session,
            {
                "type": "create",
                "actor": "system",
                "payload": {
                    "session_id": session_id,
                    "game_id": game_id,
                    "human_role": human_role,
                    "seed": seed,
                    "question_budget": session.question_budget,
                    "game": game_to_dict(skeleton),
                },
            },
        )
        self.sessions[session_id] = session
        if human_role == ROLE_ORACLE:
            self._agent_ask(session)
        return session

    def get(self, session_id: str) -> LiveSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id}")
        with session.lock:
            self._check_timeout(session)
        return session

    def post(self, session_id: str, event_type: str, payload: dict) -> LiveSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id}")
        with session.lock:
            self._check_timeout(session)
            if event_type not in _ROLE_EVENTS[session.human_role]:
                raise ProtocolError(
                    f"role {session.human_role} may not send {event_type!r} events"
                )
            event = _event_from_dict(event_type, payload)
            # the event is persisted before any agent reply is computed
            session.state = apply_event(session.state, event)
            self._append(session, {"type": event_type, "actor": "human", "payload": payload})
            session.last_event_at = time.time()
            self._drive_agents(session)
        return session

    # -- agent turns

    def _agent_apply(self, session: LiveSession, event_type: str, payload: dict, event) -> None:
        session.state = apply_event(session.state, event)
        self._append(session, {"type": event_type, "actor": "agent", "payload": payload})
        session.last_event_at = time.time()

    def _agent_ask(self, session: LiveSession) -> None:
        question = self.questioner_agent.next_question(session.state)
        self._agent_apply(session, "question", {"text": question}, AskQuestion(question))

    def _drive_agents(self, session: LiveSession) -> None:
        state = session.state
        if session.human_role == ROLE_QUESTIONER:
            if state.phase is Phase.AWAITING_ANSWER:
                question = state.transcript[-1].question
                answer = self.oracle_agent.answer(state, question)
                self._agent_apply(session, "answer", {"answer": answer.value}, GiveAnswer(answer))
        else:
            if state.phase is not Phase.QUESTIONING:
                return
            if state.answered_count < session.question_budget:
                self._agent_ask(session)
            else:
                self._agent_apply(session, "ready", {}, ReadyToGuess())
                object_id = self.questioner_agent.pick_object(session.state)
                self._agent_apply(session, "guess", {"object_id": object_id}, Guess(object_id))

    def _check_timeout(self, session: LiveSession) -> None:
        if session.state.phase is Phase.FINISHED:
            return
        if time.time() - session.last_event_at > self.idle_timeout_s:
            session.state = abandon(session.state)
            self._append(session, {"type": "timeout", "actor": "system", "payload": {}})

    # -- export

    def export_records(self, status: str = "finished") -> List[GameRecord]:
        records = []
        for session in sorted(self.sessions.values(), key=lambda s: s.game_id):
            if session.state.phase is not Phase.FINISHED:
                continue
            record = state_to_record(session.state, session.game_id)
            if status == "finished" and record.status is Status.INCOMPLETE:
                continue
            records.append(record)
        return records


# ---------------------------------------------------------------------------
# role-filtered views


def _object_view(obj: ObjectRef) -> dict:
    return {
        "object_id": obj.object_id,
        "category": obj.category_name,
        "category_id": obj.category_id,
        "bbox": list(obj.bbox),
        "area": obj.area,
    }


def public_state(session: LiveSession) -> dict:
    state = session.state
    view = {
        "session_id": session.session_id,
        "role": session.human_role,
        "phase": state.phase.value,
        "outcome": state.outcome.value if state.outcome else None,
        "question_budget": session.question_budget,
        "questions_asked": len(state.transcript),
        "image": {
            "image_id": state.image.image_id,
            "width": state.image.width,
            "height": state.image.height,
            "file_name": state.image.file_name,
        },
        "transcript": [
            {"question": e.question, "answer": e.answer.value if e.answer else None}
            for e in state.transcript
        ],
        "objects": [],
        "target_id": None,
        "guess_id": None,
    }
    reveal_objects = session.human_role == ROLE_ORACLE or state.phase in (
        Phase.GUESSING,
        Phase.FINISHED,
    )
    if reveal_objects:
        view["objects"] = [_object_view(o) for o in state.objects]
    if session.human_role == ROLE_ORACLE or state.phase is Phase.FINISHED:
        view["target_id"] = state.target_id
    if state.phase is Phase.FINISHED:
        view["guess_id"] = state.guess_id
    return view


# ---------------------------------------------------------------------------
# HTTP app


def build_store(config: ServiceConfig) -> SessionStore:
    from .data import parse_games

    if not config.corpus_path:
        raise ValueError("corpus_path is required")
    games = parse_games(config.corpus_path)
    if config.oracle_checkpoint:
        from .agents import OracleModel

        oracle_agent: OracleAgent = ModelOracleAgent(OracleModel.load(config.oracle_checkpoint))
    else:
        oracle_agent = ScriptedOracleAgent()
    if config.qgen_checkpoint and config.guesser_checkpoint:
        from .agents import GuesserModel, QGenModel

        questioner_agent: QuestionerAgent = ModelQuestionerAgent(
            QGenModel.load(config.qgen_checkpoint),
            GuesserModel.load(config.guesser_checkpoint),
            beam_width=config.beam_width,
        )
    else:
        questioner_agent = ScriptedQuestionerAgent()
    return SessionStore(
        games,
        config.data_dir,
        oracle_agent,
        questioner_agent,
        question_budget=config.question_budget,
        idle_timeout_s=config.idle_timeout_s,
    )


class CreateSessionRequest(BaseModel):
    role: str
    image_id: Optional[int] = None
    seed: Optional[int] = None


class EventRequest(BaseModel):
    type: str
    payload: dict = {}


def create_app(
    store: SessionStore,
    static_dir: Optional[str] = None,
    images_dir: Optional[str] = None,
):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import PlainTextResponse

    app = FastAPI(title="guesswhat play service")

    @app.post("/api/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            session = store.create(req.role, req.image_id, req.seed)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"session_id": session.session_id, "state": public_state(session)}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return public_state(store.get(session_id))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/sessions/{session_id}/events")
    def post_event(session_id: str, req: EventRequest):
        try:
            session = store.post(session_id, req.type, req.payload)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ProtocolError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad payload: {exc}")
        return public_state(session)

    @app.get("/api/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        try:
            session = store.get(session_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return [
            {"question": e.question, "answer": e.answer.value if e.answer else None}
            for e in session.state.transcript
        ]

    @app.get("/api/export")
    def export(status: str = "finished"):
        import io

        from .data import write_games

        buf = io.StringIO()
        write_games(store.export_records(status), buf)
        return PlainTextResponse(buf.getvalue(), media_type="application/x-ndjson")

    if images_dir and Path(images_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/images", StaticFiles(directory=images_dir), name="images")
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
