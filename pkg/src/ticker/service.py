"""Local HTTP service for the interactive demo.

Plain JSON API over one engine per session. Click timestamps are
window-relative seconds supplied by the client, matching the schedule the
client rendered. Every session appends its events to a newline-delimited log
that replays to the exact same state.
"""
from __future__ import annotations

import asyncio
import itertools
import json
import threading
import uuid
from dataclasses import asdict, fields
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .decoder import Dictionary, load_dictionary
from .engine import TickerEngine, WindowOutcome
from .model import ClickEnsemble, ConfigError, EngineConfig, Hypers
from .schedule import Schedule, build_default_schedule, schedule_to_text

TOP_N = 5


class SessionHandle:
    """One live session: engine, open-window clicks, ordered event log."""

    def __init__(self, sid: str, engine: TickerEngine, log_path: Path | None):
        self.sid = sid
        self.engine = engine
        self.lock = threading.Lock()
        self.clicks: list[float] = []
        self.window_index = 0
        self.events: list[dict] = []
        self.log_path = log_path

    def emit(self, kind: str, **payload) -> dict:
        event = {"seq": len(self.events) + 1, "type": kind, **payload}
        self.events.append(event)
        if self.log_path is not None:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")
        return event


def _schedule_payload(schedule: Schedule) -> dict:
    A = len(schedule.alphabet)
    slots = []
    for s in range(A * schedule.R):
        r, i = divmod(s, A)
        slots.append({
            "index": s,
            "repetition": r,
            "letter": schedule.orders[r][i],
            "channel": schedule.channel_map[s],
            "onset": schedule.onsets[s],
        })
    return {
        "alphabet": schedule.alphabet.symbols,
        "channels": schedule.channels,
        "repetitions": schedule.R,
        "slot_interval": schedule.slot_interval,
        "total_T": schedule.total_T,
        "slots": slots,
    }


def _outcome_payload(outcome: WindowOutcome, engine: TickerEngine) -> dict:
    return {
        "outcome": outcome.kind,
        "k": outcome.k,
        "top": [[w, p] for w, p in outcome.top],
        "selected": outcome.selected,
        "text": "".join(engine.text),
        "params": engine.params.as_dict(),
    }


class CreateSessionBody(BaseModel):
    config: dict | None = None


class ClickBody(BaseModel):
    t: float


def create_app(
    dictionary: Dictionary | None = None,
    dictionary_path: str | None = None,
    config: EngineConfig | None = None,
    hypers: Hypers | None = None,
    data_dir: str | None = None,
    static_dir: str | None = None,
    adapt: bool = True,
) -> FastAPI:
    if dictionary is None:
        if dictionary_path is None:
            dictionary_path = str(Path(__file__).parent / "data" / "words_en.txt")
        dictionary = load_dictionary(dictionary_path)
    base_config = config or EngineConfig()
    base_hypers = hypers or Hypers()
    root = Path(data_dir) if data_dir else None
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="ticker session service")
    sessions: dict[str, SessionHandle] = {}
    app.state.sessions = sessions

    def get_session(sid: str) -> SessionHandle:
        handle = sessions.get(sid)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return handle

    @app.post("/sessions")
    def create_session(body: CreateSessionBody | None = None):
        overrides = (body.config if body else None) or {}
        allowed = {f.name for f in fields(EngineConfig)}
        unknown = set(overrides) - allowed
        if unknown:
            raise HTTPException(status_code=422, detail=f"unknown config keys {sorted(unknown)}")
        try:
            cfg = EngineConfig(**{**{f.name: getattr(base_config, f.name)
                                     for f in fields(EngineConfig)}, **overrides})
            schedule = build_default_schedule(cfg.channels, cfg.repetitions, cfg.slot_interval)
            engine = TickerEngine(cfg, base_hypers, schedule, dictionary, adapt=adapt)
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        sid = uuid.uuid4().hex[:12]
        log_path = root / f"{sid}.jsonl" if root is not None else None
        handle = SessionHandle(sid, engine, log_path)
        sessions[sid] = handle
        handle.emit(
            "session_created",
            config={f.name: getattr(cfg, f.name) for f in fields(EngineConfig)},
            window_T=engine.window_T,
            top=[[w, p] for w, p in engine.top_words(TOP_N)],
        )
        return {
            "session_id": sid,
            "window_T": engine.window_T,
            "schedule": _schedule_payload(schedule),
        }

    @app.get("/sessions/{sid}/schedule")
    def get_schedule(sid: str):
        handle = get_session(sid)
        return _schedule_payload(handle.engine.schedule)

    @app.get("/sessions/{sid}/schedule.txt", response_class=PlainTextResponse)
    def get_schedule_text(sid: str):
        return schedule_to_text(get_session(sid).engine.schedule)

    @app.post("/sessions/{sid}/clicks")
    def post_click(sid: str, body: ClickBody):
        handle = get_session(sid)
        with handle.lock:
            t = float(body.t)
            if not 0.0 <= t <= handle.engine.window_T:
                raise HTTPException(
                    status_code=422,
                    detail=f"click at {t} outside window [0, {handle.engine.window_T}]",
                )
            # identical timestamps are distinct events; keep strict ordering
            if handle.clicks and t <= handle.clicks[-1]:
                t = handle.clicks[-1] + 1e-6
            handle.clicks.append(t)
            handle.emit("click", t=t, window=handle.window_index)
            return {"count": len(handle.clicks), "t": t}

    @app.post("/sessions/{sid}/close-window")
    def close_window(sid: str):
        handle = get_session(sid)
        with handle.lock:
            engine = handle.engine
            ensemble = ClickEnsemble(times=tuple(handle.clicks), window_T=engine.window_T)
            outcome = engine.process_window(ensemble)
            handle.clicks = []
            handle.window_index += 1
            event = handle.emit(
                "window_closed",
                window=handle.window_index - 1,
                clicks=list(ensemble.times),
                **_outcome_payload(outcome, engine),
            )
            return {"event": event}

    @app.get("/sessions/{sid}/events")
    async def get_events(sid: str, cursor: int = 0, wait: float = 0.0):
        handle = get_session(sid)
        deadline = asyncio.get_event_loop().time() + wait
        while True:
            fresh = [e for e in handle.events if e["seq"] > cursor]
            if fresh or asyncio.get_event_loop().time() >= deadline:
                return {
                    "events": fresh,
                    "cursor": fresh[-1]["seq"] if fresh else cursor,
                }
            await asyncio.sleep(0.05)

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        handle = get_session(sid)
        engine = handle.engine
        return {
            "k": engine.state.k,
            "top": [[w, p] for w, p in engine.top_words(TOP_N)],
            "text": "".join(engine.text),
            "params": engine.params.as_dict(),
            "window_index": handle.window_index,
            "open_clicks": list(handle.clicks),
        }

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="demo")

    return app


def replay_events(
    events: list[dict],
    dictionary: Dictionary,
    hypers: Hypers | None = None,
    adapt: bool = True,
) -> TickerEngine:
    """Rebuild an engine by re-applying a session's input events.

    Derived payloads recorded in the log are cross-checked against the replay;
    a mismatch raises, so a clean return certifies the log is reproducible.
    """
    hypers = hypers or Hypers()
    created = next(e for e in events if e["type"] == "session_created")
    cfg = EngineConfig(**created["config"])
    schedule = build_default_schedule(cfg.channels, cfg.repetitions, cfg.slot_interval)
    engine = TickerEngine(cfg, hypers, schedule, dictionary, adapt=adapt)
    clicks: list[float] = []
    for event in events:
        if event["type"] == "click":
            clicks.append(event["t"])
        elif event["type"] == "window_closed":
            ensemble = ClickEnsemble(times=tuple(clicks), window_T=engine.window_T)
            outcome = engine.process_window(ensemble)
            clicks = []
            recorded = {
                "outcome": event["outcome"],
                "selected": event["selected"],
                "text": event["text"],
            }
            replayed = {
                "outcome": outcome.kind,
                "selected": outcome.selected,
                "text": "".join(engine.text),
            }
            if recorded != replayed:
                raise ValueError(f"replay diverged: {recorded} != {replayed}")
    return engine


def load_events(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
