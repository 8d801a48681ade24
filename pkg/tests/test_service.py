import json

import pytest
from fastapi.testclient import TestClient

from ticker.decoder import Dictionary
from ticker.model import EngineConfig, Hypers, Params
from ticker.service import create_app, load_events, replay_events


@pytest.fixture
def demo_dictionary():
    return Dictionary.from_counts(
        [("is_", 3), ("in_", 1), ("the_", 10), ("hello_", 2), ("go_", 2)]
    )


@pytest.fixture
def client(tmp_path, demo_dictionary):
    app = create_app(
        dictionary=demo_dictionary,
        config=EngineConfig(),
        hypers=Hypers(),
        data_dir=str(tmp_path / "sessions"),
        adapt=False,
    )
    with TestClient(app) as c:
        c.data_dir = tmp_path / "sessions"
        yield c


def make_session(client, **config):
    body = {"config": config} if config else None
    response = client.post("/sessions", json=body)
    assert response.status_code == 200, response.text
    return response.json()


def clicks_for(schedule_payload, letter, delta=0.1):
    onsets = [
        s["onset"] for s in schedule_payload["slots"] if s["letter"] == letter
    ]
    return sorted(t + delta for t in onsets)


class TestSessionLifecycle:
    def test_create_returns_schedule_and_priors(self, client):
        data = make_session(client)
        assert data["schedule"]["channels"] == 5
        assert len(data["schedule"]["slots"]) == 56
        state = client.get(f"/sessions/{data['session_id']}/state").json()
        assert state["k"] == 0
        assert state["text"] == ""
        top = dict(tuple(x) for x in state["top"])
        assert top["the_"] == pytest.approx(10 / 18)

    def test_sessions_are_independent(self, client):
        a = make_session(client)["session_id"]
        b = make_session(client)["session_id"]
        client.post(f"/sessions/{a}/clicks", json={"t": 0.5})
        sa = client.get(f"/sessions/{a}/state").json()
        sb = client.get(f"/sessions/{b}/state").json()
        assert sa["open_clicks"] and not sb["open_clicks"]

    def test_invalid_config_rejected(self, client):
        response = client.post(
            "/sessions", json={"config": {"selection_threshold": 1.5}}
        )
        assert response.status_code == 422
        response = client.post("/sessions", json={"config": {"bogus": 1}})
        assert response.status_code == 422

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/state").status_code == 404
        assert client.post("/sessions/nope/clicks", json={"t": 0.1}).status_code == 404


class TestClicks:
    def test_click_acknowledged_with_count(self, client):
        sid = make_session(client)["session_id"]
        response = client.post(f"/sessions/{sid}/clicks", json={"t": 0.31})
        assert response.json()["count"] == 1

    def test_click_after_window_rejected(self, client):
        data = make_session(client)
        sid = data["session_id"]
        too_late = data["window_T"] + 0.01
        response = client.post(f"/sessions/{sid}/clicks", json={"t": too_late})
        assert response.status_code == 422

    def test_duplicate_timestamps_become_distinct(self, client):
        sid = make_session(client)["session_id"]
        client.post(f"/sessions/{sid}/clicks", json={"t": 0.5})
        response = client.post(f"/sessions/{sid}/clicks", json={"t": 0.5})
        assert response.json()["count"] == 2
        assert response.json()["t"] == pytest.approx(0.5 + 1e-6)


class TestCloseWindow:
    def test_zero_clicks_is_noop(self, client):
        sid = make_session(client)["session_id"]
        event = client.post(f"/sessions/{sid}/close-window").json()["event"]
        assert event["outcome"] == "noop"
        assert event["k"] == 0

    def test_update_then_selection(self, client):
        data = make_session(client)
        sid = data["session_id"]
        selected = None
        for _ in range(8):
            for t in clicks_for(data["schedule"], "g"):
                client.post(f"/sessions/{sid}/clicks", json={"t": t})
            event = client.post(f"/sessions/{sid}/close-window").json()["event"]
            assert event["outcome"] in ("update", "selection")
            if event["outcome"] == "selection":
                selected = event["selected"]
                break
            for t in clicks_for(data["schedule"], "o"):
                client.post(f"/sessions/{sid}/clicks", json={"t": t})
            event = client.post(f"/sessions/{sid}/close-window").json()["event"]
            if event["outcome"] == "selection":
                selected = event["selected"]
                break
        assert selected == "go_"
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["text"] == "go_"
        assert state["k"] == 0

    def test_selection_event_carries_params_snapshot(self, client):
        data = make_session(client)
        sid = data["session_id"]
        event = client.post(f"/sessions/{sid}/close-window").json()["event"]
        assert set(event["params"]) == {"delta", "sigma", "lam", "f"}


class TestEventStream:
    def test_cursor_resume_without_gaps(self, client):
        data = make_session(client)
        sid = data["session_id"]
        client.post(f"/sessions/{sid}/clicks", json={"t": 0.4})
        client.post(f"/sessions/{sid}/close-window")
        first = client.get(f"/sessions/{sid}/events", params={"cursor": 0}).json()
        seqs = [e["seq"] for e in first["events"]]
        assert seqs == list(range(1, len(seqs) + 1))
        client.post(f"/sessions/{sid}/clicks", json={"t": 0.6})
        more = client.get(
            f"/sessions/{sid}/events", params={"cursor": first["cursor"]}
        ).json()
        assert [e["seq"] for e in more["events"]] == [first["cursor"] + 1]

    def test_two_consumers_identical_streams(self, client):
        data = make_session(client)
        sid = data["session_id"]
        client.post(f"/sessions/{sid}/clicks", json={"t": 0.4})
        client.post(f"/sessions/{sid}/close-window")
        a = client.get(f"/sessions/{sid}/events", params={"cursor": 0}).json()
        b = client.get(f"/sessions/{sid}/events", params={"cursor": 0}).json()
        assert a == b

    def test_every_event_exactly_once(self, client):
        data = make_session(client)
        sid = data["session_id"]
        for t in (0.2, 0.4, 0.9):
            client.post(f"/sessions/{sid}/clicks", json={"t": t})
        client.post(f"/sessions/{sid}/close-window")
        collected = []
        cursor = 0
        while True:
            chunk = client.get(
                f"/sessions/{sid}/events", params={"cursor": cursor}
            ).json()
            if not chunk["events"]:
                break
            collected.extend(chunk["events"])
            cursor = chunk["cursor"]
        assert [e["seq"] for e in collected] == list(range(1, len(collected) + 1))


class TestReplay:
    def _drive(self, client, data):
        sid = data["session_id"]
        for letter in ("g", "o", "g", "o"):
            for t in clicks_for(data["schedule"], letter):
                client.post(f"/sessions/{sid}/clicks", json={"t": t})
            event = client.post(f"/sessions/{sid}/close-window").json()["event"]
            if event["outcome"] == "selection":
                break
        return sid

    def test_log_replay_reproduces_state(self, client, demo_dictionary):
        data = make_session(client)
        sid = self._drive(client, data)
        live = client.get(f"/sessions/{sid}/state").json()
        events = load_events(client.data_dir / f"{sid}.jsonl")
        engine = replay_events(events, demo_dictionary, adapt=False)
        assert "".join(engine.text) == live["text"]
        assert engine.state.k == live["k"]
        assert engine.params.as_dict() == live["params"]
        replayed_top = [[w, p] for w, p in engine.top_words(5)]
        assert [w for w, _ in replayed_top] == [w for w, _ in live["top"]]
        assert [p for _, p in replayed_top] == pytest.approx(
            [p for _, p in live["top"]]
        )

    def test_service_equals_library_decoding(self, client, demo_dictionary):
        # feeding the recorded click windows to a fresh engine offline gives
        # the same selections the service made
        from ticker.engine import TickerEngine
        from ticker.model import ClickEnsemble

        data = make_session(client)
        sid = self._drive(client, data)
        events = load_events(client.data_dir / f"{sid}.jsonl")
        engine = TickerEngine(
            EngineConfig(), Hypers(),
            __import__("ticker.schedule", fromlist=["build_default_schedule"])
            .build_default_schedule(5),
            demo_dictionary, adapt=False,
        )
        offline_selections = []
        for event in events:
            if event["type"] == "window_closed":
                ens = ClickEnsemble(
                    times=tuple(event["clicks"]), window_T=engine.window_T
                )
                outcome = engine.process_window(ens)
                if outcome.selected:
                    offline_selections.append(outcome.selected)
        online_selections = [
            e["selected"] for e in events
            if e["type"] == "window_closed" and e["outcome"] == "selection"
        ]
        assert offline_selections == online_selections == ["go_"]
