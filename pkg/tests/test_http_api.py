"""HTTP layer: endpoint payloads, command round-trips, SSE streaming,
static serving, CORS, and bind failures."""

from __future__ import annotations

import http.client
import json
import socket
import time

import numpy as np
import pytest

from softtwin.calibration import CubicFit
from softtwin.controller import ControllerServer, StartupError
from softtwin.http_api import TwinApiServer
from softtwin.twin import TwinConfig, TwinEngine

LINEAR_FIT = CubicFit(intercept=np.zeros(4),
                      B=np.tile([1.0, 0.0, 0.0], (4, 1)),
                      valid_range=(-90.0, 120.0))


@pytest.fixture()
def stack():
    controller = ControllerServer("127.0.0.1", 0, tau=0.05, tick_hz=200.0)
    controller.start()
    host, port = controller.address
    engine = TwinEngine(TwinConfig(fit=LINEAR_FIT, host=host, port=port,
                                   poll_hz=100.0))
    engine.start()
    api = TwinApiServer(engine, "127.0.0.1", 0)
    api.start()
    deadline = time.monotonic() + 2.0
    while engine.state() is None and time.monotonic() < deadline:
        time.sleep(0.01)
    yield api, engine, controller
    api.stop()
    engine.stop()
    controller.stop()


def request(api: TwinApiServer, method: str, path: str, body: dict | None = None,
            raw_body: bytes | None = None):
    host, port = api.address
    conn = http.client.HTTPConnection(host, port, timeout=5.0)
    try:
        payload = raw_body
        headers = {}
        if body is not None:
            payload = json.dumps(body).encode()
        if payload is not None:
            headers["Content-Type"] = "application/json"
        conn.request(method, path, body=payload, headers=headers)
        resp = conn.getresponse()
        data = resp.read()
        content_type = resp.getheader("Content-Type", "")
        parsed = json.loads(data) if content_type.startswith("application/json") else data
        return resp.status, parsed, dict(resp.getheaders())
    finally:
        conn.close()


def test_state_endpoint_reports_snapshot(stack):
    api, engine, _ = stack
    status, payload, headers = request(api, "GET", "/state")
    assert status == 200
    assert headers["Access-Control-Allow-Origin"] == "*"
    assert payload["link_ok"] is True
    assert len(payload["thetas_deg"]) == 4
    assert len(payload["end_pose"]) == 4
    assert payload["tip_position"][2] > 0


def test_state_before_first_poll_is_503():
    engine = TwinEngine(TwinConfig(fit=LINEAR_FIT))  # never started
    with TwinApiServer(engine, "127.0.0.1", 0) as api:
        status, payload, _ = request(api, "GET", "/state")
        assert status == 503
        assert "no state" in payload["error"]


def test_config_endpoint(stack):
    api, engine, _ = stack
    status, payload, _ = request(api, "GET", "/config")
    assert status == 200
    assert payload["poll_hz"] == 100.0
    assert payload["angles"] == "cumulative"
    assert payload["lengths_mm"] == [14.0, 14.0, 12.32, 15.39]
    assert payload["controller"]["port"] == engine.config.port


def test_health_endpoint(stack):
    api, _, _ = stack
    status, payload, _ = request(api, "GET", "/health")
    assert status == 200
    assert payload["ok"] is True
    assert payload["link_ok"] is True
    assert payload["states_published"] >= 1


def test_command_round_trip_moves_pressure(stack):
    api, engine, _ = stack
    status, ack, _ = request(api, "POST", "/command",
                             {"type": "set_pos_target", "value": 80.0})
    assert status == 200 and ack["ok"] is True
    assert ack["register"] == 2 and ack["raw_value"] == 800
    status, ack, _ = request(api, "POST", "/command",
                             {"type": "set_pos_trigger", "value": True})
    assert status == 200 and ack["ok"] is True
    deadline = time.monotonic() + 3.0
    while time.monotonic() < deadline:
        state = engine.state()
        if state and abs(state.pressure_kpa - 80.0) < 0.5:
            break
        time.sleep(0.02)
    else:
        raise AssertionError("pressure never reached the commanded target")


@pytest.mark.parametrize("body", [
    {"type": "set_pos_target", "value": 999.0},
    {"type": "warp", "value": 1.0},
    {"type": "set_pos_target"},
    {"value": 10.0},
])
def test_command_validation_maps_to_400(stack, body):
    api, _, _ = stack
    status, payload, _ = request(api, "POST", "/command", body)
    assert status == 400
    assert "error" in payload


def test_command_malformed_json_is_400(stack):
    api, _, _ = stack
    status, payload, _ = request(api, "POST", "/command",
                                 raw_body=b"{not json")
    assert status == 400


def test_command_empty_body_is_400(stack):
    api, _, _ = stack
    status, payload, _ = request(api, "POST", "/command")
    assert status == 400
    assert "body" in payload["error"]


def test_command_with_link_down_is_503():
    engine = TwinEngine(TwinConfig(fit=LINEAR_FIT))  # no controller behind it
    with TwinApiServer(engine, "127.0.0.1", 0) as api:
        status, payload, _ = request(api, "POST", "/command",
                                     {"type": "set_pos_target", "value": 10.0})
        assert status == 503
        assert "unavailable" in payload["error"]


def test_post_to_unknown_path_is_404(stack):
    api, _, _ = stack
    status, _, _ = request(api, "POST", "/nope", {"type": "x", "value": 1})
    assert status == 404


def test_options_preflight(stack):
    api, _, _ = stack
    status, _, headers = request(api, "OPTIONS", "/command")
    assert status == 204
    assert "POST" in headers["Access-Control-Allow-Methods"]
    assert headers["Access-Control-Allow-Origin"] == "*"


def test_stream_delivers_sequential_states(stack):
    api, _, _ = stack
    host, port = api.address
    conn = http.client.HTTPConnection(host, port, timeout=5.0)
    try:
        conn.request("GET", "/stream", headers={"Accept": "text/event-stream"})
        resp = conn.getresponse()
        assert resp.status == 200
        assert resp.getheader("Content-Type") == "text/event-stream"
        events = []
        deadline = time.monotonic() + 3.0
        while len(events) < 5 and time.monotonic() < deadline:
            line = resp.fp.readline()
            if line.startswith(b"data: "):
                events.append(json.loads(line[len(b"data: "):]))
        assert len(events) == 5
        stamps = [e["timestamp_ms"] for e in events]
        assert all(b > a for a, b in zip(stamps, stamps[1:]))
        assert all(len(e["tip_position"]) == 3 for e in events)
    finally:
        conn.close()


def test_stream_sends_keepalives_when_idle():
    engine = TwinEngine(TwinConfig(fit=LINEAR_FIT))  # nothing publishing
    with TwinApiServer(engine, "127.0.0.1", 0) as api:
        host, port = api.address
        conn = http.client.HTTPConnection(host, port, timeout=5.0)
        try:
            conn.request("GET", "/stream")
            resp = conn.getresponse()
            line = resp.fp.readline()
            assert line.startswith(b":")
        finally:
            conn.close()


def test_static_files_served(stack, tmp_path):
    api, engine, controller = stack
    (tmp_path / "index.html").write_text("<h1>panel</h1>")
    (tmp_path / "app.js").write_text("console.log(1)")
    static_api = TwinApiServer(engine, "127.0.0.1", 0,
                               static_dir=str(tmp_path))
    with static_api:
        status, body, headers = request(static_api, "GET", "/")
        assert status == 200
        assert b"panel" in body
        assert headers["Content-Type"].startswith("text/html")
        status, body, headers = request(static_api, "GET", "/app.js")
        assert status == 200
        assert headers["Content-Type"].startswith(("text/javascript",
                                                   "application/javascript"))


def test_static_traversal_blocked(stack, tmp_path):
    api, engine, _ = stack
    inner = tmp_path / "ui"
    inner.mkdir()
    (inner / "index.html").write_text("ok")
    (tmp_path / "secret.txt").write_text("keep out")
    with TwinApiServer(engine, "127.0.0.1", 0, static_dir=str(inner)) as sapi:
        status, _, _ = request(sapi, "GET", "/../secret.txt")
        assert status == 404
        status, _, _ = request(sapi, "GET", "/%2e%2e/secret.txt")
        assert status == 404


def test_placeholder_page_without_static_dir(stack):
    api, _, _ = stack
    status, body, headers = request(api, "GET", "/")
    assert status == 200
    assert headers["Content-Type"].startswith("text/html")
    assert b"/state" in body
    status, _, _ = request(api, "GET", "/missing.js")
    assert status == 404


def test_port_conflict_raises_startup_error(stack):
    api, engine, _ = stack
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    blocker.listen(1)
    port = blocker.getsockname()[1]
    try:
        with pytest.raises(StartupError, match="cannot bind"):
            TwinApiServer(engine, "127.0.0.1", port).start()
    finally:
        blocker.close()
