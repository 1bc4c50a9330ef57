"""HTTP API: dashboard data, session stepping, saving traces, checks."""

from __future__ import annotations

import threading

import pytest
from fastapi.testclient import TestClient

from vobs.engine import enabled
from vobs.manager import Ledger, check_vo
from vobs.project import load_project
from vobs.server import create_app


@pytest.fixture
def lighting_client(copy_corpus):
    root = copy_corpus("lighting")
    app = create_app(root, clock=lambda: 1_700_000_000.0)
    return TestClient(app), root


@pytest.fixture
def basic_client(copy_corpus):
    root = copy_corpus("basic")
    app = create_app(root, clock=lambda: 1_700_000_000.0)
    return TestClient(app), root


class TestProjectEndpoints:
    def test_project_summary(self, lighting_client):
        client, _ = lighting_client
        data = client.get("/api/project").json()
        assert data["name"] == "lighting"
        assert len(data["models"]) == 5
        assert len(data["edges"]) == 4
        assert len(data["vos"]) == 12
        assert data["validated"] is False
        generic = {m["name"]: m["generic"] for m in data["models"]}
        assert generic["LightGen"] is True and generic["Light3"] is False

    def test_parameter_domains_served(self, lighting_client):
        client, _ = lighting_client
        data = client.get("/api/project").json()
        power = next(m for m in data["models"] if m["name"] == "PowerView")
        adjust = power["events"][0]
        assert adjust["params"][0]["domain"] == [False, True]

    def test_vo_listing_and_detail(self, lighting_client):
        client, _ = lighting_client
        vos = client.get("/api/vos").json()
        assert {v["id"] for v in vos} >= {"inv_light3", "manual_timer_inspect"}
        detail = client.get("/api/vos/ltl_light0_sane").json()
        assert detail["formula"] == "G {on = false or on = true}"
        assert detail["record"]["status"] == "unchecked"
        assert client.get("/api/vos/nosuch").status_code == 404

    def test_error_body_shape(self, lighting_client):
        client, _ = lighting_client
        body = client.get("/api/vos/nosuch").json()
        assert set(body) == {"error", "detail"}


class TestChecks:
    def test_check_discharges(self, basic_client):
        client, root = basic_client
        body = client.post("/api/vos/ltl_switch_sane/check").json()
        assert body["status"] == "discharged"
        ledger = Ledger.load(load_project(root).ledger_path)
        assert ledger.get("ltl_switch_sane").status == "discharged"

    def test_failing_check_has_evidence(self, basic_client):
        client, _ = basic_client
        body = client.post("/api/vos/dead_counter/check").json()
        assert body["status"] == "failed"
        assert "{c=3}" in body["evidence"]

    def test_manual_check_is_conflict(self, lighting_client):
        client, _ = lighting_client
        response = client.post("/api/vos/manual_timer_inspect/check")
        assert response.status_code == 409
        assert "discharge" in response.json()["detail"]

    def test_record_matches_direct_check(self, basic_client, copy_corpus):
        client, _ = basic_client
        api = client.post("/api/vos/dead_counter/check").json()
        direct = check_vo(load_project(copy_corpus("basic", "basic2")),
                          "dead_counter", clock=lambda: 1_700_000_000.0)
        want = direct.to_json()
        assert {k: v for k, v in api.items() if k != "timestamp"} == \
            {k: v for k, v in want.items() if k != "timestamp"}

    def test_budget_overrun_reports_inconclusive(self, copy_corpus, monkeypatch):
        import time as time_mod
        import vobs.server as server_mod

        def slow_check(*args, **kwargs):
            time_mod.sleep(0.5)

        monkeypatch.setattr(server_mod, "check_vo", slow_check)
        root = copy_corpus("basic")
        client = TestClient(create_app(root, check_budget=0.05))
        body = client.post("/api/vos/dead_counter/check").json()
        assert body["status"] == "failed"
        assert body["evidence"] == "inconclusive: budget"

    def test_discharge_manual(self, lighting_client):
        client, _ = lighting_client
        body = client.post("/api/vos/manual_timer_inspect/discharge",
                           json={"note": "animation matches storyboard",
                                 "actor": "alex"}).json()
        assert body["status"] == "discharged"
        assert body["via"] == "manual"
        assert body["actor"] == "alex"

    def test_discharge_requires_note(self, lighting_client):
        client, _ = lighting_client
        response = client.post("/api/vos/manual_timer_inspect/discharge",
                               json={"note": " ", "actor": "alex"})
        assert response.status_code == 400

    def test_discharge_non_manual_conflicts(self, lighting_client):
        client, _ = lighting_client
        response = client.post("/api/vos/inv_light3/discharge",
                               json={"note": "n", "actor": "a"})
        assert response.status_code == 409


class TestSessions:
    def test_create_and_view(self, basic_client):
        client, _ = basic_client
        view = client.post("/api/sessions", json={"machine": "Switch"}).json()
        assert view["state"] == {"on": False}
        assert [e["label"] for e in view["enabled"]] == ["turn_on"]
        assert view["history_length"] == 0

    def test_unknown_machine_404(self, basic_client):
        client, _ = basic_client
        assert client.post("/api/sessions",
                           json={"machine": "Ghost"}).status_code == 404

    def test_generic_machine_409(self, lighting_client):
        client, _ = lighting_client
        response = client.post("/api/sessions", json={"machine": "LightGen"})
        assert response.status_code == 409
        assert "unbound constants" in response.json()["detail"]

    def test_step_and_enabled_consistency(self, basic_client, switch):
        client, _ = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        view = client.post(f"/api/sessions/{sid}/step",
                           json={"event": "turn_on", "params": {}}).json()
        assert view["state"] == {"on": True}
        assert [e["label"] for e in view["enabled"]] == ["turn_off"]
        fresh = [str(lb) for lb in enabled(switch, {"on": True})]
        assert [e["label"] for e in view["enabled"]] == fresh

    def test_disabled_step_conflict_lists_enabled(self, basic_client):
        client, _ = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        client.post(f"/api/sessions/{sid}/step",
                    json={"event": "turn_on", "params": {}})
        response = client.post(f"/api/sessions/{sid}/step",
                               json={"event": "turn_on", "params": {}})
        assert response.status_code == 409
        assert response.json()["enabled"] == ["turn_off"]

    def test_parameter_validation(self, lighting_client):
        client, _ = lighting_client
        sid = client.post("/api/sessions",
                          json={"machine": "PowerView"}).json()["session"]
        ok = client.post(f"/api/sessions/{sid}/step",
                         json={"event": "adjust", "params": {"h": True}})
        assert ok.status_code == 200
        bad = client.post(f"/api/sessions/{sid}/step",
                          json={"event": "adjust", "params": {"h": 5}})
        assert bad.status_code == 400
        missing = client.post(f"/api/sessions/{sid}/step",
                              json={"event": "adjust", "params": {}})
        assert missing.status_code == 400

    def test_out_of_range_parameter(self, lighting_client):
        client, _ = lighting_client
        sid = client.post("/api/sessions",
                          json={"machine": "Light3"}).json()["session"]
        client.post(f"/api/sessions/{sid}/step",
                    json={"event": "turn_on", "params": {}})
        response = client.post(f"/api/sessions/{sid}/step",
                               json={"event": "brighten", "params": {}})
        assert response.status_code == 200

    def test_undo(self, basic_client):
        client, _ = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        client.post(f"/api/sessions/{sid}/step",
                    json={"event": "turn_on", "params": {}})
        view = client.post(f"/api/sessions/{sid}/undo").json()
        assert view["state"] == {"on": False}
        assert view["history_length"] == 0

    def test_undo_at_start_conflicts(self, basic_client):
        client, _ = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        assert client.post(f"/api/sessions/{sid}/undo").status_code == 409

    def test_step_step_undo_history(self, basic_client):
        client, _ = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        client.post(f"/api/sessions/{sid}/step", json={"event": "turn_on", "params": {}})
        client.post(f"/api/sessions/{sid}/step", json={"event": "turn_off", "params": {}})
        view = client.post(f"/api/sessions/{sid}/undo").json()
        assert view["history_length"] == 1
        assert view["history"][0]["event"] == "turn_on"

    def test_session_isolation(self, basic_client):
        client, _ = basic_client
        a = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        b = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        client.post(f"/api/sessions/{a}/step", json={"event": "turn_on", "params": {}})
        view_b = client.get(f"/api/sessions/{b}").json()
        assert view_b["state"] == {"on": False}
        assert view_b["history_length"] == 0

    def test_expiry(self, copy_corpus):
        now = [1_700_000_000.0]
        client = TestClient(create_app(copy_corpus("basic"), clock=lambda: now[0]))
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        now[0] += 3601
        assert client.get(f"/api/sessions/{sid}").status_code == 404


class TestSaveTrace:
    def test_save_writes_replayable_trace(self, basic_client):
        client, root = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        client.post(f"/api/sessions/{sid}/step", json={"event": "turn_on", "params": {}})
        client.post(f"/api/sessions/{sid}/step", json={"event": "turn_off", "params": {}})
        body = client.post(f"/api/sessions/{sid}/save",
                           json={"name": "smoke2", "register_as_vo": False}).json()
        text = (root / body["trace_path"]).read_text()
        assert text.count("step ") == 2
        from vobs.traces import parse_trace, replay_trace
        project = load_project(root)
        assert replay_trace(project.machines["Switch"], parse_trace(text)).passed

    def test_register_as_vo(self, basic_client):
        client, root = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        client.post(f"/api/sessions/{sid}/step", json={"event": "turn_on", "params": {}})
        body = client.post(f"/api/sessions/{sid}/save",
                           json={"name": "reg", "register_as_vo": True,
                                 "requirement_tag": "REQ-NEW"}).json()
        assert body["vo_id"] == "trace_reg"
        vos = client.get("/api/vos").json()
        new = next(v for v in vos if v["id"] == "trace_reg")
        assert new["record"]["status"] == "unchecked"
        assert new["target"] == "Switch"
        # and the new VO is checkable
        check = client.post("/api/vos/trace_reg/check").json()
        assert check["status"] == "discharged"

    def test_name_collision(self, basic_client):
        client, _ = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        client.post(f"/api/sessions/{sid}/step", json={"event": "turn_on", "params": {}})
        first = client.post(f"/api/sessions/{sid}/save",
                            json={"name": "dup", "register_as_vo": False})
        assert first.status_code == 200
        second = client.post(f"/api/sessions/{sid}/save",
                             json={"name": "dup", "register_as_vo": False})
        assert second.status_code == 409

    def test_empty_history_rejected(self, basic_client):
        client, _ = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        response = client.post(f"/api/sessions/{sid}/save",
                               json={"name": "empty", "register_as_vo": False})
        assert response.status_code == 409

    def test_bad_name_rejected(self, basic_client):
        client, _ = basic_client
        sid = client.post("/api/sessions", json={"machine": "Switch"}).json()["session"]
        client.post(f"/api/sessions/{sid}/step", json={"event": "turn_on", "params": {}})
        response = client.post(f"/api/sessions/{sid}/save",
                               json={"name": "../evil", "register_as_vo": False})
        assert response.status_code == 400


class TestConcurrency:
    def test_same_vo_checks_serialize(self, basic_client):
        client, _ = basic_client
        results = []

        def hit():
            results.append(client.post("/api/vos/dead_counter/check").status_code)

        threads = [threading.Thread(target=hit) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [200] * 4


class TestStatic:
    def test_fallback_page_without_bundle(self, copy_corpus, tmp_path):
        client = TestClient(create_app(copy_corpus("basic"),
                                       ui_dir=tmp_path / "missing"))
        response = client.get("/")
        assert response.status_code == 200
        assert "vobs" in response.text

    def test_serves_bundle_when_present(self, copy_corpus, tmp_path):
        dist = tmp_path / "dist"
        dist.mkdir()
        (dist / "index.html").write_text("<html><body>dashboard</body></html>")
        (dist / "main.js").write_text("console.log('hi')")
        client = TestClient(create_app(copy_corpus("basic"), ui_dir=dist))
        assert "dashboard" in client.get("/").text
        assert client.get("/main.js").status_code == 200
        assert client.get("/nope.js").status_code == 404
