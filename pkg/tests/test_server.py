"""HTTP wire format and CLI entry points."""

from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from prooftutor.cli import main
from prooftutor.server import create_app
from prooftutor.theory import Library


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(Library()))


class TestHTTP:
    def test_exercises_listing(self, client):
        got = client.get("/exercises").json()
        ids = {e["id"] for e in got}
        assert {"rel-inv-comp", "rel-union-comp"} <= ids

    def test_theory_endpoint(self, client):
        got = client.get("/theories/relations").json()
        labels = [a["label"] for a in got["assertions"]]
        assert "Def-subset" in labels
        assert client.get("/theories/nope").status_code == 404

    def test_session_lifecycle(self, client):
        created = client.post("/sessions", json={"exercise": "rel-inv-comp"}).json()
        sid = created["session_id"]
        assert created["state"]["open_sequents"][0]["goal"] == (
            "inv(comp(R,S)) = comp(inv(S),inv(R))"
        )
        out = client.post(
            f"/sessions/{sid}/steps", json={"text": "let (x,y) in inv(comp(R,S))"}
        ).json()
        assert out["feedback"]["soundness"] == "correct"
        assert out["messages"] == ["correct"]
        assert out["interpretations"] == 1
        out2 = client.post(
            f"/sessions/{sid}/steps", json={"text": "hence (y,x) in comp(S,R)"}
        ).json()
        assert out2["feedback"]["soundness"] == "incorrect"
        state = client.get(f"/sessions/{sid}").json()
        kinds = [t["kind"] for t in state["transcript"]]
        assert kinds == ["step", "step"]
        hint = client.post(f"/sessions/{sid}/hint").json()
        assert hint["category"] == 1
        state2 = client.get(f"/sessions/{sid}").json()
        assert state2["transcript"][-1]["kind"] == "hint"

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404

    def test_unknown_exercise_404(self, client):
        assert client.post("/sessions", json={"exercise": "nope"}).status_code == 404

    def test_state_reload_is_stable(self, client):
        sid = client.post("/sessions", json={"exercise": "rel-inv-comp"}).json()["session_id"]
        client.post(f"/sessions/{sid}/steps", json={"text": "let (x,y) in inv(comp(R,S))"})
        a = client.get(f"/sessions/{sid}").json()
        b = client.get(f"/sessions/{sid}").json()
        assert a == b


class TestCLI:
    def test_eval_text(self, capsys):
        rc = main(["eval", "--corpus", "mini.corpus", "--depth", "4"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "Step correct" in out and "Step incorrect" in out

    def test_eval_json(self, capsys):
        rc = main(["--format", "json", "eval", "--corpus", "mini.corpus"])
        data = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert data["incorrect_verified"] == 0

    def test_check_script(self, tmp_path, capsys):
        script = tmp_path / "proof.txt"
        script.write_text(
            "subgoals subgoal inv(comp(R,S)) subset comp(inv(S),inv(R))"
            " subgoal inv(comp(R,S)) supset comp(inv(S),inv(R))\n"
            "let (x,y) in inv(comp(R,S))\n"
            "hence (y,x) in comp(R,S)\n"
            "hence (x,y) in comp(inv(S),inv(R))\n"
            "let (a,b) in comp(inv(S),inv(R))\n"
            "hence (b,a) in comp(R,S)\n"
            "hence (a,b) in inv(comp(R,S))\n"
            "qed\n"
        )
        rc = main(["check", "--exercise", "rel-inv-comp", "--script", str(script)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "proof complete: True" in out

    def test_check_script_failure_exit_code(self, tmp_path, capsys):
        script = tmp_path / "proof.txt"
        script.write_text("hence (y,x) in comp(S,R)\n")
        rc = main(["check", "--exercise", "rel-inv-comp", "--script", str(script)])
        assert rc == 1

    def test_prove_levels(self, capsys):
        rc = main(["prove", "--exercise", "rel-inv-comp", "--strategy", "close-by-definition"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "close-by-definition" in out and "closed: True" in out

    def test_prove_flat_level(self, capsys):
        rc = main(["--format", "json", "prove", "--exercise", "rel-inv-comp", "--level", "1"])
        data = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert [e["label"] for e in data["edges"]][:1] == ["work-backward"]

    def test_unknown_exercise_error(self, capsys):
        rc = main(["prove", "--exercise", "nope"])
        assert rc == 2
        assert "error" in capsys.readouterr().err
