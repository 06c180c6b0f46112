"""Session loop: feedback policy, hint policy, corpus evaluation."""

from __future__ import annotations

import pytest

from prooftutor.granularity import StudentModel
from prooftutor.session import (
    EvalReport,
    Session,
    SessionError,
    evaluate_corpus,
    open_session,
)
from prooftutor.theory import Library

LIB = Library()


def fresh(exercise="rel-inv-comp", **kw) -> Session:
    return open_session(exercise, LIB, **kw)


S8 = "let (x,y) in inv(comp(R,S))"
S10 = "hence (y,x) in comp(S,R)"
SPLIT = (
    "subgoals subgoal inv(comp(R,S)) subset comp(inv(S),inv(R))"
    " subgoal inv(comp(R,S)) supset comp(inv(S),inv(R))"
)


class TestFeedbackPolicy:
    def test_s8_correct_silent_on_granularity(self):
        s = fresh()
        out = s.submit_step(S8)
        assert out.feedback.soundness == "correct"
        assert out.feedback.granularity == "appropriate"
        assert out.feedback.relevance == "relevant"
        assert out.messages == ("correct",)

    def test_s10_incorrect(self):
        s = fresh()
        s.submit_step(S8)
        out = s.submit_step(S10)
        assert out.feedback.soundness == "incorrect"
        assert out.feedback.granularity == "not_applicable"
        assert out.feedback.relevance == "unknown"
        assert out.messages == ("incorrect",)

    def test_s10_buggy_message_with_buggy_theory(self):
        s = fresh(theory_name="relations-buggy")
        s.submit_step(S8)
        out = s.submit_step(S10)
        assert out.feedback.soundness == "buggy"
        assert out.feedback.buggy_message == "inverse reverses the order of composition"
        assert "inverse reverses the order of composition" in out.messages

    def test_union_existential_step_too_big(self):
        s = fresh("rel-union-comp")
        out = s.submit_step("exists x. (a,x) in union(R,S) /\\ (x,b) in T")
        assert out.feedback.soundness == "correct"
        assert out.feedback.granularity == "too_big"
        assert out.feedback.relevance == "relevant"
        assert any("skips too much" in m for m in out.messages)

    def test_union_definition_restatement_appropriate(self):
        s = fresh("rel-union-comp")
        out = s.submit_step("forall a b. (a,b) in R \\/ (a,b) in S -> (a,b) in union(R,S)")
        assert out.feedback.soundness == "correct"
        assert out.feedback.granularity == "appropriate"
        assert out.messages == ("correct",)

    def test_parse_error_is_unknown_not_incorrect(self):
        s = fresh()
        out = s.submit_step("let x in")
        assert out.feedback.soundness == "unknown"
        assert any("could not read" in m for m in out.messages)
        # no state change
        assert len(s.best_state.sequents) == 1

    def test_no_state_change_on_rejected(self):
        s = fresh()
        s.submit_step(S8)
        before = s.best_state.render()
        model_before = s.model.snapshot()
        pos_before = s.ladder_position
        out = s.submit_step(S10)
        assert out.feedback.soundness == "incorrect"
        assert s.best_state.render() == before
        assert s.model.snapshot() == model_before
        assert s.ladder_position == pos_before

    def test_policy_no_message_for_appropriate_or_relevant(self):
        s = fresh()
        s.submit_step(S8)
        for entry in s.transcript:
            if entry.feedback is None:
                continue
            if entry.feedback.granularity == "appropriate":
                assert not any("finer" in m or "skips" in m for m in entry.messages)
            if entry.feedback.relevance == "relevant":
                assert not any("closer to the current goal" in m for m in entry.messages)

    def test_student_model_updates_on_correct(self):
        s = fresh()
        s.submit_step(S8)
        assert s.model.correct_uses == {"Def-eq": 1, "Def-subset": 1}

    def test_set_abbreviation_expands(self):
        s = fresh()
        s.submit_step("set D=inv(comp(R,S))")
        out = s.submit_step("let (x,y) in D")
        assert out.feedback.soundness == "correct"
        hyp = s.best_state.marked_sequent.hyps[0]
        from prooftutor.logic import render_formula

        assert render_formula(hyp) == "(x,y) in inv(comp(R,S))"

    def test_metavariable_rejected_in_step(self):
        s = fresh()
        out = s.submit_step("let (x,?z) in inv(comp(R,S))")
        assert out.feedback.soundness == "unknown"

    def test_continuation_fact(self):
        s = fresh("rel-union-comp")
        s.submit_step("(a,b) in R \\/ (a,b) in S -> (a,b) in union(R,S)")
        # previous fact is an implication, not a binary atom: continuation fails
        out = s.submit_step(". subset T")
        assert out.feedback.soundness == "unknown"

    def test_full_proof_completes(self):
        s = fresh()
        script = [
            SPLIT,
            S8,
            "hence (y,x) in comp(R,S)",
            "hence (x,y) in comp(inv(S),inv(R))",
            "let (a,b) in comp(inv(S),inv(R))",
            "hence (b,a) in comp(R,S)",
            "hence (a,b) in inv(comp(R,S))",
        ]
        for text in script:
            out = s.submit_step(text)
            assert out.feedback.soundness == "correct", text
        assert out.proof_complete
        assert s.proof_complete
        with pytest.raises(SessionError, match="complete"):
            s.submit_step("trivial")


class TestHintPolicy:
    def test_hint_ladder_after_split(self):
        s = fresh()
        s.submit_step(SPLIT)
        hints = [s.request_hint() for _ in range(4)]
        assert hints[0].category == 1
        assert hints[0].text == "Try to work backward from the goal."
        assert hints[1].text == "Try to apply Def-subset"
        assert "Try to apply Def-subset on inv(comp(R,S)) subset" in hints[2].text
        assert hints[3].category in (7, 8)
        marks = [(h.level, h.category) for h in hints]
        assert all(a <= b for a, b in zip(marks, marks[1:]))

    def test_hint_does_not_touch_model(self):
        s = fresh()
        s.submit_step(SPLIT)
        before = s.model.snapshot()
        s.request_hint()
        assert s.model.snapshot() == before

    def test_ladder_resets_on_state_change(self):
        s = fresh()
        s.submit_step(SPLIT)
        s.request_hint()
        s.request_hint()
        assert s.ladder_position == 2
        s.submit_step(S8)
        assert s.ladder_position == 0

    def test_ladder_survives_wrong_attempt(self):
        s = fresh()
        s.submit_step(SPLIT)
        s.request_hint()
        s.submit_step(S10)  # rejected: no state change
        assert s.ladder_position == 1

    def test_hint_after_complete_errors(self):
        s = fresh()
        for text in [
            SPLIT,
            S8,
            "hence (y,x) in comp(R,S)",
            "hence (x,y) in comp(inv(S),inv(R))",
            "let (a,b) in comp(inv(S),inv(R))",
            "hence (b,a) in comp(R,S)",
            "hence (a,b) in inv(comp(R,S))",
        ]:
            s.submit_step(text)
        with pytest.raises(SessionError, match="complete"):
            s.request_hint()


class TestReplayDeterminism:
    def test_transcript_replay_reproduces_feedback(self):
        script = [SPLIT, S8, "hence (y,x) in comp(R,S)", S10, "trivial"]

        def run():
            s = fresh()
            out = []
            for text in script:
                o = s.submit_step(text)
                out.append((o.feedback, o.messages, o.proof_complete, o.interpretations))
            return out

        assert run() == run()


class TestCorpusEvaluation:
    def test_bundled_mini_corpus(self):
        report = evaluate_corpus(LIB.corpus_path("mini.corpus"), LIB, depth=4)
        assert report.incorrect_verified == 0
        assert report.correct_rejected == 0
        assert report.correct_verified == 6
        assert report.incorrect_rejected == 1
        assert not report.skipped
        assert report.total == 7

    def test_depth_one_rejects_the_pair_introduction(self):
        report = evaluate_corpus(LIB.corpus_path("mini.corpus"), LIB, depth=1)
        d1 = [s for s in report.steps if s.dialog == "d1"]
        assert d1[0].text.startswith("let (x,y)")
        assert d1[0].verdict == "rejected"

    def test_single_trivial_step_corpus(self, tmp_path):
        p = tmp_path / "one.corpus"
        p.write_text(
            "== exercise rel-inv-comp\n"
            ":d1 correct inv(comp(R,S)) = comp(inv(S),inv(R))\n"
        )
        report = evaluate_corpus(p, LIB)
        assert report.correct_verified == 1

    def test_malformed_line_skipped(self, tmp_path):
        p = tmp_path / "bad.corpus"
        p.write_text(
            "== exercise rel-inv-comp\n"
            "junk line\n"
            ":d1 correct inv(comp(R,S)) = comp(inv(S),inv(R))\n"
        )
        report = evaluate_corpus(p, LIB)
        assert len(report.skipped) == 1
        assert report.total == 1

    def test_table_rendering(self):
        r = EvalReport(correct_verified=6, incorrect_rejected=1)
        table = r.render_table()
        assert "Step correct" in table and "6 (100%)" in table
        assert "Step incorrect" in table and "1 (100%)" in table
