"""Hint ladder generation and template filling."""

from __future__ import annotations

import pytest

from prooftutor.hints import (
    DEFAULT_TEMPLATES,
    FALLBACK_HINT,
    HintTemplate,
    SlotError,
    generate_hint,
    instantiate_template,
    ladder_length,
    parse_templates,
)
from prooftutor.logic import Sequent, parse_formula
from prooftutor.strategy import run_strategy
from prooftutor.theory import Library

LIB = Library()
REL = LIB.theory("relations")
T1 = Sequent((), parse_formula("inv(comp(R,S)) subset comp(inv(S),inv(R))"), "T1")
PLAN = run_strategy("close-by-definition", T1, REL, 5000)


class TestLadder:
    def test_first_hint_is_strategic(self):
        h = generate_hint(PLAN, 0, REL)
        assert h.category == 1
        assert h.text == "Try to work backward from the goal."

    def test_printed_ladder(self):
        texts = [generate_hint(PLAN, i, REL).text for i in range(4)]
        assert texts[1] == "Try to apply Def-subset"
        assert texts[2] == (
            "Try to apply Def-subset on inv(comp(R,S)) subset comp(inv(S),inv(R))"
        )
        assert texts[3] == (
            "By the application of Def-subset we obtain the new goal "
            "(x,y) in inv(comp(R,S)) -> (x,y) in comp(inv(S),inv(R))"
        )

    def test_monotone_positions(self):
        n = ladder_length(PLAN)
        marks = [
            (generate_hint(PLAN, i, REL).level, generate_hint(PLAN, i, REL).category)
            for i in range(n + 2)
        ]
        assert all(a <= b for a, b in zip(marks, marks[1:]))

    def test_bottom_out_names_concrete_inference(self):
        h = generate_hint(PLAN, 99, REL)
        assert h.category in (7, 8)
        assert "Def-subset" in h.text

    def test_category8_restates_assertion(self):
        n = ladder_length(PLAN)
        h = generate_hint(PLAN, n - 1, REL)
        assert h.category == 8
        assert "forall U V. U subset V <->" in h.text

    def test_fallback_without_plan(self):
        h = generate_hint(None, 0)
        assert h is FALLBACK_HINT
        assert h.category is None

    def test_every_hint_edge_exists_in_plan(self):
        labels = {e.label for e in PLAN.all_edges()}
        for i in range(ladder_length(PLAN)):
            h = generate_hint(PLAN, i, REL)
            assert h.edge_label in labels


class TestTemplates:
    def test_backward_premises_question(self):
        eq_task = Sequent((), parse_formula("inter(A,B) = inter(B,A)"), "T1")
        plan = run_strategy("work-backward", eq_task, REL, 500)
        assert plan is not None
        edge = next(e for e in plan.inference_edges() if e.label.startswith("Def-eq"))
        t = next(t for t in DEFAULT_TEMPLATES if t.category == 4)
        text = instantiate_template(t, edge, plan, REL)
        assert text == (
            "If you want to show that inter(A,B) = inter(B,A), "
            "what should be true about these sets?"
        )

    def test_forward_conclusion_question(self):
        task = Sequent(
            (parse_formula("(x,y) in A"), parse_formula("(x,y) in B")),
            parse_formula("(x,y) in inter(A,B)"),
            "T1",
        )
        plan = run_strategy("work-forward", task, REL, 500)
        assert plan is not None
        edge = next(e for e in plan.inference_edges() if "inter" in e.label)
        t = next(t for t in DEFAULT_TEMPLATES if t.category == 6)
        text = instantiate_template(t, edge, plan, REL)
        assert text == "What can you conclude if you know that (x,y) in A and (x,y) in B?"

    def test_inapplicable_template_skipped(self):
        t = next(t for t in DEFAULT_TEMPLATES if t.category == 6)  # forward-only
        edge = next(e for e in PLAN.inference_edges() if e.label == "Def-subset-bwd")
        assert not t.matches(edge)

    def test_unfillable_slot_raises(self):
        t = HintTemplate(3, "inference", None, "Use {nonexistent_slot} now")
        edge = next(e for e in PLAN.inference_edges() if e.label == "Def-subset-bwd")
        with pytest.raises(SlotError):
            instantiate_template(t, edge, PLAN, REL)

    def test_template_file_parsing(self):
        got = parse_templates(
            'template 3 for inference: "Try {assertion} here"\n'
            'template 1 for work-backward: "Go backward."\n'
        )
        assert got[0].category == 3 and got[0].applies_to == "inference"
        assert got[1].strategy == "work-backward"
