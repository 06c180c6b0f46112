"""Tutoring sessions: the inner loop of step feedback and hint requests.

A session owns the live proof states, the overlay student model, the hint
ladder position and a transcript.  Feedback policy: correctness is reported
on every step; granularity and relevance messages appear only when violated.
"""

from __future__ import annotations

import itertools
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .granularity import (
    GranularityClassifier,
    StudentModel,
    classify,
    extract_features,
    load_classifier,
    update_student_model,
)
from .hints import Hint, generate_hint
from .logic import (
    App,
    Atom,
    Const,
    Formula,
    ParseError,
    Pair,
    Sequent,
    Term,
    formula_metavars,
    map_atoms,
    render_formula,
)
from .reconstruction import (
    MentalProofState,
    ReconstructionResult,
    SearchLimits,
    check_relevance,
    close_check,
    initial_states,
    reconstruct_step,
)
from .script import (
    Assume,
    Cases,
    Continuation,
    Fact,
    ProofStep,
    Qed,
    SetStep,
    Subgoal,
    Subgoals,
    Trivial,
    parse_step,
    render_step,
)
from .strategy import run_strategy
from .theory import Exercise, Library, Theory

GRANULARITY_MESSAGES = {
    "too_big": "This step skips too much at once. What does it follow from?",
    "too_small": "This step is finer than necessary; try to combine it with the next one.",
}
IRRELEVANT_MESSAGE = "This may be true, but does it bring you closer to the current goal?"


@dataclass(frozen=True)
class FeedbackVector:
    soundness: str  # correct | incorrect | buggy | unknown
    granularity: str  # appropriate | too_small | too_big | not_applicable
    relevance: str  # relevant | irrelevant | unknown
    buggy_message: Optional[str] = None

    def as_dict(self) -> dict:
        out = {
            "soundness": self.soundness,
            "granularity": self.granularity,
            "relevance": self.relevance,
        }
        if self.buggy_message:
            out["buggy_message"] = self.buggy_message
        return out


@dataclass(frozen=True)
class StepOutcome:
    feedback: FeedbackVector
    messages: tuple[str, ...]
    proof_complete: bool
    interpretations: int

    def as_dict(self) -> dict:
        return {
            "feedback": self.feedback.as_dict(),
            "messages": list(self.messages),
            "proof_complete": self.proof_complete,
            "interpretations": self.interpretations,
        }


@dataclass
class TranscriptEntry:
    kind: str  # step | hint
    text: str
    feedback: Optional[FeedbackVector] = None
    messages: tuple[str, ...] = ()
    hint: Optional[Hint] = None

    def as_dict(self) -> dict:
        out: dict = {"kind": self.kind, "text": self.text}
        if self.feedback is not None:
            out["feedback"] = self.feedback.as_dict()
            out["messages"] = list(self.messages)
        if self.hint is not None:
            out["category"] = self.hint.category
            out["category_name"] = self.hint.category_name
        return out


class SessionError(Exception):
    pass


class Session:
    """Single-student tutoring session on one exercise."""

    def __init__(
        self,
        exercise: Exercise,
        theory: Theory,
        classifier: GranularityClassifier,
        limits: Optional[SearchLimits] = None,
        model: Optional[StudentModel] = None,
        socratic: bool = False,
        relevance_budget: int = 5000,
        session_id: Optional[str] = None,
    ):
        self.id = session_id or uuid.uuid4().hex[:12]
        self.exercise = exercise
        self.theory = theory
        self.classifier = classifier
        self.limits = limits or SearchLimits(depth=exercise.depth_limit)
        self.states: list[MentalProofState] = initial_states(exercise)
        self.model = model or StudentModel()
        self.socratic = socratic
        self.relevance_budget = relevance_budget
        self.transcript: list[TranscriptEntry] = []
        self.abbrevs: dict[str, Union[Term, Formula]] = {}
        self.hyp_labels: list[tuple[str, Formula]] = []
        self.last_fact: Optional[Formula] = None
        self.ladder_position = 0
        self._plan_cache: tuple[Optional[str], object] = (None, None)
        self._register_hyps()

    # -- views ---------------------------------------------------------------

    @property
    def best_state(self) -> MentalProofState:
        return self.states[0]

    @property
    def proof_complete(self) -> bool:
        return any(close_check(s) for s in self.states)

    def state_view(self) -> dict:
        best = self.best_state
        sequents = []
        for i, s in enumerate(best.sequents):
            sequents.append(
                {
                    "label": s.label,
                    "hypotheses": [self._labelled(h) for h in s.hyps],
                    "goal": render_formula(s.goal),
                    "marked": i == best.marked,
                }
            )
        return {
            "session_id": self.id,
            "exercise": self.exercise.id,
            "open_sequents": sequents,
            "marked": best.marked if best.sequents else None,
            "proof_complete": self.proof_complete,
            "interpretations": len(self.states),
            "transcript": [t.as_dict() for t in self.transcript],
        }

    def _labelled(self, f: Formula) -> dict:
        text = render_formula(f)
        for label, known in self.hyp_labels:
            if render_formula(known) == text:
                return {"label": label, "formula": text}
        return {"label": "", "formula": text}

    def _register_hyps(self):
        seen = {render_formula(f) for _, f in self.hyp_labels}
        for state in self.states[:1]:
            for s in state.sequents:
                for h in s.hyps:
                    text = render_formula(h)
                    if text not in seen:
                        seen.add(text)
                        self.hyp_labels.append((f"h{len(self.hyp_labels) + 1}", h))

    # -- the inner loop -------------------------------------------------------

    def submit_step(self, text: str) -> StepOutcome:
        if self.proof_complete:
            raise SessionError("proof already complete")
        try:
            step = parse_step(text, self.theory.arities)
            step = self._resolve(step)
        except ParseError as e:
            return self._record(
                text,
                FeedbackVector("unknown", "not_applicable", "unknown"),
                (f"I could not read that step: {e}",),
            )
        except SessionError as e:
            return self._record(
                text,
                FeedbackVector("unknown", "not_applicable", "unknown"),
                (str(e),),
            )

        if isinstance(step, SetStep):
            for name, value in step.bindings:
                self.abbrevs[name] = value
            return self._record(
                text, FeedbackVector("correct", "appropriate", "relevant"), ("correct",)
            )

        result = reconstruct_step(self.states, step, self.theory, self.limits)
        if result.verdict == "buggy":
            fb = FeedbackVector("buggy", "not_applicable", "unknown", result.buggy_message)
            messages = ["incorrect"]
            if result.buggy_message:
                messages.append(result.buggy_message)
            return self._record(text, fb, tuple(messages))
        if result.verdict == "rejected":
            return self._record(
                text, FeedbackVector("incorrect", "not_applicable", "unknown"), ("incorrect",)
            )
        if result.verdict == "resource_exhausted":
            return self._record(
                text,
                FeedbackVector("unknown", "not_applicable", "unknown"),
                ("I could not verify this step within my search limits.",),
            )

        # verified
        trace = result.best_trace()
        features = extract_features(trace, self.model, step)
        verdict = classify(features, self.classifier)
        relevance = self._relevance(step)
        update_student_model(self.model, trace, True)
        if isinstance(step, Fact) and isinstance(step.formula, Formula):
            self.last_fact = step.formula
        pre_key = self._state_key()
        self.states = list(result.successors)
        if self._state_key() != pre_key:
            self.ladder_position = 0
            self._plan_cache = (None, None)
        self._register_hyps()
        messages = ["correct"]
        if verdict.verdict in GRANULARITY_MESSAGES:
            messages.append(GRANULARITY_MESSAGES[verdict.verdict])
        if relevance == "irrelevant":
            messages.append(IRRELEVANT_MESSAGE)
        fb = FeedbackVector("correct", verdict.verdict, relevance)
        return self._record(text, fb, tuple(messages))

    def _record(self, text: str, fb: FeedbackVector, messages: tuple[str, ...]) -> StepOutcome:
        self.transcript.append(TranscriptEntry("step", text, fb, messages))
        return StepOutcome(fb, messages, self.proof_complete, len(self.states))

    def _relevance(self, step: ProofStep) -> str:
        if not isinstance(step, Assume):
            return "relevant"
        plan = self._ensure_plan()
        return check_relevance(
            self.best_state,
            step.hypotheses,
            self.exercise.strategy,
            self.theory,
            self.relevance_budget,
            plan=plan,
        )

    # -- hints ---------------------------------------------------------------

    def request_hint(self) -> Hint:
        if self.proof_complete:
            raise SessionError("proof already complete")
        plan = self._ensure_plan()
        hint = generate_hint(
            plan, self.ladder_position, self.theory, socratic=self.socratic
        )
        self.ladder_position += 1
        self.transcript.append(TranscriptEntry("hint", hint.text, hint=hint))
        return hint

    def _state_key(self) -> Optional[str]:
        best = self.best_state
        if not best.sequents:
            return None
        return " || ".join(s.render() for s in best.sequents) + f"#{best.marked}"

    def _ensure_plan(self):
        key = self._state_key()
        if self._plan_cache[0] == key and key is not None:
            return self._plan_cache[1]
        task = self.best_state.marked_sequent
        plan = None
        if task is not None:
            plan = run_strategy(self.exercise.strategy, task, self.theory,
                                self.relevance_budget)
        self._plan_cache = (key, plan)
        return plan

    # -- step resolution -------------------------------------------------------

    def _resolve(self, step: ProofStep) -> ProofStep:
        step = _map_step_formulas(step, self._expand_formula)
        if isinstance(step, Fact) and isinstance(step.formula, Continuation):
            step = Fact(
                self._resolve_continuation(step.formula),
                step.by,
                step.from_labels,
                step.keyword or "hence",
            )
        for label in _from_labels(step):
            if not any(l == label for l, _ in self.hyp_labels):
                raise SessionError(f"unknown hypothesis label {label!r}")
        for f in _step_formulas(step):
            if formula_metavars(f) - set(self.abbrevs):
                raise SessionError(
                    "meta-variables are not allowed in proof steps (use `set` to abbreviate)"
                )
        return step

    def _resolve_continuation(self, cont: Continuation) -> Formula:
        prev = self.last_fact
        if prev is None or not isinstance(prev, Atom) or len(prev.args) != 2:
            raise SessionError("nothing to continue from: the previous fact is not a binary statement")
        return Atom(cont.binop, (prev.args[1], cont.rhs))

    def _expand_formula(self, f: Formula) -> Formula:
        if not self.abbrevs:
            return f
        term_bindings = {k: v for k, v in self.abbrevs.items() if isinstance(v, Term)}
        formula_bindings = {k: v for k, v in self.abbrevs.items() if isinstance(v, Formula)}

        def expand_term(t: Term) -> Term:
            if isinstance(t, Const) and t.name in term_bindings:
                return term_bindings[t.name]
            if isinstance(t, Pair):
                return Pair(expand_term(t.fst), expand_term(t.snd))
            if isinstance(t, App):
                return App(t.fn, tuple(expand_term(a) for a in t.args))
            return t

        def expand_atom(a: Atom) -> Formula:
            if not a.args and a.pred in formula_bindings:
                return formula_bindings[a.pred]
            return Atom(a.pred, tuple(expand_term(t) for t in a.args))

        return map_atoms(f, expand_atom)


def _step_formulas(step: ProofStep) -> list[Formula]:
    if isinstance(step, Assume):
        return list(step.hypotheses) + ([step.thus] if step.thus else [])
    if isinstance(step, Fact) and isinstance(step.formula, Formula):
        return [step.formula]
    if isinstance(step, Subgoal):
        return [step.goal, *step.using]
    if isinstance(step, Subgoals):
        return [g.goal for g in step.goals]
    if isinstance(step, Cases):
        return [b.formula for b in step.branches]
    return []


def _from_labels(step: ProofStep) -> tuple[str, ...]:
    if isinstance(step, (Assume, Fact, Trivial, Cases)):
        return step.from_labels
    return ()


def _map_step_formulas(step: ProofStep, fn) -> ProofStep:
    if isinstance(step, Assume):
        return Assume(
            tuple(fn(h) for h in step.hypotheses),
            step.from_labels,
            fn(step.thus) if step.thus is not None else None,
        )
    if isinstance(step, Fact):
        if isinstance(step.formula, Formula):
            return Fact(fn(step.formula), step.by, step.from_labels, step.keyword)
        return step
    if isinstance(step, Subgoal):
        return Subgoal(fn(step.goal), tuple(fn(u) for u in step.using), step.by)
    if isinstance(step, Subgoals):
        return Subgoals(
            tuple(Subgoal(fn(g.goal), tuple(fn(u) for u in g.using), g.by) for g in step.goals),
            step.by,
        )
    if isinstance(step, Cases):
        from .script import CaseBranch

        return Cases(
            tuple(
                CaseBranch(fn(b.formula), tuple(_map_step_formulas(s, fn) for s in b.steps))
                for b in step.branches
            ),
            step.by,
            step.from_labels,
        )
    return step


# ---------------------------------------------------------------------------
# Session factory


def open_session(
    exercise_id: str,
    library: Optional[Library] = None,
    theory_name: Optional[str] = None,
    depth: Optional[int] = None,
    socratic: bool = False,
    model: Optional[StudentModel] = None,
) -> Session:
    lib = library or Library()
    ex = lib.exercise(exercise_id)
    theory = lib.theory(theory_name or ex.theory_name)
    classifier = load_classifier(lib.classifier_path(ex.classifier))
    limits = SearchLimits(depth=depth or ex.depth_limit)
    return Session(ex, theory, classifier, limits, model=model, socratic=socratic)


# ---------------------------------------------------------------------------
# Corpus evaluation


@dataclass
class EvalStep:
    dialog: str
    gold: str
    text: str
    verdict: str
    soundness: str
    line: int


@dataclass
class EvalReport:
    correct_verified: int = 0
    correct_rejected: int = 0
    incorrect_verified: int = 0
    incorrect_rejected: int = 0
    depth: int = 4
    steps: list[EvalStep] = field(default_factory=list)
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return (
            self.correct_verified
            + self.correct_rejected
            + self.incorrect_verified
            + self.incorrect_rejected
        )

    def as_dict(self) -> dict:
        return {
            "depth": self.depth,
            "total": self.total,
            "correct_verified": self.correct_verified,
            "correct_rejected": self.correct_rejected,
            "incorrect_verified": self.incorrect_verified,
            "incorrect_rejected": self.incorrect_rejected,
            "skipped": [{"line": n, "reason": r} for n, r in self.skipped],
            "steps": [
                {
                    "dialog": s.dialog,
                    "gold": s.gold,
                    "text": s.text,
                    "soundness": s.soundness,
                    "verdict": s.verdict,
                }
                for s in self.steps
            ],
        }

    def render_table(self) -> str:
        def pct(n: int, d: int) -> str:
            return f"{n} ({0 if d == 0 else round(100 * n / d)}%)"

        n_corr = self.correct_verified + self.correct_rejected
        n_inc = self.incorrect_verified + self.incorrect_rejected
        rows = [
            ("", "Verified", "Rejected"),
            ("Step correct", pct(self.correct_verified, n_corr), pct(self.correct_rejected, n_corr)),
            ("Step incorrect", pct(self.incorrect_verified, n_inc), pct(self.incorrect_rejected, n_inc)),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
            for row in rows
        ]
        if self.skipped:
            lines.append(f"(skipped {len(self.skipped)} malformed line(s))")
        return "\n".join(lines)


def evaluate_corpus(
    corpus_path: str | Path,
    library: Optional[Library] = None,
    depth: Optional[int] = None,
    theory_name: Optional[str] = None,
) -> EvalReport:
    """Replay gold-labelled dialog steps and report the confusion counts."""
    lib = library or Library()
    report = EvalReport(depth=depth or 4)
    session: Optional[Session] = None
    current_dialog: Optional[str] = None
    exercise_id: Optional[str] = None
    for line_no, raw in enumerate(Path(corpus_path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("=="):
            body = line.lstrip("=").strip()
            if not body.startswith("exercise "):
                report.skipped.append((line_no, f"bad header: {line!r}"))
                continue
            exercise_id = body[len("exercise "):].strip()
            session = None
            current_dialog = None
            continue
        if not line.startswith(":"):
            report.skipped.append((line_no, f"unrecognised line: {line!r}"))
            continue
        try:
            head, rest = line[1:].split(None, 1)
            gold, step_text = rest.split(None, 1)
        except ValueError:
            report.skipped.append((line_no, f"malformed step line: {line!r}"))
            continue
        if gold not in ("correct", "incorrect"):
            report.skipped.append((line_no, f"bad gold label {gold!r}"))
            continue
        if exercise_id is None:
            report.skipped.append((line_no, "step before any exercise header"))
            continue
        if session is None or head != current_dialog:
            session = open_session(exercise_id, lib, theory_name=theory_name, depth=depth)
            current_dialog = head
        try:
            outcome = session.submit_step(step_text)
        except SessionError as e:
            report.skipped.append((line_no, str(e)))
            continue
        soundness = outcome.feedback.soundness
        verified = soundness == "correct"
        if gold == "correct" and verified:
            report.correct_verified += 1
        elif gold == "correct":
            report.correct_rejected += 1
        elif verified:
            report.incorrect_verified += 1
        else:
            report.incorrect_rejected += 1
        report.steps.append(
            EvalStep(head, gold, step_text, "verified" if verified else "rejected",
                     soundness, line_no)
        )
    return report
