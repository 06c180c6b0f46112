"""Declarative proof-script language: parser and printer.

The tutorial dialect deliberately tolerates omission: ``by`` and ``from``
clauses, the ``thus`` of an assume step, and the closing ``qed`` may all be
left out.  ``let`` is an alias for ``assume`` and a bare formula (or
``hence`` formula) is a fact step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .logic import (
    ArityTable,
    DEFAULT_ARITY_TABLE,
    Formula,
    ParseError,
    Term,
    parse_formula,
    parse_term,
    render_formula,
    render_term,
)

KEYWORDS = {
    "proof", "qed", "assume", "let", "thus", "hence", "subgoal", "subgoals",
    "cases", "set", "trivial", "by", "from", "using", "and",
}

BIN_PREDS = ("=", "in", "subset", "supset")


@dataclass(frozen=True)
class Continuation:
    """Calculational continuation: ``.<binop> rhs`` chains onto the last fact."""

    binop: str
    rhs: Term


SForm = Union[Formula, Continuation]


@dataclass(frozen=True)
class Assume:
    hypotheses: tuple[Formula, ...]
    from_labels: tuple[str, ...] = ()
    thus: Optional[Formula] = None


@dataclass(frozen=True)
class Fact:
    formula: SForm
    by: Optional[str] = None
    from_labels: tuple[str, ...] = ()
    #: keyword actually used ("hence" or bare); bare facts may also be read
    #: as subgoal statements during reconstruction
    keyword: Optional[str] = None


@dataclass(frozen=True)
class Subgoal:
    goal: Formula
    using: tuple[Formula, ...] = ()
    by: Optional[str] = None


@dataclass(frozen=True)
class Subgoals:
    goals: tuple[Subgoal, ...]
    by: Optional[str] = None


@dataclass(frozen=True)
class CaseBranch:
    formula: Formula
    steps: tuple["ProofStep", ...] = ()


@dataclass(frozen=True)
class Cases:
    branches: tuple[CaseBranch, ...]
    by: Optional[str] = None
    from_labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class SetStep:
    bindings: tuple[tuple[str, Union[Formula, Term]], ...]


@dataclass(frozen=True)
class Trivial:
    by: Optional[str] = None
    from_labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class Qed:
    pass


ProofStep = Union[Assume, Fact, Subgoal, Subgoals, Cases, SetStep, Trivial, Qed]


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    line: int
    text: str


@dataclass(frozen=True)
class ProofScript:
    steps: tuple[ProofStep, ...]
    spans: tuple[Span, ...] = ()


# ---------------------------------------------------------------------------
# Step splitting: ';' or newline at brace depth 0 separates steps


def _split_steps(text: str) -> list[tuple[str, Span]]:
    parts: list[tuple[str, Span]] = []
    depth = 0
    start = 0
    line = 1
    start_line = 1
    i = 0
    while i <= len(text):
        ch = text[i] if i < len(text) else "\n"
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth = max(0, depth - 1)
        if (ch in ";\n" and depth == 0) or i == len(text):
            chunk = text[start:i]
            stripped = chunk.strip()
            if stripped and not stripped.startswith("#"):
                parts.append((chunk, Span(start, i, start_line, stripped)))
            start = i + 1
            start_line = line + (1 if ch == "\n" else 0)
        if ch == "\n":
            line += 1
        i += 1
    return parts


_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_'-]*")


class _StepParser:
    """Keyword-directed recursive parser over one step's text."""

    def __init__(self, text: str, arities: ArityTable, base: int = 0):
        self.text = text
        self.pos = 0
        self.arities = arities
        self.base = base

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.base + self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek_word(self) -> Optional[str]:
        self.skip_ws()
        m = _WORD_RE.match(self.text, self.pos)
        return m.group(0) if m else None

    def take_word(self) -> str:
        self.skip_ws()
        m = _WORD_RE.match(self.text, self.pos)
        if not m:
            raise self.error("expected identifier")
        self.pos = m.end()
        return m.group(0)

    def take_keyword(self, kw: str) -> bool:
        save = self.pos
        if self.peek_word() == kw:
            self.take_word()
            return True
        self.pos = save
        return False

    def take_char(self, ch: str) -> bool:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == ch:
            self.pos += 1
            return True
        return False

    # -- formulas ----------------------------------------------------------

    def _formula_slice_end(self) -> int:
        """Index where the current formula text ends (next keyword or brace)."""
        depth = 0
        i = self.pos
        while i < len(self.text):
            ch = self.text[i]
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif ch in "{}" and depth == 0:
                return i
            elif ch == "," and depth == 0:
                return i
            elif depth == 0:
                m = _WORD_RE.match(self.text, i)
                if m and m.group(0) in KEYWORDS and m.group(0) not in ("in", "subset", "supset", "not"):
                    # formula connectives reuse none of the step keywords except
                    # the predicates; quantifier words never appear in KEYWORDS
                    return i
                if m:
                    i = m.end()
                    continue
            i += 1
        return i

    def formula(self) -> Formula:
        self.skip_ws()
        end = self._formula_slice_end()
        chunk = self.text[self.pos:end]
        if not chunk.strip():
            raise self.error("expected formula")
        try:
            f = parse_formula(chunk, self.arities)
        except ParseError as e:
            raise ParseError(e.message, self.base + self.pos + e.pos) from None
        self.pos = end
        return f

    def formula_list(self) -> tuple[Formula, ...]:
        out = [self.formula()]
        while True:
            save = self.pos
            if self.take_char(","):
                out.append(self.formula())
            elif self.take_keyword("and"):
                out.append(self.formula())
            else:
                self.pos = save
                break
        return tuple(out)

    # -- clauses -----------------------------------------------------------

    def by_clause(self) -> Optional[str]:
        if self.take_keyword("by"):
            return self.take_word()
        return None

    def from_clause(self) -> tuple[str, ...]:
        if not self.take_keyword("from"):
            return ()
        labels = [self.take_word()]
        while self.take_char(","):
            labels.append(self.take_word())
        return tuple(labels)

    # -- steps ---------------------------------------------------------------

    def step(self) -> ProofStep:
        word = self.peek_word()
        if word in ("assume", "let"):
            self.take_word()
            hyps = self.formula_list()
            frm = self.from_clause()
            thus = self.formula() if self.take_keyword("thus") else None
            return Assume(hyps, frm, thus)
        if word == "subgoals":
            self.take_word()
            goals = []
            while self.take_keyword("subgoal"):
                g = self.formula()
                # a trailing `by` belongs to the subgoals step itself; an inner
                # `by` is only recognised when another subgoal follows
                by = None
                save = self.pos
                maybe = self.by_clause()
                if maybe is not None and self.peek_word() == "subgoal":
                    by = maybe
                elif maybe is not None:
                    self.pos = save
                goals.append(Subgoal(g, (), by))
            if not goals:
                raise self.error("subgoals needs at least one subgoal")
            by = self.by_clause()
            return Subgoals(tuple(goals), by)
        if word == "subgoal":
            self.take_word()
            g = self.formula()
            using: tuple[Formula, ...] = ()
            if self.take_keyword("using"):
                using = self.formula_list()
            by = self.by_clause()
            return Subgoal(g, using, by)
        if word == "cases":
            self.take_word()
            branches = []
            while True:
                self.skip_ws()
                if self.at_end() or self.peek_word() in ("by", "from"):
                    break
                f = self.formula()
                steps: tuple[ProofStep, ...] = ()
                if self.take_char("{"):
                    depth = 1
                    start = self.pos
                    while self.pos < len(self.text) and depth:
                        if self.text[self.pos] == "{":
                            depth += 1
                        elif self.text[self.pos] == "}":
                            depth -= 1
                        self.pos += 1
                    inner = self.text[start:self.pos - 1]
                    steps = parse_script(inner, self.arities).steps
                branches.append(CaseBranch(f, steps))
                self.take_char(",")
            if not branches:
                raise self.error("cases needs at least one branch")
            by = self.by_clause()
            frm = self.from_clause()
            return Cases(tuple(branches), by, frm)
        if word == "set":
            self.take_word()
            bindings = []
            while True:
                name = self.take_word()
                if not self.take_char("="):
                    raise self.error("expected '=' in set binding")
                self.skip_ws()
                end = self._formula_slice_end()
                chunk = self.text[self.pos:end].rstrip()
                # bindings in a list are comma separated; terms may hold commas
                # only inside parens, which _formula_slice_end respects
                try:
                    value: Union[Formula, Term] = parse_term(chunk, self.arities)
                except ParseError:
                    try:
                        value = parse_formula(chunk, self.arities)
                    except ParseError as e:
                        raise ParseError(e.message, self.base + self.pos + e.pos) from None
                self.pos = end
                bindings.append((name, value))
                if not self.take_char(","):
                    break
            return SetStep(tuple(bindings))
        if word == "trivial":
            self.take_word()
            return Trivial(self.by_clause(), self.from_clause())
        if word == "qed":
            self.take_word()
            return Qed()
        if word == "hence":
            self.take_word()
            f = self.sform()
            return Fact(f, self.by_clause(), self.from_clause(), keyword="hence")
        if word == "thus":
            self.take_word()
            f = self.sform()
            return Fact(f, self.by_clause(), self.from_clause(), keyword="thus")
        if word in KEYWORDS and word not in ("in", "subset", "supset", "not", "and"):
            raise self.error(f"unknown use of keyword {word!r}")
        f = self.sform()
        return Fact(f, self.by_clause(), self.from_labels_or_empty(), keyword=None)

    def from_labels_or_empty(self) -> tuple[str, ...]:
        return self.from_clause()

    def sform(self) -> SForm:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == ".":
            self.pos += 1
            self.skip_ws()
            if self.take_char("="):
                op = "="
            else:
                op = self.take_word()
                if op not in BIN_PREDS:
                    raise self.error(f"expected binary predicate after '.', got {op!r}")
            end = self._formula_slice_end()
            chunk = self.text[self.pos:end]
            try:
                rhs = parse_term(chunk, self.arities)
            except ParseError as e:
                raise ParseError(e.message, self.base + self.pos + e.pos) from None
            self.pos = end
            return Continuation(op, rhs)
        return self.formula()


def parse_step(text: str, arities: ArityTable | None = None) -> ProofStep:
    """Parse a single proof step."""
    p = _StepParser(text, arities or DEFAULT_ARITY_TABLE)
    step = p.step()
    if not p.at_end():
        raise p.error(f"trailing input {p.text[p.pos:].strip()!r}")
    return step


def parse_script(text: str, arities: ArityTable | None = None) -> ProofScript:
    """Parse a whole script; 'proof' and 'qed' wrappers are optional."""
    body = text
    stripped = body.strip()
    if stripped.startswith("proof"):
        idx = body.index("proof")
        body = body[:idx] + "     " + body[idx + 5:]
    steps: list[ProofStep] = []
    spans: list[Span] = []
    at = arities or DEFAULT_ARITY_TABLE
    for chunk, span in _split_steps(body):
        p = _StepParser(chunk, at, base=span.start)
        step = p.step()
        trailing_qed = False
        if not p.at_end() and p.peek_word() == "qed":
            p.take_word()
            trailing_qed = True
        if not p.at_end():
            raise ParseError(f"trailing input {p.text[p.pos:].strip()!r}", span.start + p.pos)
        steps.append(step)
        spans.append(span)
        if trailing_qed:
            steps.append(Qed())
            spans.append(span)
    qeds = [i for i, s in enumerate(steps) if isinstance(s, Qed)]
    if qeds and (len(qeds) > 1 or qeds[0] != len(steps) - 1):
        raise ParseError("qed may appear at most once, as the last step", spans[qeds[0]].start)
    return ProofScript(tuple(steps), tuple(spans))


# ---------------------------------------------------------------------------
# Printing


def render_step(step: ProofStep) -> str:
    if isinstance(step, Assume):
        parts = ["assume " + " and ".join(render_formula(h) for h in step.hypotheses)]
        if step.from_labels:
            parts.append("from " + ", ".join(step.from_labels))
        if step.thus is not None:
            parts.append("thus " + render_formula(step.thus))
        return " ".join(parts)
    if isinstance(step, Fact):
        if isinstance(step.formula, Continuation):
            core = f".{step.formula.binop} {render_term(step.formula.rhs)}"
        else:
            core = render_formula(step.formula)
        if step.keyword:
            core = f"{step.keyword} {core}"
        if step.by:
            core += f" by {step.by}"
        if step.from_labels:
            core += " from " + ", ".join(step.from_labels)
        return core
    if isinstance(step, Subgoal):
        core = "subgoal " + render_formula(step.goal)
        if step.using:
            core += " using " + " and ".join(render_formula(u) for u in step.using)
        if step.by:
            core += f" by {step.by}"
        return core
    if isinstance(step, Subgoals):
        core = "subgoals " + " ".join(render_step(g) for g in step.goals)
        if step.by:
            core += f" by {step.by}"
        return core
    if isinstance(step, Cases):
        bits = []
        for br in step.branches:
            piece = render_formula(br.formula)
            if br.steps:
                inner = "; ".join(render_step(s) for s in br.steps)
                piece += " { " + inner + " }"
            bits.append(piece)
        core = "cases " + ", ".join(bits)
        if step.by:
            core += f" by {step.by}"
        if step.from_labels:
            core += " from " + ", ".join(step.from_labels)
        return core
    if isinstance(step, SetStep):
        rhs = []
        for name, value in step.bindings:
            if isinstance(value, Formula):
                rhs.append(f"{name}=({render_formula(value)})")
            else:
                rhs.append(f"{name}={render_term(value)}")
        return "set " + ", ".join(rhs)
    if isinstance(step, Trivial):
        core = "trivial"
        if step.by:
            core += f" by {step.by}"
        if step.from_labels:
            core += " from " + ", ".join(step.from_labels)
        return core
    if isinstance(step, Qed):
        return "qed"
    raise TypeError(f"unknown step {step!r}")


def render_script(script: ProofScript) -> str:
    return "\n".join(render_step(s) for s in script.steps)
