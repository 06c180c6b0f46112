"""Theories (assertions, buggy rules, strategies) and exercises.

Theory files are line oriented; ``strategy`` blocks are kept verbatim and
parsed later by the strategy engine.  The binary-relations domain ships as
package data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .logic import (
    ArityTable,
    Formula,
    LogicError,
    ParseError,
    formula_metavars,
    free_vars,
    parse_formula,
    render_formula,
)


class TheoryError(Exception):
    pass


@dataclass(frozen=True)
class Assertion:
    label: str
    formula: Formula
    kind: str  # definition | theorem | buggy
    message: Optional[str] = None
    concept: str = ""

    def __post_init__(self):
        if not self.concept:
            object.__setattr__(self, "concept", self.label)
        if self.kind not in ("definition", "theorem", "buggy"):
            raise TheoryError(f"unknown assertion kind {self.kind!r}")
        if self.kind == "buggy" and not (self.message or "").strip():
            raise TheoryError(f"buggy assertion {self.label!r} needs a student-facing message")
        if free_vars(self.formula) or formula_metavars(self.formula):
            raise TheoryError(f"assertion {self.label!r} must be closed")


@dataclass(frozen=True)
class Theory:
    name: str
    arities: ArityTable
    assertions: tuple[Assertion, ...]
    strategy_source: str = ""

    def assertion(self, label: str) -> Assertion:
        for a in self.assertions:
            if a.label == label:
                return a
        raise KeyError(label)

    def by_kind(self, kind: str) -> tuple[Assertion, ...]:
        return tuple(a for a in self.assertions if a.kind == kind)

    @property
    def non_buggy(self) -> tuple[Assertion, ...]:
        return tuple(a for a in self.assertions if a.kind != "buggy")


@dataclass(frozen=True)
class Exercise:
    id: str
    theory_name: str
    goal: Formula
    depth_limit: int = 4
    strategy: str = "close-by-definition"
    classifier: str = "paper-fig"

    def __post_init__(self):
        if self.depth_limit < 1:
            raise TheoryError("depth limit must be at least 1")


# ---------------------------------------------------------------------------
# Theory format


def parse_theory(text: str, name_hint: str = "") -> Theory:
    name = name_hint
    extra_arities: dict[str, int] = {}
    assertions: list[Assertion] = []
    strategy_lines: list[str] = []
    labels: set[str] = set()

    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = lines[i]
        line = raw.strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if line.startswith("theory "):
            name = line[len("theory "):].strip()
            continue
        if line.startswith("symbol "):
            body = line[len("symbol "):].strip()
            if "/" not in body:
                raise TheoryError(f"bad symbol declaration: {line!r}")
            sym, arity = body.split("/", 1)
            try:
                extra_arities[sym.strip()] = int(arity)
            except ValueError:
                raise TheoryError(f"bad arity in {line!r}") from None
            continue
        if line.startswith("strategy"):
            # verbatim block: runs to the next top-level keyword
            strategy_lines.append(line)
            while i < len(lines):
                nxt = lines[i].strip()
                if nxt.startswith(("theory ", "symbol ", "definition ", "theorem ", "buggy ", "strategy")):
                    break
                strategy_lines.append(lines[i].rstrip())
                i += 1
            continue
        kind = None
        for kw in ("definition", "theorem", "buggy"):
            if line.startswith(kw + " "):
                kind = kw
                break
        if kind is None:
            raise TheoryError(f"unrecognised theory line: {line!r}")
        rest = line[len(kind) + 1:].strip()
        message = None
        if kind == "buggy":
            # buggy <label> "<message>": <formula>
            if '"' not in rest:
                raise TheoryError(f"buggy assertion needs a message: {line!r}")
            label_part, after = rest.split('"', 1)
            label = label_part.strip()
            if '"' not in after:
                raise TheoryError(f"unterminated message in {line!r}")
            message, after = after.split('"', 1)
            if not after.strip().startswith(":"):
                raise TheoryError(f"expected ':' after message in {line!r}")
            formula_text = after.strip()[1:]
        else:
            if ":" not in rest:
                raise TheoryError(f"expected ':' in {line!r}")
            label, formula_text = rest.split(":", 1)
            label = label.strip()
        if label in labels:
            raise TheoryError(f"duplicate assertion label {label!r}")
        labels.add(label)
        arities = ArityTable().copy_with(extra_arities)
        try:
            formula = parse_formula(formula_text.strip(), arities)
        except ParseError as e:
            raise TheoryError(f"in assertion {label!r}: {e}") from None
        try:
            assertions.append(Assertion(label, formula, kind, message))
        except TheoryError:
            raise
        except LogicError as e:
            raise TheoryError(f"in assertion {label!r}: {e}") from None

    if not name:
        raise TheoryError("theory has no name")
    return Theory(
        name=name,
        arities=ArityTable().copy_with(extra_arities),
        assertions=tuple(assertions),
        strategy_source="\n".join(strategy_lines),
    )


def render_theory(t: Theory) -> str:
    out = [f"theory {t.name}", ""]
    from .logic import DEFAULT_ARITIES

    for sym, arity in t.arities.arities.items():
        out.append(f"symbol {sym}/{arity}")
    out.append("")
    for a in t.assertions:
        if a.kind == "buggy":
            out.append(f'buggy {a.label} "{a.message}": {render_formula(a.formula)}')
        else:
            out.append(f"{a.kind} {a.label}: {render_formula(a.formula)}")
    if t.strategy_source:
        out.append("")
        out.append(t.strategy_source)
    return "\n".join(out) + "\n"


def load_theory(path: str | Path) -> Theory:
    path = Path(path)
    return parse_theory(path.read_text(), name_hint=path.stem)


# ---------------------------------------------------------------------------
# Exercise format


def parse_exercise(text: str) -> Exercise:
    ex_id = ""
    theory_name = ""
    goal_text = ""
    depth = 4
    strategy = "close-by-definition"
    classifier = "paper-fig"
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("exercise "):
            rest = line[len("exercise "):]
            if " in " not in rest:
                raise TheoryError(f"expected 'exercise <id> in <theory>': {line!r}")
            ex_id, theory_name = (p.strip() for p in rest.split(" in ", 1))
        elif line.startswith("goal:"):
            goal_text = line[len("goal:"):].strip()
        elif line.startswith("depth:"):
            depth = int(line[len("depth:"):].strip())
        elif line.startswith("strategy:"):
            strategy = line[len("strategy:"):].strip()
        elif line.startswith("classifier:"):
            classifier = line[len("classifier:"):].strip()
        else:
            raise TheoryError(f"unrecognised exercise line: {line!r}")
    if not ex_id or not theory_name or not goal_text:
        raise TheoryError("exercise needs an id, a theory, and a goal")
    goal = parse_formula(goal_text)
    return Exercise(ex_id, theory_name, goal, depth, strategy, classifier)


def render_exercise(ex: Exercise) -> str:
    return (
        f"exercise {ex.id} in {ex.theory_name}\n"
        f"goal: {render_formula(ex.goal)}\n"
        f"depth: {ex.depth_limit}\n"
        f"strategy: {ex.strategy}\n"
        f"classifier: {ex.classifier}\n"
    )


def load_exercise(path: str | Path) -> Exercise:
    return parse_exercise(Path(path).read_text())


# ---------------------------------------------------------------------------
# Bundled data


def data_dir() -> Path:
    return Path(str(resources.files("prooftutor").joinpath("data")))


class Library:
    """Resolves theories, exercises and classifiers from a directory."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root else data_dir()
        self._theories: dict[str, Theory] = {}
        self._exercises: dict[str, Exercise] = {}

    def theory(self, name: str) -> Theory:
        if name not in self._theories:
            path = self.root / f"{name}.thy"
            if not path.exists():
                raise TheoryError(f"unknown theory {name!r} (looked in {self.root})")
            self._theories[name] = load_theory(path)
        return self._theories[name]

    def exercise(self, ex_id: str) -> Exercise:
        if ex_id not in self._exercises:
            path = self.root / f"{ex_id}.ex"
            if not path.exists():
                raise TheoryError(f"unknown exercise {ex_id!r} (looked in {self.root})")
            ex = load_exercise(path)
            # eagerly validate the theory reference and the goal's symbols
            theory = self.theory(ex.theory_name)
            parse_formula(render_formula(ex.goal), theory.arities)
            self._exercises[ex_id] = ex
        return self._exercises[ex_id]

    def exercises(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.ex"))

    def theories(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.thy"))

    def classifier_path(self, name: str) -> Path:
        path = self.root / f"{name}.tree"
        if not path.exists():
            raise TheoryError(f"unknown classifier {name!r} (looked in {self.root})")
        return path

    def corpus_path(self, name: str) -> Path:
        path = self.root / name
        if path.exists():
            return path
        path = self.root / f"{name}.corpus"
        if not path.exists():
            raise TheoryError(f"unknown corpus {name!r} (looked in {self.root})")
        return path
