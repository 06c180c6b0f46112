"""Strategy DSL and hierarchical plan construction.

Strategies are combinator expressions over assertion-level rule
applications.  Running one produces a plan: a task graph whose strategy
edges refine into child edges, down to single inference applications.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .logic import Formula, Or, Sequent, Substitution, EMPTY_SUBST, render_formula, substitute
from .rules import (
    InferenceRule,
    RuleApplication,
    applicable_rules,
    apply_to_sequent,
    deepaxiom_candidates,
    is_productive,
    or_split,
    theory_rules,
)
from .theory import Theory


class StrategyError(Exception):
    pass


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Call:
    name: str


@dataclass(frozen=True)
class Seq:
    first: "StrategyExpr"
    then: "StrategyExpr"


@dataclass(frozen=True)
class Try:
    body: "StrategyExpr"


@dataclass(frozen=True)
class Repeat:
    body: "StrategyExpr"


@dataclass(frozen=True)
class First:
    alternatives: tuple["StrategyExpr", ...]


@dataclass(frozen=True)
class UseSelect:
    selector: str  # only "*" for now
    source: str  # definitions | theorems | assertions
    direction: str  # backward | forward


@dataclass(frozen=True)
class Builtin:
    name: str  # deepaxiom | or-l


StrategyExpr = Union[Call, Seq, Try, Repeat, First, UseSelect, Builtin]

BUILTINS = ("deepaxiom", "or-l")
SOURCES = ("definitions", "theorems", "assertions")


# ---------------------------------------------------------------------------
# Parser

import re

_TOK = re.compile(r"[A-Za-z_][A-Za-z0-9_'-]*|\*|,")


def _tokens(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        out.extend(_TOK.findall(line))
    return out


class _P:
    def __init__(self, toks: list[str]):
        self.toks = toks
        self.i = 0

    def peek(self) -> Optional[str]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> str:
        t = self.peek()
        if t is None:
            raise StrategyError("unexpected end of strategy text")
        self.i += 1
        return t

    def expect(self, t: str):
        got = self.next()
        if got != t:
            raise StrategyError(f"expected {t!r}, got {got!r}")

    def expr(self) -> StrategyExpr:
        left = self.unit()
        if self.peek() == "then":
            self.next()
            return Seq(left, self.expr())
        return left

    def unit(self) -> StrategyExpr:
        t = self.peek()
        if t == "try":
            self.next()
            return Try(self.unit())
        if t == "repeat":
            self.next()
            return Repeat(self.unit())
        if t == "first":
            self.next()
            alts = [self.unit()]
            while self.peek() == ",":
                self.next()
                alts.append(self.unit())
            return First(tuple(alts))
        if t == "use":
            self.next()
            self.expect("select")
            sel = self.next()
            if sel != "*":
                raise StrategyError(f"unsupported selector {sel!r}")
            self.expect("from")
            source = self.next()
            if source not in SOURCES:
                raise StrategyError(f"unknown rule set {source!r}")
            self.expect("as")
            direction = self.next()
            if direction not in ("backward", "forward"):
                raise StrategyError(f"unknown direction {direction!r}")
            return UseSelect(sel, source, direction)
        if t is None:
            raise StrategyError("unexpected end of strategy text")
        name = self.next()
        if name in BUILTINS:
            return Builtin(name)
        return Call(name)


def parse_strategies(text: str) -> dict[str, StrategyExpr]:
    """Parse `strategy <name> <expr>` blocks into a resolved table."""
    toks = _tokens(text)
    table: dict[str, StrategyExpr] = {}
    i = 0
    while i < len(toks):
        if toks[i] != "strategy":
            raise StrategyError(f"expected 'strategy', got {toks[i]!r}")
        name = toks[i + 1]
        j = i + 2
        while j < len(toks) and toks[j] != "strategy":
            j += 1
        body = toks[i + 2:j]
        if not body:
            raise StrategyError(f"strategy {name!r} has an empty body")
        p = _P(body)
        expr = p.expr()
        if p.peek() is not None:
            raise StrategyError(f"trailing tokens in strategy {name!r}: {p.peek()!r}")
        if name in table:
            raise StrategyError(f"duplicate strategy {name!r}")
        table[name] = expr
        i = j
    _check_resolved(table)
    return table


def _check_resolved(table: dict[str, StrategyExpr]):
    def calls(e: StrategyExpr) -> Iterator[str]:
        if isinstance(e, Call):
            yield e.name
        elif isinstance(e, Seq):
            yield from calls(e.first)
            yield from calls(e.then)
        elif isinstance(e, (Try, Repeat)):
            yield from calls(e.body)
        elif isinstance(e, First):
            for a in e.alternatives:
                yield from calls(a)

    for name, expr in table.items():
        for c in calls(expr):
            if c not in table:
                raise StrategyError(f"strategy {name!r} calls unknown strategy {c!r}")
    # reject call cycles (loops belong to `repeat`)
    visiting: set[str] = set()
    done: set[str] = set()

    def visit(name: str):
        if name in done:
            return
        if name in visiting:
            raise StrategyError(f"strategy call cycle through {name!r}")
        visiting.add(name)
        for c in calls(table[name]):
            visit(c)
        visiting.discard(name)
        done.add(name)

    for name in table:
        visit(name)


# ---------------------------------------------------------------------------
# Plans


@dataclass
class PlanEdge:
    label: str  # strategy name, rule name, or builtin name
    kind: str  # strategy | inference | builtin
    source: str  # node id
    targets: tuple[str, ...]
    children: tuple["PlanEdge", ...] = ()
    app: Optional[RuleApplication] = None

    def depth_iter(self, depth: int = 0) -> Iterator[tuple[int, "PlanEdge"]]:
        yield depth, self
        for c in self.children:
            yield from c.depth_iter(depth + 1)


@dataclass
class HierarchicalProofPlan:
    nodes: dict[str, Sequent]
    roots: tuple[str, ...]
    edges: tuple[PlanEdge, ...]  # top-level edges, ordered most-abstract-first
    open_leaves: tuple[str, ...] = ()
    closed: bool = False

    def all_edges(self) -> Iterator[PlanEdge]:
        for e in self.edges:
            for _, sub in e.depth_iter():
                yield sub

    def all_sequents(self) -> Iterator[Sequent]:
        return iter(self.nodes.values())

    def inference_edges(self) -> list[PlanEdge]:
        return [e for e in self.all_edges() if e.kind in ("inference", "builtin")]

    def render(self, level: int | None = None) -> str:
        lines = []
        for e in self.edges:
            for depth, sub in e.depth_iter():
                if level is not None and depth > level:
                    continue
                tgt = ",".join(sub.targets) or "closed"
                lines.append("  " * depth + f"{sub.source} -[{sub.label}]-> {tgt}")
        return "\n".join(lines)


def flatten_at_level(plan: HierarchicalProofPlan, level: int | set[str]) -> list[PlanEdge]:
    """Flat edge sequence at a nesting depth (int) or for a named selection.

    Expanding a strategy edge replaces it by its children; inference edges
    are kept once reached.
    """
    if isinstance(level, int):
        if level < 0:
            raise StrategyError("level must be non-negative")

        def expand(edge: PlanEdge, depth: int) -> list[PlanEdge]:
            if depth >= level or not edge.children:
                return [edge]
            out = []
            for c in edge.children:
                out.extend(expand(c, depth + 1))
            return out

        result: list[PlanEdge] = []
        for e in plan.edges:
            result.extend(expand(e, 0))
        return result

    selection = set(level)
    known = {e.label for e in plan.all_edges()}
    missing = selection - known
    if missing:
        raise StrategyError(f"selection names unknown edges: {sorted(missing)}")

    def expand_sel(edge: PlanEdge) -> list[PlanEdge]:
        if edge.label in selection or not edge.children:
            return [edge]
        out = []
        for c in edge.children:
            out.extend(expand_sel(c))
        return out

    result = []
    for e in plan.edges:
        result.extend(expand_sel(e))
    return result


# ---------------------------------------------------------------------------
# Execution


class _Plan:
    """Mutable plan builder shared by one strategy run."""

    def __init__(self, root: Sequent):
        self.nodes: dict[str, Sequent] = {}
        self.counter = 0
        root_id = self.add_node(root)
        self.root_id = root_id
        self.sigma = EMPTY_SUBST

    def add_node(self, s: Sequent) -> str:
        self.counter += 1
        node_id = f"T{self.counter}"
        self.nodes[node_id] = Sequent(s.hyps, s.goal, node_id, s.views)
        return node_id

    def apply_bindings(self, sub: Substitution):
        if not sub:
            return
        self.sigma = self.sigma.compose(sub)
        for nid, s in self.nodes.items():
            self.nodes[nid] = Sequent(
                tuple(substitute(h, sub) for h in s.hyps),
                substitute(s.goal, sub),
                s.label,
                tuple(substitute(v, sub) for v in s.views),
            )


class _Budget:
    def __init__(self, n: int):
        self.left = n

    def spend(self) -> bool:
        self.left -= 1
        return self.left >= 0


class _Exec:
    def __init__(self, theory: Theory, table: dict[str, StrategyExpr], budget: _Budget):
        self.theory = theory
        self.table = table
        self.budget = budget
        self.rule_sets = {
            "definitions": rules_of(theory, ("definition",)),
            "theorems": rules_of(theory, ("theorem",)),
            "assertions": rules_of(theory, ("definition", "theorem")),
        }
        self.exhausted = False
        self.seen_tasks: set[str] = set()

    def run(self, expr: StrategyExpr, tasks: list[str], plan: _Plan,
            edges: list[PlanEdge]) -> Optional[list[str]]:
        """Execute expr over open tasks; returns surviving open tasks or None
        when the expression made no progress."""
        if not self.budget.spend():
            self.exhausted = True
            return None
        if isinstance(expr, Call):
            sub_edges: list[PlanEdge] = []
            result_tasks: list[str] = []
            progressed = False
            remaining = list(tasks)
            for t in list(tasks):
                inner: list[PlanEdge] = []
                got = self.run(self.table[expr.name], [t], plan, inner)
                if got is None:
                    result_tasks.append(t)
                    continue
                progressed = True
                edges.append(
                    PlanEdge(expr.name, "strategy", t, tuple(got), tuple(inner))
                )
                result_tasks.extend(got)
            return result_tasks if progressed else None
        if isinstance(expr, Seq):
            first = self.run(expr.first, tasks, plan, edges)
            base = tasks if first is None else first
            second = self.run(expr.then, list(base), plan, edges)
            if first is None and second is None:
                return None
            return second if second is not None else base
        if isinstance(expr, Try):
            got = self.run(expr.body, tasks, plan, edges)
            return got if got is not None else list(tasks)
        if isinstance(expr, Repeat):
            current = list(tasks)
            progressed = False
            while True:
                got = self.run(expr.body, current, plan, edges)
                if got is None:
                    break
                progressed = True
                if got == current:
                    break
                current = got
                if self.exhausted:
                    break
            return current if progressed else None
        if isinstance(expr, First):
            out: list[str] = []
            progressed = False
            for t in tasks:
                moved = False
                for alt in expr.alternatives:
                    got = self.run(alt, [t], plan, edges)
                    if got is not None:
                        out.extend(got)
                        moved = True
                        progressed = True
                        break
                if not moved:
                    out.append(t)
            return out if progressed else None
        if isinstance(expr, UseSelect):
            return self._use_select(expr, tasks, plan, edges)
        if isinstance(expr, Builtin):
            return self._builtin(expr.name, tasks, plan, edges)
        raise StrategyError(f"unknown expression {expr!r}")

    # -- primitive steps ----------------------------------------------------

    def _use_select(self, expr: UseSelect, tasks: list[str], plan: _Plan,
                    edges: list[PlanEdge]) -> Optional[list[str]]:
        rules = self.rule_sets[expr.source]
        progressed = False
        frontier = list(tasks)
        out: list[str] = []
        while frontier:
            tid = frontier.pop(0)
            s = plan.nodes[tid]
            apps = applicable_rules(s, rules, direction=expr.direction)
            chosen = None
            for app in apps:
                # goal rewrites that would introduce meta-variables commit the
                # search too early; strategies leave them to logic closure
                if expr.direction == "backward" and app.rule.mv_params:
                    continue
                if not is_productive(app, s):
                    continue
                chosen = app
                break
            if chosen is None:
                out.append(tid)
                continue
            if not self.budget.spend():
                self.exhausted = True
                out.append(tid)
                out.extend(frontier)
                return out if progressed else None
            produced = apply_to_sequent(chosen, s)
            plan.apply_bindings(chosen.state_subst)
            targets = [plan.add_node(p) for p in produced]
            edges.append(PlanEdge(chosen.rule.name, "inference", tid, tuple(targets), (), chosen))
            progressed = True
            frontier = targets + frontier  # keep working on the produced tasks
        return out if progressed else None

    def _builtin(self, name: str, tasks: list[str], plan: _Plan,
                 edges: list[PlanEdge]) -> Optional[list[str]]:
        progressed = False
        out: list[str] = []
        for tid in tasks:
            s = plan.nodes[tid]
            if name == "deepaxiom":
                cands = deepaxiom_candidates(s, plan.sigma)
                if cands:
                    cand = cands[0]
                    plan.apply_bindings(cand.state_subst)
                    edges.append(PlanEdge("deepaxiom", "builtin", tid, (), (), cand))
                    progressed = True
                    continue
                out.append(tid)
            elif name == "or-l":
                got = or_split(s)
                if got is not None:
                    app, parts = got
                    targets = [plan.add_node(p) for p in parts]
                    edges.append(PlanEdge("or-l", "builtin", tid, tuple(targets), (), app))
                    out.extend(targets)
                    progressed = True
                    continue
                out.append(tid)
            else:
                raise StrategyError(f"unknown builtin {name!r}")
        return out if progressed else None


def rules_of(theory: Theory, kinds: tuple[str, ...]) -> list[InferenceRule]:
    from .rules import synthesize_inferences

    out = []
    for a in theory.assertions:
        if a.kind in kinds:
            out.extend(synthesize_inferences(a))
    return out


def strategy_table(theory: Theory) -> dict[str, StrategyExpr]:
    return parse_strategies(theory.strategy_source)


def run_strategy(
    name: str,
    task: Sequent,
    theory: Theory,
    budget: int = 5000,
) -> Optional[HierarchicalProofPlan]:
    """Execute a named strategy on a task; None when it fails or the budget
    runs out before any result."""
    outcome = execute_strategy(name, task, theory, budget)
    return outcome.plan


@dataclass
class StrategyOutcome:
    plan: Optional[HierarchicalProofPlan]
    budget_exhausted: bool = False


def execute_strategy(name: str, task: Sequent, theory: Theory, budget: int = 5000) -> StrategyOutcome:
    table = strategy_table(theory)
    if name not in table:
        raise StrategyError(f"unknown strategy {name!r}")
    if budget <= 0:
        return StrategyOutcome(None, budget_exhausted=True)
    plan_builder = _Plan(task)
    ex = _Exec(theory, table, _Budget(budget))
    edges: list[PlanEdge] = []
    got = ex.run(Call(name), [plan_builder.root_id], plan_builder, edges)
    if ex.exhausted:
        return StrategyOutcome(None, budget_exhausted=True)
    if got is None:
        return StrategyOutcome(None)
    plan = HierarchicalProofPlan(
        nodes=dict(plan_builder.nodes),
        roots=(plan_builder.root_id,),
        edges=tuple(edges),
        open_leaves=tuple(got),
        closed=not got,
    )
    return StrategyOutcome(plan)
