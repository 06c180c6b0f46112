"""Hint ladders: turning a hierarchical plan into increasingly explicit help.

The ladder walks the plan's first-step edges from the most abstract strategy
down to the concrete inference, raising the hint category as it descends.
Texts come from slot templates; categories 2-6 have question-style variants
used in socratic mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .logic import Formula, render_formula
from .strategy import HierarchicalProofPlan, PlanEdge
from .theory import Theory

#: hint categories, by increasing explicitness
CATEGORY_NAMES = {
    1: "strategic",
    2: "variables",
    3: "concept",
    4: "backward-premises",
    5: "subgoal-pointer",
    6: "forward-conclusion",
    7: "full-application",
    8: "application-with-assertion",
}


@dataclass(frozen=True)
class HintTemplate:
    category: int
    applies_to: str  # "strategy" | "inference"
    direction: Optional[str] = None  # backward | forward | None
    text: str = ""
    strategy: Optional[str] = None  # template bound to one strategy name

    def matches(self, edge: PlanEdge) -> bool:
        if self.applies_to == "strategy":
            if edge.kind != "strategy":
                return False
            return self.strategy is None or self.strategy == edge.label
        if edge.kind not in ("inference", "builtin"):
            return False
        if self.direction and edge.app is not None:
            if edge.app.rule.direction != self.direction:
                return False
        return True


@dataclass(frozen=True)
class Hint:
    category: Optional[int]
    text: str
    level: int
    edge_label: str = ""
    edge_source: str = ""

    @property
    def category_name(self) -> str:
        if self.category is None:
            return "encouragement"
        return CATEGORY_NAMES[self.category]


FALLBACK_HINT = Hint(
    category=None,
    text="No worked-out continuation is known from here. Look again at what "
    "you already know and at what remains to be shown.",
    level=0,
)

#: strategy-level texts for the bundled strategies
STRATEGY_TEXTS = {
    "work-backward": "Try to work backward from the goal.",
    "work-forward": "Try to derive new facts from your assumptions.",
    "close-by-definition": "Try to apply definitions on the goal and assumptions.",
    "close-by-logic": "Try to close the goal by matching it against what you already know.",
}

GENERIC_STRATEGIC = "What assertion can be applied backward to the goal?"

DEFAULT_TEMPLATES: tuple[HintTemplate, ...] = (
    HintTemplate(2, "inference", None, "Can you say anything about {variables}?"),
    HintTemplate(3, "inference", None, "Try to apply {assertion}"),
    HintTemplate(
        4, "inference", "backward",
        "If you want to show that {goal}, what should be true about these sets?",
    ),
    HintTemplate(5, "inference", None, "Try to apply {assertion} on {goal}"),
    HintTemplate(
        6, "inference", "forward", "What can you conclude if you know that {premises}?"
    ),
    HintTemplate(
        7, "inference", "backward",
        "By the application of {assertion} we obtain the new goal {conclusion}",
    ),
    HintTemplate(
        7, "inference", "forward",
        "By the application of {assertion} we obtain {conclusion}",
    ),
    HintTemplate(
        8, "inference", None,
        "Apply {assertion}, which states: {assertion_formula}. We obtain {conclusion}",
    ),
    HintTemplate(
        8, "inference", None,
        "Apply {assertion}. We obtain {conclusion}",
    ),
)

SOCRATIC_TEMPLATES: tuple[HintTemplate, ...] = (
    HintTemplate(3, "inference", None, "Is there a definition that fits {goal}?"),
    HintTemplate(5, "inference", None, "How can you show that {goal}?"),
) + tuple(t for t in DEFAULT_TEMPLATES if t.category in (2, 4, 6, 7, 8))


class TemplateError(Exception):
    pass


def parse_templates(text: str) -> tuple[HintTemplate, ...]:
    """`template <category> for <strategy|inference> <direction?>: "<text>"` lines."""
    out = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith("template "):
            raise TemplateError(f"unrecognised template line: {line!r}")
        head, _, quoted = line.partition(":")
        bits = head.split()
        if len(bits) < 4 or bits[2] != "for":
            raise TemplateError(f"bad template head: {head!r}")
        category = int(bits[1])
        if category not in CATEGORY_NAMES:
            raise TemplateError(f"category out of range: {category}")
        target = bits[3]
        direction = bits[4] if len(bits) > 4 else None
        quoted = quoted.strip()
        if not (quoted.startswith('"') and quoted.endswith('"')):
            raise TemplateError(f"template text must be quoted: {line!r}")
        if target in ("strategy", "inference"):
            out.append(HintTemplate(category, target, direction, quoted[1:-1]))
        else:
            out.append(HintTemplate(category, "strategy", None, quoted[1:-1], strategy=target))
    return tuple(out)


def load_templates(path: str | Path) -> tuple[HintTemplate, ...]:
    return parse_templates(Path(path).read_text())


# ---------------------------------------------------------------------------
# Slot filling


class SlotError(Exception):
    pass


def _slots_for(edge: PlanEdge, plan: HierarchicalProofPlan, theory: Optional[Theory]) -> dict:
    slots: dict[str, str] = {}
    source = plan.nodes.get(edge.source)
    if source is not None:
        shown = source.views[0] if source.views else source.goal
        slots["goal"] = render_formula(shown)
    slots["strategy"] = edge.label
    app = edge.app
    if app is not None:
        slots["assertion"] = app.rule.concept or app.rule.name
        if app.consumed and app.rule.direction == "forward":
            slots["premises"] = " and ".join(render_formula(c) for c in app.consumed)
        if app.rule.direction == "backward" and app.new_sequents:
            if app.premise_instance is not None:
                slots["conclusion"] = render_formula(app.premise_instance)
            else:
                goals = [render_formula(g) for _, g, _ in app.new_sequents]
                slots["conclusion"] = " and ".join(goals)
        elif app.produced_hyps:
            slots["conclusion"] = " and ".join(render_formula(h) for h in app.produced_hyps)
        if app.fresh_names:
            slots["variables"] = ", ".join(app.fresh_names)
        elif app.consumed:
            names = []
            for c in app.consumed:
                from .logic import formula_consts

                names.extend(sorted(formula_consts(c)))
            if names:
                slots["variables"] = ", ".join(dict.fromkeys(names))
        if theory is not None and app.rule.concept:
            try:
                slots["assertion_formula"] = render_formula(
                    theory.assertion(app.rule.concept).formula
                )
            except KeyError:
                pass
    return slots


def instantiate_template(t: HintTemplate, edge: PlanEdge, plan: HierarchicalProofPlan,
                         theory: Optional[Theory] = None) -> str:
    """Fill the template's slots; raises SlotError when a slot has no value."""
    slots = _slots_for(edge, plan, theory)
    text = t.text
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "{":
            j = text.index("}", i)
            name = text[i + 1:j]
            if name not in slots:
                raise SlotError(f"slot {{{name}}} not fillable for edge {edge.label}")
            out.append(slots[name])
            i = j + 1
        else:
            out.append(ch)
            i += 1
    return "".join(out)


# ---------------------------------------------------------------------------
# The ladder


def _first_step_chain(plan: HierarchicalProofPlan) -> list[tuple[int, PlanEdge]]:
    """Edges out of the root task, most abstract first, with their depths."""
    chain: list[tuple[int, PlanEdge]] = []
    if not plan.edges:
        return chain
    edge = plan.edges[0]
    depth = 0
    while True:
        chain.append((depth, edge))
        if edge.kind == "strategy" and edge.children:
            edge = edge.children[0]
            depth += 1
        else:
            break
    return chain


def _ladder(plan: HierarchicalProofPlan) -> list[tuple[int, int, PlanEdge]]:
    """(level, category, edge) per ladder position."""
    chain = _first_step_chain(plan)
    if not chain:
        return []
    # the outermost edge usually spans the whole remaining proof; its first
    # child carries the actionable advice, so skip it when it has children
    if len(chain) > 1:
        chain = chain[1:]
    positions: list[tuple[int, int, PlanEdge]] = []
    for depth, edge in chain[:-1]:
        positions.append((depth, 1, edge))
    last_depth, last_edge = chain[-1]
    if last_edge.kind == "strategy":
        positions.append((last_depth, 1, last_edge))
    else:
        for cat in (3, 5, 7, 8):
            positions.append((last_depth, cat, last_edge))
    return positions


def generate_hint(
    plan: Optional[HierarchicalProofPlan],
    ladder_position: int,
    theory: Optional[Theory] = None,
    templates: tuple[HintTemplate, ...] = DEFAULT_TEMPLATES,
    socratic: bool = False,
) -> Hint:
    """The hint for the given position; positions past the end repeat the
    most explicit hint (bottom-out)."""
    if ladder_position < 0:
        raise ValueError("ladder position must be non-negative")
    if plan is None or not plan.edges:
        return FALLBACK_HINT
    ladder = _ladder(plan)
    if not ladder:
        return FALLBACK_HINT
    pos = min(ladder_position, len(ladder) - 1)
    level, category, edge = ladder[pos]
    if category == 1:
        text = STRATEGY_TEXTS.get(edge.label)
        if text is None:
            text = GENERIC_STRATEGIC
        return Hint(1, text, level, edge.label, edge.source)
    pool = (SOCRATIC_TEMPLATES if socratic else ()) + templates
    for t in sorted(pool, key=lambda t: (t.category != category,)):
        if t.category != category or not t.matches(edge):
            continue
        try:
            text = instantiate_template(t, edge, plan, theory)
        except SlotError:
            continue
        return Hint(category, text, level, edge.label, edge.source)
    # no template fit this category: fall back to naming the inference
    name = edge.app.rule.concept if edge.app is not None else edge.label
    return Hint(category, f"Try to apply {name}", level, edge.label, edge.source)


def ladder_length(plan: Optional[HierarchicalProofPlan]) -> int:
    if plan is None:
        return 0
    return len(_ladder(plan))
