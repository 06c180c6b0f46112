"""Step-size analysis: feature extraction, classifiers, student model.

A verified step's implicit trace is summarised as a numeric feature vector
and classified as appropriate / too_small / too_big.  Classifiers load from
s-expression files (decision trees, rule lists, or linear scorers) and are
validated for totality; they are never trained here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .script import Assume, Fact, ProofStep, Subgoal, Subgoals, Trivial

FEATURES = ("total", "mcu", "unmastered", "hypintro", "relations", "verbalized")

VERDICTS = ("appropriate", "too_small", "too_big")


class ClassifierError(Exception):
    pass


@dataclass(frozen=True)
class GranularityFeatures:
    total: int
    mastered_used: int
    unmastered: int
    hypintro: int
    distinct_concepts: int
    verbalized: bool = False

    def value(self, feature: str) -> int:
        if feature == "total":
            return self.total
        if feature == "mcu":
            return self.mastered_used
        if feature == "unmastered":
            return self.unmastered
        if feature == "hypintro":
            return self.hypintro
        if feature == "relations":
            return self.distinct_concepts
        if feature == "verbalized":
            return int(self.verbalized)
        raise ClassifierError(f"unknown feature {feature!r}")


@dataclass(frozen=True)
class GranularityVerdict:
    verdict: str
    features: GranularityFeatures


@dataclass
class StudentModel:
    """Overlay model: per concept, how often it was used correctly and
    whether that crossed the mastery threshold."""

    mastery_threshold: int = 3
    correct_uses: dict[str, int] = field(default_factory=dict)
    mastered: set[str] = field(default_factory=set)

    def is_mastered(self, concept: str) -> bool:
        return concept in self.mastered

    def note_correct_use(self, concept: str):
        n = self.correct_uses.get(concept, 0) + 1
        self.correct_uses[concept] = n
        if n >= self.mastery_threshold:
            self.mastered.add(concept)

    def snapshot(self) -> dict:
        return {
            "threshold": self.mastery_threshold,
            "correct_uses": dict(sorted(self.correct_uses.items())),
            "mastered": sorted(self.mastered),
        }


def extract_features(trace: Sequence, model: StudentModel, step: Optional[ProofStep] = None
                     ) -> GranularityFeatures:
    """Counts over the reconstruction trace of a verified step."""
    assertion_entries = [e for e in trace if e.is_assertion]
    concepts = [e.app.rule.concept for e in assertion_entries]
    total = len(assertion_entries)
    mastered_used = sum(1 for c in concepts if model.is_mastered(c))
    distinct = sorted(set(concepts))
    unmastered = sum(1 for c in distinct if not model.is_mastered(c))
    hypintro = sum(len(e.app.produced_hyps) for e in trace)
    by = _by_of(step)
    verbalized = by is not None and by in set(concepts)
    return GranularityFeatures(
        total=total,
        mastered_used=mastered_used,
        unmastered=unmastered,
        hypintro=hypintro,
        distinct_concepts=len(distinct),
        verbalized=verbalized,
    )


def _by_of(step: Optional[ProofStep]) -> Optional[str]:
    if isinstance(step, (Fact, Subgoal, Trivial, Subgoals)):
        return step.by
    return None


def update_student_model(model: StudentModel, trace: Sequence, verified: bool) -> StudentModel:
    """Per correct use of a concept, bump its counter; mastery never reverts."""
    if not verified:
        return model
    for e in trace:
        if e.is_assertion and e.app.rule.concept:
            model.note_correct_use(e.app.rule.concept)
    return model


# ---------------------------------------------------------------------------
# Classifier representations


@dataclass(frozen=True)
class Guard:
    """Conjunction of integer comparisons against one feature value."""

    parts: tuple[tuple[str, int], ...]  # (op, bound)

    def holds(self, v: int) -> bool:
        for op, bound in self.parts:
            if op == "<=" and not v <= bound:
                return False
            if op == "<" and not v < bound:
                return False
            if op == ">=" and not v >= bound:
                return False
            if op == ">" and not v > bound:
                return False
            if op == "=" and not v == bound:
                return False
        return True

    def render(self) -> str:
        return " ".join(f"{op} {b}" for op, b in self.parts)


@dataclass(frozen=True)
class Leaf:
    verdict: str


@dataclass(frozen=True)
class Node:
    feature: str
    branches: tuple[tuple[Guard, Union["Node", Leaf]], ...]


@dataclass(frozen=True)
class RuleList:
    rules: tuple[tuple[str, Guard, str], ...]  # (feature, guard, verdict)
    default: str


@dataclass(frozen=True)
class Linear:
    classes: tuple[tuple[str, float, tuple[tuple[str, float], ...]], ...]  # verdict, bias, weights


@dataclass(frozen=True)
class GranularityClassifier:
    name: str
    tree: Union[Node, Leaf, RuleList, Linear]

    def classify(self, f: GranularityFeatures) -> GranularityVerdict:
        return GranularityVerdict(_eval(self.tree, f), f)


def classify(f: GranularityFeatures, c: GranularityClassifier) -> GranularityVerdict:
    return c.classify(f)


def _eval(node, f: GranularityFeatures) -> str:
    if isinstance(node, Leaf):
        return node.verdict
    if isinstance(node, Node):
        v = f.value(node.feature)
        for guard, child in node.branches:
            if guard.holds(v):
                return _eval(child, f)
        raise ClassifierError(f"no branch of {node.feature} covers value {v}")
    if isinstance(node, RuleList):
        for feature, guard, verdict in node.rules:
            if guard.holds(f.value(feature)):
                return verdict
        return node.default
    if isinstance(node, Linear):
        best = None
        for verdict, bias, weights in node.classes:
            score = bias + sum(coeff * f.value(feat) for feat, coeff in weights)
            if best is None or score > best[0]:
                best = (score, verdict)
        assert best is not None
        return best[1]
    raise ClassifierError(f"bad classifier node {node!r}")


# ---------------------------------------------------------------------------
# S-expression loading

_SEXP_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _sexp(text: str):
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(_SEXP_TOKEN.findall(line))
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ClassifierError("unexpected end of classifier file")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while pos < len(tokens) and tokens[pos] != ")":
                items.append(parse())
            if pos >= len(tokens):
                raise ClassifierError("missing ')'")
            pos += 1
            return items
        if tok == ")":
            raise ClassifierError("unexpected ')'")
        return tok

    out = parse()
    if pos != len(tokens):
        raise ClassifierError("trailing content in classifier file")
    return out


_CMP_OPS = ("<=", "<", ">=", ">", "=")


def _parse_guard(items) -> Guard:
    if not isinstance(items, list) or len(items) % 2 != 0 or not items:
        raise ClassifierError(f"bad guard {items!r}")
    parts = []
    for i in range(0, len(items), 2):
        op, bound = items[i], items[i + 1]
        if op not in _CMP_OPS:
            raise ClassifierError(f"bad comparator {op!r}")
        try:
            parts.append((op, int(bound)))
        except ValueError:
            raise ClassifierError(f"bad bound {bound!r}") from None
    return Guard(tuple(parts))


def _parse_tree(items) -> Union[Node, Leaf]:
    if not isinstance(items, list) or not items:
        raise ClassifierError(f"bad classifier node {items!r}")
    head = items[0]
    if head == "leaf":
        if len(items) != 2 or items[1] not in VERDICTS:
            raise ClassifierError(f"bad leaf {items!r}")
        return Leaf(items[1])
    if head == "node":
        if len(items) < 3:
            raise ClassifierError(f"node needs a feature and branches: {items!r}")
        feature = items[1]
        if feature not in FEATURES:
            raise ClassifierError(f"unknown feature {feature!r}")
        branches = []
        for branch in items[2:]:
            if not isinstance(branch, list) or len(branch) != 2:
                raise ClassifierError(f"bad branch {branch!r}")
            guard = _parse_guard(branch[0])
            branches.append((guard, _parse_tree(branch[1])))
        node = Node(feature, tuple(branches))
        _check_partition(node)
        return node
    raise ClassifierError(f"unknown node kind {head!r}")


def _check_partition(node: Node, lo: int = 0, hi: int = 100):
    for v in range(lo, hi + 1):
        hits = [g for g, _ in node.branches if g.holds(v)]
        if len(hits) == 0:
            raise ClassifierError(
                f"guards of {node.feature} leave value {v} uncovered"
            )
        if len(hits) > 1:
            raise ClassifierError(
                f"guards of {node.feature} overlap on value {v}: "
                + " / ".join(g.render() for g in hits)
            )


def _parse_rules(items) -> RuleList:
    rules = []
    default = None
    for entry in items[1:]:
        if not isinstance(entry, list) or not entry:
            raise ClassifierError(f"bad rule entry {entry!r}")
        if entry[0] == "default":
            if len(entry) != 2 or entry[1] not in VERDICTS:
                raise ClassifierError(f"bad default {entry!r}")
            default = entry[1]
        elif entry[0] == "rule":
            if len(entry) != 3:
                raise ClassifierError(f"bad rule {entry!r}")
            cond = entry[1]
            if not isinstance(cond, list) or len(cond) != 3:
                raise ClassifierError(f"rule condition must be (<cmp> <feature> <n>): {cond!r}")
            op, feature, bound = cond
            if feature not in FEATURES:
                raise ClassifierError(f"unknown feature {feature!r}")
            guard = _parse_guard([op, bound])
            verdict = entry[2]
            if verdict not in VERDICTS:
                raise ClassifierError(f"bad verdict {verdict!r}")
            rules.append((feature, guard, verdict))
        else:
            raise ClassifierError(f"unknown rules entry {entry[0]!r}")
    if default is None:
        raise ClassifierError("rule list needs a (default <verdict>) entry")
    return RuleList(tuple(rules), default)


def _parse_linear(items) -> Linear:
    classes = []
    for entry in items[1:]:
        if not isinstance(entry, list) or len(entry) < 2 or entry[0] != "class":
            raise ClassifierError(f"bad linear class {entry!r}")
        verdict = entry[1]
        if verdict not in VERDICTS:
            raise ClassifierError(f"bad verdict {verdict!r}")
        bias = 0.0
        weights = []
        for part in entry[2:]:
            if not isinstance(part, list) or not part:
                raise ClassifierError(f"bad linear term {part!r}")
            if part[0] == "bias" and len(part) == 2:
                bias = float(part[1])
            elif part[0] == "w" and len(part) == 3:
                if part[1] not in FEATURES:
                    raise ClassifierError(f"unknown feature {part[1]!r}")
                weights.append((part[1], float(part[2])))
            else:
                raise ClassifierError(f"bad linear term {part!r}")
        classes.append((verdict, bias, tuple(weights)))
    if not classes:
        raise ClassifierError("linear classifier needs at least one class")
    return Linear(tuple(classes))


def parse_classifier(text: str, name: str = "") -> GranularityClassifier:
    sexp = _sexp(text)
    if not isinstance(sexp, list) or not sexp:
        raise ClassifierError("classifier file must hold one s-expression")
    head = sexp[0]
    if head == "node" or head == "leaf":
        return GranularityClassifier(name, _parse_tree(sexp))
    if head == "rules":
        return GranularityClassifier(name, _parse_rules(sexp))
    if head == "linear":
        return GranularityClassifier(name, _parse_linear(sexp))
    raise ClassifierError(f"unknown classifier kind {head!r}")


def load_classifier(path: str | Path) -> GranularityClassifier:
    path = Path(path)
    return parse_classifier(path.read_text(), name=path.stem)
