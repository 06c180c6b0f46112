"""Independent brute-force oracles used to pin expected values.

These deliberately avoid the engine's own algorithms: unification is
checked against substitution enumeration, rule enumeration against
try-all-assignments, and rule soundness against truth-table evaluation
over a two-element universe.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Optional

from prooftutor.logic import (
    And,
    App,
    Atom,
    Const,
    Exists,
    Forall,
    Formula,
    Iff,
    Implies,
    MetaVar,
    Not,
    Or,
    Pair,
    Substitution,
    Term,
    Var,
    alpha_equal,
    formula_metavars,
    formula_subterms,
    substitute,
)

# ---------------------------------------------------------------------------
# Enumeration-based unifier


def enumerate_terms(depth: int, atoms: list[Term]) -> list[Term]:
    """All terms up to the given constructor depth over a small signature."""
    level: list[Term] = list(atoms)
    out = list(level)
    for _ in range(depth):
        new: list[Term] = []
        for a in out:
            new.append(App("inv", (a,)))
        for a, b in itertools.product(out, repeat=2):
            new.append(App("comp", (a, b)))
        seen = {t for t in out}
        for t in new:
            if t not in seen:
                seen.add(t)
                out.append(t)
        if len(out) > 4000:
            break
    return out


def brute_unifiers(f: Formula, g: Formula, candidates: list[Term]) -> list[Substitution]:
    """Every substitution over the candidate terms that makes f and g alpha-equal."""
    mvs = sorted(formula_metavars(f) | formula_metavars(g))
    found = []
    for combo in itertools.product(candidates, repeat=len(mvs)):
        try:
            sigma = Substitution(dict(zip(mvs, combo)))
        except Exception:
            continue
        if alpha_equal(substitute(f, sigma), substitute(g, sigma)):
            found.append(sigma)
    return found


# ---------------------------------------------------------------------------
# Finite-model evaluation over the universe {0,1} (pairs and relations on it)

INDIVIDUALS = (0, 1)
PAIRS = tuple(itertools.product(INDIVIDUALS, INDIVIDUALS))
RELATIONS = tuple(
    frozenset(s) for r in range(len(PAIRS) + 1) for s in itertools.combinations(PAIRS, r)
)

IND = "individual"
REL = "relation"
PAIR = "pair"


def infer_sorts(f: Formula, env: Optional[dict[str, str]] = None) -> dict[str, str]:
    """Syntactic sort inference for every identifier in a formula.

    Arguments of ``in`` are (pair-like, relation); comp/inv/union/inter take
    relations; pair components are individuals; subset/supset/= relate
    relations.  Unconstrained names default to individuals.
    """
    sorts: dict[str, str] = {} if env is None else env

    def name_of(t: Term) -> Optional[str]:
        if isinstance(t, (Var, Const, MetaVar)):
            return t.name
        return None

    def assign(t: Term, sort: str):
        n = name_of(t)
        if n is not None:
            prev = sorts.get(n)
            if prev is None or prev == IND:
                sorts[n] = sort
            return
        if isinstance(t, Pair):
            assign(t.fst, IND)
            assign(t.snd, IND)
        elif isinstance(t, App):
            for a in t.args:
                assign(a, REL)

    def walk(g: Formula):
        if isinstance(g, Atom):
            if g.pred == "in" and len(g.args) == 2:
                assign(g.args[0], PAIR)
                assign(g.args[1], REL)
            elif g.pred in ("subset", "supset", "=") and len(g.args) == 2:
                for a in g.args:
                    assign(a, REL)
        elif isinstance(g, Not):
            walk(g.body)
        elif isinstance(g, (And, Or, Implies, Iff)):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, (Forall, Exists)):
            walk(g.body)

    walk(f)
    for t in formula_subterms(f):
        if isinstance(t, Pair):
            assign(t.fst, IND)
            assign(t.snd, IND)
        if isinstance(t, App):
            for a in t.args:
                assign(a, REL)
    for n in sorted(set(_names(f)) - sorts.keys()):
        sorts[n] = IND
    return sorts


def _names(f: Formula) -> Iterable[str]:
    from prooftutor.logic import formula_names

    return formula_names(f)


def domain_for(sort: str):
    if sort == REL:
        return RELATIONS
    if sort == PAIR:
        return PAIRS
    return INDIVIDUALS


def eval_term(t: Term, env: dict[str, object]):
    if isinstance(t, (Var, Const, MetaVar)):
        return env[t.name]
    if isinstance(t, Pair):
        return (eval_term(t.fst, env), eval_term(t.snd, env))
    if isinstance(t, App):
        args = [eval_term(a, env) for a in t.args]
        if t.fn == "inv":
            (r,) = args
            return frozenset((b, a) for (a, b) in r)
        if t.fn == "comp":
            r, s = args
            return frozenset((a, c) for (a, b) in r for (b2, c) in s if b == b2)
        if t.fn == "union":
            r, s = args
            return frozenset(r | s)
        if t.fn == "inter":
            r, s = args
            return frozenset(r & s)
        raise ValueError(f"uninterpreted function {t.fn}")
    raise ValueError(f"cannot evaluate {t!r}")


def eval_formula(f: Formula, env: dict[str, object], sorts: dict[str, str]) -> bool:
    if isinstance(f, Atom):
        if not f.args:
            return bool(env.get(f.pred, False))
        a, b = (eval_term(t, env) for t in f.args)
        if f.pred == "in":
            return a in b
        if f.pred == "subset":
            return a <= b
        if f.pred == "supset":
            return a >= b
        if f.pred == "=":
            return a == b
        raise ValueError(f"unknown predicate {f.pred}")
    if isinstance(f, Not):
        return not eval_formula(f.body, env, sorts)
    if isinstance(f, And):
        return eval_formula(f.left, env, sorts) and eval_formula(f.right, env, sorts)
    if isinstance(f, Or):
        return eval_formula(f.left, env, sorts) or eval_formula(f.right, env, sorts)
    if isinstance(f, Implies):
        return (not eval_formula(f.left, env, sorts)) or eval_formula(f.right, env, sorts)
    if isinstance(f, Iff):
        return eval_formula(f.left, env, sorts) == eval_formula(f.right, env, sorts)
    if isinstance(f, (Forall, Exists)):
        dom = domain_for(sorts.get(f.var, IND))
        results = (
            eval_formula(f.body, {**env, f.var: d}, sorts) for d in dom
        )
        return all(results) if isinstance(f, Forall) else any(results)
    raise ValueError(f"cannot evaluate {f!r}")


def formula_valid(f: Formula, samples: int | None = None, rng=None) -> bool:
    """True iff f holds for every (or, when sampling, every sampled) assignment
    of its free names over the {0,1} universe."""
    sorts = infer_sorts(f)
    from prooftutor.logic import formula_consts, formula_metavars

    free = sorted(formula_consts(f) | formula_metavars(f))
    domains = [domain_for(sorts.get(n, IND)) for n in free]
    if samples is None:
        spaces = itertools.product(*domains)
    else:
        assert rng is not None
        spaces = ([rng.choice(d) for d in domains] for _ in range(samples))
    for combo in spaces:
        env = dict(zip(free, combo))
        if not eval_formula(f, env, sorts):
            return False
    return True
