"""Assertion-level inference rules: synthesis from assertions, enumeration
and application on sequents.

A rule is compiled from one orientation of an assertion.  Application is
term-directed: instantiations that would introduce compound terms not
already present in the task (or in the student's own statement) are not
enumerated, which keeps forward saturation finite and matches the step
granularity of worked relation proofs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .logic import (
    And,
    App,
    Atom,
    Const,
    EMPTY_SUBST,
    Exists,
    Forall,
    Formula,
    Iff,
    Implies,
    MetaVar,
    Not,
    Or,
    Pair,
    Sequent,
    Substitution,
    Term,
    Var,
    alpha_equal,
    compound_subterms,
    formula_consts,
    formula_metavars,
    formula_names,
    render_formula,
    render_term,
    sequent_pool,
    subst_term,
    substitute,
    subterms,
    term_metavars,
    unify,
    unify_terms,
)
from .theory import Assertion, Theory


class RuleError(Exception):
    pass


class StaleApplication(RuleError):
    pass


@dataclass(frozen=True)
class GoalTemplate:
    """One subgoal produced by a backward application."""

    intro_hyps: tuple[Formula, ...]
    goal: Formula


@dataclass(frozen=True)
class InferenceRule:
    name: str
    concept: str
    direction: str  # forward | backward | close
    premises: tuple[Formula, ...]
    conclusion: Formula
    hyp_intro: int = 0
    is_buggy: bool = False
    is_logic: bool = False
    #: forward: alternative unit tuples added to the sequent (>1 = case split)
    produced_alts: tuple[tuple[Formula, ...], ...] = ()
    #: forward: schema variables realised as fresh witness constants
    witness_params: tuple[str, ...] = ()
    #: backward: subgoal templates
    goal_templates: tuple[GoalTemplate, ...] = ()
    #: backward: schema variables realised as fresh eigenvariables / meta-variables
    eigen_params: tuple[str, ...] = ()
    mv_params: tuple[str, ...] = ()
    #: displayable premise side (backward), used for views and hints
    premise_view: Optional[Formula] = None

    def __post_init__(self):
        if self.direction == "backward":
            concl_mvs = formula_metavars(self.conclusion)
            prem_mvs: set[str] = set()
            for t in self.goal_templates:
                prem_mvs |= formula_metavars(t.goal)
                for h in t.intro_hyps:
                    prem_mvs |= formula_metavars(h)
            allowed = prem_mvs | set(self.eigen_params) | set(self.mv_params)
            if not concl_mvs <= allowed | concl_mvs & prem_mvs | prem_mvs:
                raise RuleError(f"{self.name}: conclusion variables escape the premises")


@dataclass(frozen=True)
class RuleApplication:
    """A concrete, replayable rule instance on one sequent."""

    rule: InferenceRule
    sequent_label: str
    subst: Substitution  # rule-schema variables -> instance terms
    state_subst: Substitution  # bindings forced on the proof state's meta-variables
    consumed: tuple[Formula, ...]
    #: backward: fully instantiated subgoal specs (intro hyps, goal, view)
    new_sequents: tuple[tuple[tuple[Formula, ...], Formula, Optional[Formula]], ...] = ()
    #: forward: instantiated alternative unit tuples
    new_hyps_alts: tuple[tuple[Formula, ...], ...] = ()
    fresh_names: tuple[str, ...] = ()
    #: backward: the goal's full replacement, for display and hints
    premise_instance: Optional[Formula] = None

    @property
    def produced_hyps(self) -> tuple[Formula, ...]:
        out: list[Formula] = []
        for alt in self.new_hyps_alts:
            out.extend(alt)
        for hyps, _, _ in self.new_sequents:
            out.extend(hyps)
        return tuple(out)

    def render(self) -> str:
        return f"{self.rule.name} {self.subst.render()}"


# ---------------------------------------------------------------------------
# Synthesis


def _forall_strip(f: Formula) -> tuple[list[str], Formula]:
    names = []
    while isinstance(f, Forall):
        names.append(f.var)
        f = f.body
    return names, f


def _schema_walk(g: Formula, univ: set[str]) -> Formula:
    """Replace universally bound variables by meta-variables."""
    def conv_t(t: Term) -> Term:
        if isinstance(t, Var) and t.name in univ:
            return MetaVar(t.name)
        if isinstance(t, Pair):
            return Pair(conv_t(t.fst), conv_t(t.snd))
        if isinstance(t, App):
            return App(t.fn, tuple(conv_t(a) for a in t.args))
        return t

    if isinstance(g, Atom):
        return Atom(g.pred, tuple(conv_t(t) for t in g.args))
    if isinstance(g, Not):
        return Not(_schema_walk(g.body, univ))
    if isinstance(g, (And, Or, Implies, Iff)):
        return type(g)(_schema_walk(g.left, univ), _schema_walk(g.right, univ))
    if isinstance(g, (Forall, Exists)):
        return type(g)(g.var, _schema_walk(g.body, univ - {g.var}))
    raise RuleError(f"cannot convert {g!r}")


def _is_unit(f: Formula) -> bool:
    return isinstance(f, Atom) or (isinstance(f, Not) and isinstance(f.body, Atom))


def _premise_units(f: Formula, lifted: list[str]) -> Optional[list[list[Formula]]]:
    """Decompose a forward premise into alternative lists of matchable units.

    Existential variables become match variables; a disjunction distributes
    into one alternative per disjunct.  Returns None for shapes outside the
    supported fragment.
    """
    if _is_unit(f):
        return [[f]]
    if isinstance(f, And):
        left = _premise_units(f.left, lifted)
        right = _premise_units(f.right, lifted)
        if left is None or right is None:
            return None
        return [l + r for l in left for r in right]
    if isinstance(f, Or):
        left = _premise_units(f.left, lifted)
        right = _premise_units(f.right, lifted)
        if left is None or right is None:
            return None
        return left + right
    if isinstance(f, Exists):
        name = f.var
        while name in lifted:
            name += "_"
        lifted.append(name)
        body = f.body if name == f.var else _rename_quantified(f.body, f.var, name)
        return _premise_units(_schema_walk(body, {name}), lifted)
    return None


def _rename_quantified(f: Formula, old: str, new: str) -> Formula:
    from .logic import _rename_bound

    return _rename_bound(f, old, new)


def _produced_units(f: Formula, witnesses: list[str]) -> Optional[list[list[Formula]]]:
    """Decompose a forward conclusion into per-branch produced unit lists.

    Conjunctions contribute to every branch, disjunctions split branches,
    existentials introduce witness parameters.
    """
    if _is_unit(f):
        return [[f]]
    if isinstance(f, And):
        left = _produced_units(f.left, witnesses)
        right = _produced_units(f.right, witnesses)
        if left is None or right is None:
            return None
        return [l + r for l in left for r in right]
    if isinstance(f, Or):
        left = _produced_units(f.left, witnesses)
        right = _produced_units(f.right, witnesses)
        if left is None or right is None:
            return None
        return left + right
    if isinstance(f, Exists):
        name = f.var
        while name in witnesses:
            name += "_"
        witnesses.append(name)
        body = f.body if name == f.var else _rename_quantified(f.body, f.var, name)
        return _produced_units(_schema_walk(body, {name}), witnesses)
    return None


def _hyp_units(f: Formula, eigens: list[str]) -> Optional[list[Formula]]:
    """Hypotheses introduced on the way into a backward subgoal."""
    if _is_unit(f) or isinstance(f, (Or, Implies, Forall)):
        return [f]
    if isinstance(f, And):
        left = _hyp_units(f.left, eigens)
        right = _hyp_units(f.right, eigens)
        if left is None or right is None:
            return None
        return left + right
    if isinstance(f, Exists):
        name = f.var
        while name in eigens:
            name += "_"
        eigens.append(name)
        body = f.body if name == f.var else _rename_quantified(f.body, f.var, name)
        return _hyp_units(_schema_walk(body, {name}), eigens)
    return None


def _goal_templates(
    f: Formula, hyps: tuple[Formula, ...], eigens: list[str], mvs: list[str]
) -> Optional[list[GoalTemplate]]:
    """Decompose a backward premise into subgoal templates."""
    if _is_unit(f) or isinstance(f, Or):
        return [GoalTemplate(hyps, f)]
    if isinstance(f, Forall):
        name = f.var
        while name in eigens or name in mvs:
            name += "_"
        eigens.append(name)
        body = f.body if name == f.var else _rename_quantified(f.body, f.var, name)
        return _goal_templates(_schema_walk(body, {name}), hyps, eigens, mvs)
    if isinstance(f, Exists):
        name = f.var
        while name in eigens or name in mvs:
            name += "_"
        mvs.append(name)
        body = f.body if name == f.var else _rename_quantified(f.body, f.var, name)
        return _goal_templates(_schema_walk(body, {name}), hyps, eigens, mvs)
    if isinstance(f, Implies):
        units = _hyp_units(f.left, eigens)
        if units is None:
            return None
        return _goal_templates(f.right, hyps + tuple(units), eigens, mvs)
    if isinstance(f, And):
        left = _goal_templates(f.left, hyps, eigens, mvs)
        right = _goal_templates(f.right, hyps, eigens, mvs)
        if left is None or right is None:
            return None
        return left + right
    return None


def _mk_forward(name: str, concept: str, premise: Formula, conclusion: Formula, buggy: bool,
                diagnostics: list[str]) -> list[InferenceRule]:
    lifted: list[str] = []
    prem_alts = _premise_units(premise, lifted)
    if prem_alts is None:
        diagnostics.append(f"{name}: premise shape not supported for forward use")
        return []
    witnesses: list[str] = []
    produced = _produced_units(conclusion, witnesses)
    if produced is None:
        diagnostics.append(f"{name}: conclusion shape not supported for forward use")
        return []
    rules = []
    for idx, prem in enumerate(prem_alts):
        suffix = "" if len(prem_alts) == 1 else f"-{idx + 1}"
        rules.append(
            InferenceRule(
                name=name + suffix,
                concept=concept,
                direction="forward",
                premises=tuple(prem),
                conclusion=conclusion,
                is_buggy=buggy,
                produced_alts=tuple(tuple(alt) for alt in produced),
                witness_params=tuple(witnesses),
            )
        )
    return rules


def _mk_backward(name: str, concept: str, premise: Formula, conclusion: Formula, buggy: bool,
                 diagnostics: list[str]) -> list[InferenceRule]:
    if not _is_unit(conclusion):
        diagnostics.append(f"{name}: conclusion is not atomic, no backward rule")
        return []
    eigens: list[str] = []
    mvs: list[str] = []
    templates = _goal_templates(premise, (), eigens, mvs)
    if templates is None:
        diagnostics.append(f"{name}: premise shape not supported for backward use")
        return []
    hyp_intro = sum(len(t.intro_hyps) for t in templates)
    return [
        InferenceRule(
            name=name,
            concept=concept,
            direction="backward",
            premises=tuple(t.goal for t in templates),
            conclusion=conclusion,
            hyp_intro=hyp_intro,
            is_buggy=buggy,
            goal_templates=tuple(templates),
            eigen_params=tuple(eigens),
            mv_params=tuple(mvs),
            premise_view=premise,
        )
    ]


def _flatten_implication(f: Formula) -> tuple[Formula, Formula]:
    """A -> (B -> C) and (A /\\ B) -> C both become premise A/\\B, conclusion C."""
    assert isinstance(f, Implies)
    premise = f.left
    concl = f.right
    while isinstance(concl, Implies):
        premise = And(premise, concl.left)
        concl = concl.right
    return premise, concl


def _relation_equation(f: Formula) -> bool:
    """An equality whose sides are relation-valued compound terms."""
    return (
        isinstance(f, Atom)
        and f.pred == "="
        and len(f.args) == 2
        and any(isinstance(t, App) for t in f.args)
    )


def synthesize_inferences(a: Assertion, diagnostics: list[str] | None = None) -> list[InferenceRule]:
    """Compile an assertion into forward/backward/close inference rules."""
    diags = diagnostics if diagnostics is not None else []
    univ, body = _forall_strip(a.formula)
    schema = _schema_walk(body, set(univ))
    buggy = a.kind == "buggy"
    rules: list[InferenceRule] = []

    if isinstance(schema, Iff):
        left, right = schema.left, schema.right
        if not _is_unit(left) and _is_unit(right):
            left, right = right, left
        if not _is_unit(left):
            diags.append(f"{a.label}: neither side of the equivalence is atomic")
            return []
        rules += _mk_forward(f"{a.label}-fwd", a.concept, left, right, buggy, diags)
        rules += _mk_backward(f"{a.label}-bwd", a.concept, right, left, buggy, diags)
        rules += _mk_forward(f"{a.label}-fold-fwd", a.concept, right, left, buggy, diags)
        if _is_unit(right):
            rules += _mk_backward(f"{a.label}-fold-bwd", a.concept, left, right, buggy, diags)
    elif isinstance(schema, Implies):
        premise, concl = _flatten_implication(schema)
        rules += _mk_forward(f"{a.label}-fwd", a.concept, premise, concl, buggy, diags)
        rules += _mk_backward(f"{a.label}-bwd", a.concept, premise, concl, buggy, diags)
    elif _is_unit(schema):
        if _relation_equation(schema):
            # equations between relation terms act on memberships directly
            assert isinstance(schema, Atom)
            s, t = schema.args
            taken = set(univ) | formula_names(a.formula)
            px = "x" if "x" not in taken else "x_"
            py = "y" if "y" not in taken else "y_"
            pair = Pair(MetaVar(px), MetaVar(py))
            left_mem = Atom("in", (pair, s))
            right_mem = Atom("in", (pair, t))
            rules += _mk_forward(f"{a.label}-fwd", a.concept, left_mem, right_mem, buggy, diags)
            rules += _mk_backward(f"{a.label}-bwd", a.concept, left_mem, right_mem, buggy, diags)
            rules += _mk_forward(f"{a.label}-rev-fwd", a.concept, right_mem, left_mem, buggy, diags)
            rules += _mk_backward(f"{a.label}-rev-bwd", a.concept, right_mem, left_mem, buggy, diags)
        rules.append(
            InferenceRule(
                name=f"{a.label}-fact",
                concept=a.concept,
                direction="forward",
                premises=(),
                conclusion=schema,
                is_buggy=buggy,
                produced_alts=((schema,),),
            )
        )
        rules.append(
            InferenceRule(
                name=f"{a.label}-close",
                concept=a.concept,
                direction="close",
                premises=(),
                conclusion=schema,
                is_buggy=buggy,
            )
        )
    else:
        diags.append(f"{a.label}: unsupported assertion shape {type(schema).__name__}")
        return []
    return rules


_THEORY_RULE_CACHE: dict[tuple[int, bool], tuple[Theory, list[InferenceRule]]] = {}


def theory_rules(theory: Theory, include_buggy: bool = False) -> list[InferenceRule]:
    key = (id(theory), include_buggy)
    hit = _THEORY_RULE_CACHE.get(key)
    if hit is not None and hit[0] is theory:
        return hit[1]
    out: list[InferenceRule] = []
    for a in theory.assertions:
        if a.kind == "buggy" and not include_buggy:
            continue
        out.extend(synthesize_inferences(a))
    _THEORY_RULE_CACHE[key] = (theory, out)
    return out


def rules_for_kind(theory: Theory, kinds: tuple[str, ...]) -> list[InferenceRule]:
    out = []
    for a in theory.assertions:
        if a.kind in kinds:
            out.extend(synthesize_inferences(a))
    return out


# ---------------------------------------------------------------------------
# Application enumeration

_RULE_PREFIX = "r!"


def _rename_rule_vars(f: Formula) -> Formula:
    names = formula_metavars(f)
    sub = Substitution({n: MetaVar(_RULE_PREFIX + n) for n in names})
    return substitute(f, sub)


def _split_subst(sigma: Substitution) -> tuple[Substitution, Substitution]:
    """Split a unifier into (rule-variable bindings, state-variable bindings)."""
    rule_m: dict[str, Term] = {}
    state_m: dict[str, Term] = {}
    for k, v in sigma.mapping.items():
        if k.startswith(_RULE_PREFIX):
            rule_m[k[len(_RULE_PREFIX):]] = v
        else:
            state_m[k] = v
    return Substitution(rule_m), Substitution(state_m)


def _standard_fresh(base: str, taken: set[str]) -> str:
    order = {
        "x": ["x", "y", "z", "u", "v", "w"],
        "y": ["y", "z", "u", "v", "w", "x"],
        "z": ["z", "w", "u", "v", "x", "y"],
    }.get(base, [base])
    for cand in order:
        if cand not in taken:
            return cand
    i = 1
    while f"{base}{i}" in taken:
        i += 1
    return f"{base}{i}"


def _admissible(formulas: Iterable[Formula], pool: set[Term], fresh: set[str]) -> bool:
    """Every compound term of the new formulas must already be known, up to
    fresh witness constants."""
    fresh_consts = {Const(n) for n in fresh}

    def strip_ok(t: Term) -> bool:
        if t in pool:
            return True
        if any(c in fresh_consts for c in subterms(t) if isinstance(c, Const)):
            # terms built over fresh witnesses are checked on their frame:
            # replacing witnesses by any pool term must stay in the pool shape
            return _frame_in_pool(t, pool, fresh_consts)
        return False

    for f in formulas:
        for t in compound_subterms(f):
            if not strip_ok(t):
                return False
    return True


def _frame_in_pool(t: Term, pool: set[Term], fresh_consts: set[Term]) -> bool:
    # compound terms that merely wrap fresh constants are not allowed unless
    # their constructor frame appears in the pool
    for cand in pool:
        if _same_frame(t, cand, fresh_consts):
            return True
    return False


def _same_frame(t: Term, cand: Term, fresh_consts: set[Term]) -> bool:
    if t in fresh_consts:
        return True
    if type(t) is not type(cand):
        return False
    if isinstance(t, App):
        assert isinstance(cand, App)
        return t.fn == cand.fn and len(t.args) == len(cand.args) and all(
            _same_frame(a, b, fresh_consts) for a, b in zip(t.args, cand.args)
        )
    if isinstance(t, Pair):
        assert isinstance(cand, Pair)
        return _same_frame(t.fst, cand.fst, fresh_consts) and _same_frame(t.snd, cand.snd, fresh_consts)
    return t == cand


def _pool_candidates(pool: set[Term], s: Sequent) -> list[Term]:
    cands: set[Term] = set()
    for t in pool:
        cands |= set(subterms(t))
    for f in s.hyps + (s.goal,):
        for t in f.args if isinstance(f, Atom) else ():
            cands |= set(subterms(t))
    from .logic import iter_atoms

    for f in s.hyps + (s.goal,):
        for a in iter_atoms(f):
            for t in a.args:
                cands |= set(subterms(t))
    cands = {t for t in cands if not isinstance(t, (MetaVar, Var))}
    return sorted(cands, key=render_term)


def applicable_rules(
    s: Sequent,
    rules: Iterable[InferenceRule],
    direction: str | None = None,
    extra_pool: tuple[Formula, ...] = (),
    include_buggy: bool = False,
    taken_names: set[str] | None = None,
) -> list[RuleApplication]:
    """Enumerate admissible rule applications on a sequent, deterministically.

    Order follows the rule list (theory order), then hypothesis order, then
    the rendered order of candidate instantiations.
    """
    pool = sequent_pool(s, extra_pool)
    taken = set(taken_names or set()) | formula_names(s.goal)
    for h in s.hyps:
        taken |= formula_names(h)
    for f in extra_pool:
        taken |= formula_names(f)
    out: list[RuleApplication] = []
    for rule in rules:
        if rule.is_buggy and not include_buggy:
            continue
        if direction and rule.direction != direction:
            continue
        if rule.direction == "backward":
            out.extend(_backward_apps(rule, s, pool, taken))
        elif rule.direction == "forward":
            out.extend(_forward_apps(rule, s, pool, taken))
        elif rule.direction == "close":
            out.extend(_close_apps(rule, s))
    return out


def _backward_apps(rule: InferenceRule, s: Sequent, pool: set[Term], taken: set[str]):
    pattern = _rename_rule_vars(rule.conclusion)
    sigma = unify(pattern, s.goal)
    if sigma is None:
        return []
    rule_sub, state_sub = _split_subst(sigma)
    # realise eigenvariables and fresh meta-variables
    fresh_names: list[str] = []
    realized: dict[str, Term] = dict(rule_sub.mapping)
    names_taken = set(taken)
    for e in rule.eigen_params:
        name = _standard_fresh(e, names_taken)
        names_taken.add(name)
        fresh_names.append(name)
        realized[e] = Const(name)
    for mname in rule.mv_params:
        name = mname
        while name in names_taken:
            name += "_"
        names_taken.add(name)
        realized[mname] = MetaVar(name)
    inst = Substitution(realized)
    new_sequents = []
    intro_formulas: list[Formula] = []
    view_parts: list[Formula] = []
    for t in rule.goal_templates:
        hyps = tuple(substitute(substitute(h, inst), state_sub) for h in t.intro_hyps)
        goal = substitute(substitute(t.goal, inst), state_sub)
        intro_formulas.extend(hyps)
        intro_formulas.append(goal)
        part: Formula = goal
        for h in reversed(hyps):
            part = Implies(h, part)
        view_parts.append(part)
        # a task whose goal stands for an implication keeps that reading
        new_sequents.append((hyps, goal, part if hyps else None))
    if any(n for f in intro_formulas for n in formula_metavars(f) if n.startswith(_RULE_PREFIX)):
        return []  # under-determined rule variables
    # buggy rules chase a misconception and may leave the task's term pool
    if not rule.is_buggy and not _admissible(intro_formulas, pool, set(fresh_names)):
        return []
    premise_instance = view_parts[0]
    for part in view_parts[1:]:
        premise_instance = And(premise_instance, part)
    return [
        RuleApplication(
            rule=rule,
            sequent_label=s.label,
            subst=inst,
            state_subst=state_sub,
            consumed=(s.goal,),
            new_sequents=tuple(new_sequents),
            fresh_names=tuple(fresh_names),
            premise_instance=premise_instance,
        )
    ]


def _forward_apps(rule: InferenceRule, s: Sequent, pool: set[Term], taken: set[str]):
    prem = [_rename_rule_vars(p) for p in rule.premises]
    matches: list[tuple[Substitution, tuple[Formula, ...]]] = []

    def backtrack(i: int, sigma: Substitution, used: tuple[Formula, ...]):
        if i == len(prem):
            matches.append((sigma, used))
            return
        pat = substitute(prem[i], sigma)
        for h in s.hyps:
            s2 = unify(pat, h, sigma)
            if s2 is not None:
                backtrack(i + 1, s2, used + (h,))

    backtrack(0, EMPTY_SUBST, ())
    out = []
    pool_sorted: list[Term] | None = None
    for sigma, consumed in matches:
        rule_sub, state_sub = _split_subst(sigma)
        # resolve meta-variables of the conclusion left unbound by the premises
        concl_mvs: set[str] = set()
        for alt in rule.produced_alts:
            for u in alt:
                concl_mvs |= formula_metavars(u)
        unbound = sorted(
            n for n in concl_mvs
            if n not in rule_sub.mapping and n not in rule.witness_params
        )
        if unbound:
            if pool_sorted is None:
                pool_sorted = sorted(pool, key=render_term)
            assignments = _resolve_unbound(rule, rule_sub, set(unbound), pool_sorted)
        else:
            assignments = [{}]
        for extra in assignments:
            realized = dict(rule_sub.mapping)
            realized.update(extra)
            names_taken = set(taken)
            fresh_names: list[str] = []
            for w in rule.witness_params:
                name = _standard_fresh(w, names_taken)
                names_taken.add(name)
                fresh_names.append(name)
                realized[w] = Const(name)
            try:
                inst = Substitution(realized)
            except Exception:
                continue
            alts = tuple(
                tuple(substitute(substitute(u, inst), state_sub) for u in alt)
                for alt in rule.produced_alts
            )
            flat = [u for alt in alts for u in alt]
            if any(n.startswith(_RULE_PREFIX) for f in flat for n in formula_metavars(f)):
                continue
            # buggy rules may leave the term pool, but only when their
            # instantiation is fully forced by the consumed formulas
            exempt = rule.is_buggy and not unbound
            if not exempt and not _admissible(flat, pool, set(fresh_names)):
                continue
            out.append(
                RuleApplication(
                    rule=rule,
                    sequent_label=s.label,
                    subst=inst,
                    state_subst=state_sub,
                    consumed=consumed,
                    new_hyps_alts=alts,
                    fresh_names=tuple(fresh_names),
                )
            )
    return _dedup_apps(out)


def _resolve_unbound(rule: InferenceRule, rule_sub: Substitution, unbound: set[str],
                     pool_sorted: list[Term]) -> list[dict[str, Term]]:
    """Bind leftover conclusion variables by unifying the conclusion's own
    compound templates against the term pool (term-directed instantiation)."""
    templates: list[Term] = []
    for alt in rule.produced_alts:
        for u in alt:
            for t in compound_subterms_schema(u):
                if term_metavars(t) & unbound:
                    templates.append(t)
    templates.sort(key=render_term)
    work: list[dict[str, Term]] = [dict(rule_sub.mapping)]
    for template in templates:
        nxt: list[dict[str, Term]] = []
        seen: set[tuple] = set()
        for binding in work:
            inst = subst_term(template, binding)
            open_vars = term_metavars(inst) & unbound
            if not open_vars:
                nxt.append(binding)
                continue
            for cand in pool_sorted:
                got = unify_terms(inst, cand)
                if got is None:
                    continue
                merged = dict(binding)
                ok = True
                for k, v in got.mapping.items():
                    if k in merged and merged[k] != v:
                        ok = False
                        break
                    merged[k] = v
                if not ok:
                    continue
                key = tuple(sorted((k, render_term(v)) for k, v in merged.items()))
                if key not in seen:
                    seen.add(key)
                    nxt.append(merged)
        work = nxt
    out = []
    for binding in work:
        if unbound <= binding.keys():
            out.append({k: v for k, v in binding.items() if k in unbound})
    return out


def compound_subterms_schema(f: Formula):
    """Compound subterms of a schema formula (meta-variables allowed)."""
    from .logic import formula_subterms

    return [t for t in formula_subterms(f) if isinstance(t, App)]


def _close_apps(rule: InferenceRule, s: Sequent):
    pattern = _rename_rule_vars(rule.conclusion)
    sigma = unify(pattern, s.goal)
    if sigma is None:
        return []
    rule_sub, state_sub = _split_subst(sigma)
    if any(n.startswith(_RULE_PREFIX) for n in formula_metavars(substitute(pattern, sigma))):
        return []
    return [
        RuleApplication(
            rule=rule,
            sequent_label=s.label,
            subst=rule_sub,
            state_subst=state_sub,
            consumed=(s.goal,),
        )
    ]


def _dedup_apps(apps: list[RuleApplication]) -> list[RuleApplication]:
    seen = set()
    out = []
    for a in apps:
        key = (
            a.rule.name,
            tuple(render_formula(f) for f in a.consumed),
            tuple(tuple(render_formula(u) for u in alt) for alt in a.new_hyps_alts),
            tuple(
                (tuple(render_formula(h) for h in hyps), render_formula(g))
                for hyps, g, _ in a.new_sequents
            ),
        )
        if key not in seen:
            seen.add(key)
            out.append(a)
    return out


# ---------------------------------------------------------------------------
# Application


def apply_to_sequent(app: RuleApplication, s: Sequent) -> list[Sequent]:
    """Apply a recorded application; backward returns the new goal sequents,
    forward the extended sequent(s), close the empty list."""
    rule = app.rule
    if rule.direction in ("backward", "close"):
        goal = substitute(s.goal, app.state_subst)
        want = substitute(app.consumed[0], app.state_subst)
        if not alpha_equal(goal, want):
            raise StaleApplication(f"{rule.name}: goal changed since enumeration")
    else:
        hyps_now = [substitute(h, app.state_subst) for h in s.hyps]
        for c in app.consumed:
            c2 = substitute(c, app.state_subst)
            if not any(alpha_equal(c2, h) for h in hyps_now):
                raise StaleApplication(f"{rule.name}: hypothesis disappeared")
    if rule.direction == "close":
        return []
    if rule.direction == "backward":
        out = []
        for hyps, goal, view in app.new_sequents:
            views = (view,) if view is not None else ()
            out.append(Sequent(tuple(s.hyps) + tuple(hyps), goal, "", views))
        return out
    # forward
    out = []
    for alt in app.new_hyps_alts:
        out.append(s.with_hyps(alt))
    return out


def is_productive(app: RuleApplication, s: Sequent) -> bool:
    """A forward application must add something new to at least every branch
    it creates; re-deriving present facts (modulo witness choice) is noise."""
    if app.rule.direction != "forward" or not app.new_hyps_alts:
        return True
    for alt in app.new_hyps_alts:
        if _alt_subsumed(alt, s, app.fresh_names):
            return False
    return True


def _alt_subsumed(units: tuple[Formula, ...], s: Sequent, fresh: tuple[str, ...]) -> bool:
    """True if some assignment of the fresh witnesses makes every unit an
    existing hypothesis."""
    if not fresh:
        return all(any(alpha_equal(u, h) for h in s.hyps) for u in units)
    lift = Substitution({})
    lifted_units = []
    ren = {n: MetaVar("w!" + n) for n in fresh}
    for u in units:
        lifted_units.append(_consts_to_mvs(u, ren))

    def backtrack(i: int, sigma: Substitution) -> bool:
        if i == len(lifted_units):
            return True
        pat = substitute(lifted_units[i], sigma)
        for h in s.hyps:
            s2 = unify(pat, h, sigma)
            if s2 is not None and backtrack(i + 1, s2):
                return True
        return False

    return backtrack(0, lift)


def _consts_to_mvs(f: Formula, ren: dict[str, MetaVar]) -> Formula:
    from .logic import map_atoms

    def conv(t: Term) -> Term:
        if isinstance(t, Const) and t.name in ren:
            return ren[t.name]
        if isinstance(t, Pair):
            return Pair(conv(t.fst), conv(t.snd))
        if isinstance(t, App):
            return App(t.fn, tuple(conv(a) for a in t.args))
        return t

    return map_atoms(f, lambda a: Atom(a.pred, tuple(conv(t) for t in a.args)))


# ---------------------------------------------------------------------------
# Built-in logic steps (shared by search and strategies)

DEEPAXIOM = InferenceRule(
    name="deepaxiom",
    concept="",
    direction="close",
    premises=(),
    conclusion=Atom("goal-matches-hypothesis", ()),
    is_logic=True,
)

OR_L = InferenceRule(
    name="or-l",
    concept="",
    direction="forward",
    premises=(),
    conclusion=Atom("case-split", ()),
    is_logic=True,
)


def deepaxiom_candidates(s: Sequent, sigma: Substitution = EMPTY_SUBST) -> list[RuleApplication]:
    """Closures of the goal against a hypothesis, looking through positive
    goal disjunctions/existentials and hypothesis conjunctions."""
    goal = substitute(s.goal, sigma)
    out = []
    for h in s.hyps:
        hyp = substitute(h, sigma)
        for s2 in _deep_match(goal, hyp, sigma):
            out.append(
                RuleApplication(
                    rule=DEEPAXIOM,
                    sequent_label=s.label,
                    subst=EMPTY_SUBST,
                    state_subst=s2,
                    consumed=(h, s.goal),
                )
            )
    return _dedup_apps(out)


def _deep_match(goal: Formula, hyp: Formula, sigma: Substitution) -> list[Substitution]:
    got = unify(goal, hyp, sigma)
    results = [got] if got is not None else []
    if isinstance(goal, Or):
        results += _deep_match(goal.left, hyp, sigma)
        results += _deep_match(goal.right, hyp, sigma)
    if isinstance(goal, Exists):
        fresh = MetaVar("dx!" + goal.var)
        body = substitute_var(goal.body, goal.var, fresh)
        for s2 in _deep_match(body, hyp, sigma):
            cleaned = Substitution({k: v for k, v in s2.mapping.items() if not k.startswith("dx!")})
            results.append(cleaned)
    if isinstance(hyp, And):
        results += _deep_match(goal, hyp.left, sigma)
        results += _deep_match(goal, hyp.right, sigma)
    # deterministic, prefer matches without extra instantiation
    uniq = []
    seen = set()
    for r in results:
        key = tuple(sorted((k, render_term(v)) for k, v in r.mapping.items()))
        if key not in seen:
            seen.add(key)
            uniq.append(r)
    return uniq


def substitute_var(f: Formula, var: str, replacement: Term) -> Formula:
    """Replace a bound variable occurrence by a term (used after stripping
    its binder)."""

    def conv(t: Term) -> Term:
        if isinstance(t, Var) and t.name == var:
            return replacement
        if isinstance(t, Pair):
            return Pair(conv(t.fst), conv(t.snd))
        if isinstance(t, App):
            return App(t.fn, tuple(conv(a) for a in t.args))
        return t

    if isinstance(f, Atom):
        return Atom(f.pred, tuple(conv(t) for t in f.args))
    if isinstance(f, Not):
        return Not(substitute_var(f.body, var, replacement))
    if isinstance(f, (And, Or, Implies, Iff)):
        return type(f)(
            substitute_var(f.left, var, replacement), substitute_var(f.right, var, replacement)
        )
    if isinstance(f, (Forall, Exists)):
        if f.var == var:
            return f
        return type(f)(f.var, substitute_var(f.body, var, replacement))
    raise RuleError(f"cannot substitute in {f!r}")


def or_split(s: Sequent) -> Optional[tuple[RuleApplication, list[Sequent]]]:
    """Split the first disjunctive hypothesis into one task per disjunct."""
    for i, h in enumerate(s.hyps):
        if isinstance(h, Or):
            rest = s.hyps[:i] + s.hyps[i + 1:]
            left = Sequent(rest[:i] + (h.left,) + rest[i:], s.goal, "", s.views)
            right = Sequent(rest[:i] + (h.right,) + rest[i:], s.goal, "", s.views)
            app = RuleApplication(
                rule=OR_L,
                sequent_label=s.label,
                subst=EMPTY_SUBST,
                state_subst=EMPTY_SUBST,
                consumed=(h,),
                new_sequents=(((h.left,), s.goal, None), ((h.right,), s.goal, None)),
            )
            return app, [left, right]
    return None
