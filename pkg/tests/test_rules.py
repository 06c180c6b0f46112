"""Rule synthesis, enumeration and application."""

from __future__ import annotations

import itertools
import random

import pytest

from prooftutor.logic import (
    Atom,
    Const,
    Formula,
    MetaVar,
    Pair,
    Sequent,
    Substitution,
    alpha_equal,
    formula_metavars,
    parse_formula,
    render_formula,
    substitute,
    unify,
)
from prooftutor.rules import (
    InferenceRule,
    StaleApplication,
    applicable_rules,
    apply_to_sequent,
    deepaxiom_candidates,
    is_productive,
    or_split,
    synthesize_inferences,
    theory_rules,
)
from prooftutor.theory import Assertion, Library, parse_theory

from .oracles import formula_valid

LIB = Library()
REL = LIB.theory("relations")
REL_BUGGY = LIB.theory("relations-buggy")


def F(t):
    return parse_formula(t)


def seq(hyps, goal, label="T0"):
    return Sequent(tuple(F(h) for h in hyps), F(goal), label)


def rule_named(rules, name):
    for r in rules:
        if r.name == name:
            return r
    raise KeyError(name)


class TestSynthesis:
    def test_transitivity_rules(self):
        a = REL.assertion("Trans-subset")
        rules = synthesize_inferences(a)
        fwd = rule_named(rules, "Trans-subset-fwd")
        assert fwd.direction == "forward"
        assert len(fwd.premises) == 2
        assert {render_formula(p) for p in fwd.premises} == {"?U subset ?V", "?V subset ?W"}
        assert render_formula(fwd.conclusion) == "?U subset ?W"
        bwd = rule_named(rules, "Trans-subset-bwd")
        assert bwd.direction == "backward"
        assert bwd.concept == "Trans-subset"

    def test_subset_backward_shape(self):
        rules = synthesize_inferences(REL.assertion("Def-subset"))
        bwd = rule_named(rules, "Def-subset-bwd")
        assert bwd.hyp_intro == 1
        assert len(bwd.goal_templates) == 1
        tpl = bwd.goal_templates[0]
        assert len(tpl.intro_hyps) == 1
        assert set(bwd.eigen_params) == {"x", "y"}

    def test_ground_fact(self):
        a = Assertion("ax", F("P"), "theorem")
        rules = synthesize_inferences(a)
        names = {r.name for r in rules}
        assert names == {"ax-fact", "ax-close"}
        fact = rule_named(rules, "ax-fact")
        assert fact.premises == ()

    def test_unsupported_shape_diagnostic(self):
        a = Assertion("odd", F("exists z. z in R"), "theorem")
        diags: list[str] = []
        assert synthesize_inferences(a, diags) == []
        assert diags and "odd" in diags[0]

    def test_union_fold_distributes(self):
        rules = synthesize_inferences(REL.assertion("Def-union"))
        names = [r.name for r in rules]
        assert "Def-union-fold-fwd-1" in names and "Def-union-fold-fwd-2" in names

    def test_equation_assertion_membership_transfer(self):
        b = REL_BUGGY.assertion("inv-comp-buggy")
        rules = synthesize_inferences(b)
        names = {r.name for r in rules}
        assert "inv-comp-buggy-fwd" in names
        assert all(r.is_buggy for r in rules)
        fwd = rule_named(rules, "inv-comp-buggy-fwd")
        assert render_formula(fwd.premises[0]) == "(?x,?y) in inv(comp(?R,?S))"
        assert render_formula(fwd.conclusion) == "(?x,?y) in comp(inv(?R),inv(?S))"


class TestEnumeration:
    def test_equality_goal_has_unique_backward_rule(self):
        s = seq([], "inv(comp(R,S)) = comp(inv(S),inv(R))")
        apps = applicable_rules(s, theory_rules(REL), direction="backward")
        assert len(apps) == 1
        assert apps[0].rule.name == "Def-eq-bwd"
        new = apply_to_sequent(apps[0], s)
        assert [render_formula(t.goal) for t in new] == [
            "inv(comp(R,S)) subset comp(inv(S),inv(R))",
            "inv(comp(R,S)) supset comp(inv(S),inv(R))",
        ]

    def test_forward_comp_introduces_witness(self):
        s = seq(["(y,x) in comp(R,S)"], "G")
        apps = applicable_rules(s, synthesize_inferences(REL.assertion("Def-comp")), direction="forward")
        unfolds = [a for a in apps if a.rule.name == "Def-comp-fwd"]
        assert len(unfolds) == 1
        (new,) = apply_to_sequent(unfolds[0], s)
        rendered = [render_formula(h) for h in new.hyps]
        assert "(y,z) in R" in rendered and "(z,x) in S" in rendered

    def test_forward_comp_fold_from_pair(self):
        s = seq(["(y,z) in R", "(z,x) in S"], "(y,x) in comp(R,S)")
        apps = applicable_rules(s, synthesize_inferences(REL.assertion("Def-comp")), direction="forward")
        folds = [a for a in apps if a.rule.name == "Def-comp-fold-fwd"]
        assert len(folds) == 1
        (new,) = apply_to_sequent(folds[0], s)
        assert any(render_formula(h) == "(y,x) in comp(R,S)" for h in new.hyps)

    def test_fold_blocked_without_pool_term(self):
        # comp(S,R) occurs nowhere: folding toward it is inadmissible
        s = seq(["(y,z) in R", "(z,x) in S"], "(y,x) in comp(R,S)")
        apps = applicable_rules(s, theory_rules(REL), direction="forward")
        assert not any("comp(S,R)" in render_formula(h) for a in apps for h in a.produced_hyps)

    def test_empty_theory(self):
        s = seq([], "A subset B")
        assert applicable_rules(s, []) == []

    def test_inv_forward_on_inverse_hyp(self):
        s = seq(["(x,y) in inv(comp(R,S))"], "(x,y) in comp(inv(S),inv(R))")
        apps = applicable_rules(s, synthesize_inferences(REL.assertion("Def-inv")), direction="forward")
        unfold = [a for a in apps if a.rule.name == "Def-inv-fwd"]
        assert len(unfold) == 1
        (new,) = apply_to_sequent(unfold[0], s)
        assert any(render_formula(h) == "(y,x) in comp(R,S)" for h in new.hyps)

    def test_buggy_rules_filtered_by_default(self):
        s = seq(["(x,y) in inv(comp(R,S))"], "G")
        apps = applicable_rules(s, theory_rules(REL_BUGGY, include_buggy=True))
        assert not any(a.rule.is_buggy for a in apps)
        apps2 = applicable_rules(
            s, theory_rules(REL_BUGGY, include_buggy=True), include_buggy=True
        )
        assert any(a.rule.is_buggy for a in apps2)

    def test_stale_application(self):
        s = seq([], "inv(comp(R,S)) = comp(inv(S),inv(R))")
        apps = applicable_rules(s, theory_rules(REL), direction="backward")
        other = seq([], "A subset B")
        with pytest.raises(StaleApplication):
            apply_to_sequent(apps[0], other)

    def test_axiom_close_via_deepaxiom(self):
        s = seq(["(x,y) in A"], "(x,y) in A")
        cands = deepaxiom_candidates(s)
        assert len(cands) == 1
        assert apply_to_sequent(cands[0], s) == []

    def test_deepaxiom_through_disjunction(self):
        s = seq(["(x,y) in comp(R,T)"], "(x,y) in comp(R,T) \\/ (x,y) in comp(S,T)")
        cands = deepaxiom_candidates(s)
        assert cands, "disjunct should close against the hypothesis"

    def test_deepaxiom_instantiates_metavar(self):
        s = Sequent((F("(w,x) in S"),), F("(?z,x) in S"), "T0")
        cands = deepaxiom_candidates(s)
        assert cands
        assert cands[0].state_subst.mapping == {"z": Const("w")}

    def test_or_split(self):
        s = seq(["(a,b) in R \\/ (a,b) in S"], "G")
        got = or_split(s)
        assert got is not None
        _, parts = got
        assert [render_formula(p.hyps[0]) for p in parts] == ["(a,b) in R", "(a,b) in S"]


class TestInvariants:
    def test_instantiation_soundness(self):
        """Substituting the schema with the recorded substitution reproduces
        the consumed/produced formulas."""
        s = seq(["(y,z) in R", "(z,x) in S"], "(y,x) in comp(R,S)")
        for app in applicable_rules(s, theory_rules(REL), direction="forward"):
            for pat, got in zip(app.rule.premises, app.consumed):
                inst = substitute(pat, app.subst)
                inst = substitute(inst, app.state_subst)
                assert alpha_equal(inst, substitute(got, app.state_subst))

    def test_ground_model_soundness_all_rules(self):
        """Every non-buggy rule orientation is truth-preserving over {0,1}^2."""
        rng = random.Random(5)
        for a in REL.assertions:
            for rule in synthesize_inferences(a):
                if rule.is_logic or rule.direction == "close" or not rule.premises:
                    continue
                if rule.direction == "forward":
                    prem: Formula | None = None
                    for p in rule.premises:
                        prem = p if prem is None else parse_formula(
                            f"({render_formula(prem)}) /\\ ({render_formula(p)})"
                        )
                else:
                    # a backward rule is sound when its undecomposed premise
                    # side entails the goal it replaces
                    prem = rule.premise_view
                impl = parse_formula(
                    f"({render_formula(prem)}) -> ({render_formula(rule.conclusion)})"
                )
                assert formula_valid(impl, samples=50, rng=rng), rule.name

    def test_buggy_rule_is_falsifiable(self):
        b = REL_BUGGY.assertion("inv-comp-buggy")
        assert not formula_valid(b.formula)

    def test_enumeration_matches_naive_oracle(self):
        """applicable_rules agrees with try-all-pool-substitutions."""
        sequents = [
            seq(["(y,z) in R", "(z,x) in S"], "(y,x) in comp(R,S)"),
            seq(["(x,y) in inv(comp(R,S))"], "(x,y) in comp(inv(S),inv(R))"),
            seq(["A subset B", "B subset C"], "A subset C"),
            seq([], "inv(comp(R,S)) = comp(inv(S),inv(R))"),
        ]
        rules = theory_rules(REL)
        for s in sequents:
            got = applicable_rules(s, rules, direction="forward")
            naive = naive_forward_apps(s, rules)
            got_keys = {
                (a.rule.name, tuple(render_formula(c) for c in a.consumed),
                 tuple(tuple(render_formula(u) for u in alt) for alt in a.new_hyps_alts))
                for a in got
            }
            assert got_keys == naive, render_formula(s.goal)


def naive_forward_apps(s: Sequent, rules) -> set:
    """Try-all-substitutions oracle over the sequent's own subterm pool."""
    from prooftutor.logic import sequent_pool, subterms, MetaVar as MV
    from prooftutor.rules import _admissible  # same admissibility contract

    pool = sequent_pool(s)
    cands = set()
    for t in pool:
        cands |= set(subterms(t))
    for h in s.hyps + (s.goal,):
        from prooftutor.logic import iter_atoms

        for a in iter_atoms(h):
            for t in a.args:
                cands |= set(subterms(t))
    cands = sorted(
        {t for t in cands if not isinstance(t, MV)}, key=render_formula.__self__ if False else repr
    )
    out = set()
    for rule in rules:
        if rule.direction != "forward" or rule.is_buggy or not rule.premises:
            continue
        mvs = set()
        for p in rule.premises:
            mvs |= formula_metavars(p)
        for alt in rule.produced_alts:
            for u in alt:
                mvs |= formula_metavars(u)
        mvs -= set(rule.witness_params)
        mvs = sorted(mvs)
        if len(mvs) > 5:
            continue
        for combo in itertools.product(cands, repeat=len(mvs)):
            try:
                sigma = Substitution(dict(zip(mvs, combo)))
            except Exception:
                continue
            inst_prem = [substitute(p, sigma) for p in rule.premises]
            consumed = []
            ok = True
            for p in inst_prem:
                hit = next((h for h in s.hyps if alpha_equal(p, h)), None)
                if hit is None:
                    ok = False
                    break
                consumed.append(hit)
            if not ok:
                continue
            wit = {}
            taken = set()
            from prooftutor.rules import _standard_fresh

            names = set()
            for h in s.hyps + (s.goal,):
                from prooftutor.logic import formula_names

                names |= formula_names(h)
            fresh = []
            for w in rule.witness_params:
                n = _standard_fresh(w, names)
                names.add(n)
                fresh.append(n)
                wit[w] = Const(n)
            full = Substitution({**sigma.mapping, **wit})
            alts = tuple(
                tuple(substitute(u, full) for u in alt) for alt in rule.produced_alts
            )
            flat = [u for alt in alts for u in alt]
            if any(formula_metavars(f) for f in flat):
                continue
            if not _admissible(flat, pool, set(fresh)):
                continue
            out.add(
                (
                    rule.name,
                    tuple(render_formula(c) for c in consumed),
                    tuple(tuple(render_formula(u) for u in alt) for alt in alts),
                )
            )
    return out
