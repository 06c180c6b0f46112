"""Model tracing: verify declarative proof steps against mental proof states.

A student's step usually omits reasoning.  We search, breadth first and
depth limited, through assertion-level inference applications from the
current states, keep the shallowest states consistent with the step, and
report them as successor states together with the filled-in trace.  When
nothing fits, a second pass with a single buggy-rule application attempts
an error diagnosis.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

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
    Sequent,
    Substitution,
    Term,
    Var,
    alpha_equal,
    formula_metavars,
    formula_names,
    fresh_name,
    render_formula,
    rename_consts,
    substitute,
    unify,
)
from .rules import (
    DEEPAXIOM,
    InferenceRule,
    RuleApplication,
    applicable_rules,
    apply_to_sequent,
    deepaxiom_candidates,
    is_productive,
    or_split,
    substitute_var,
    theory_rules,
)
from .script import (
    Assume,
    CaseBranch,
    Cases,
    Continuation,
    Fact,
    ProofStep,
    Qed,
    SetStep,
    Subgoal,
    Subgoals,
    Trivial,
)
from .theory import Exercise, Theory


@dataclass(frozen=True)
class SearchLimits:
    depth: int = 4
    width: int = 16
    node_budget: int = 20000

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.node_budget < 1:
            raise ValueError("search limits must be positive")


def _logic_rule(name: str) -> InferenceRule:
    return InferenceRule(
        name=name, concept="", direction="forward", premises=(), conclusion=Atom(name, ()),
        is_logic=True,
    )


AND_ELIM = _logic_rule("and-elim")
EXISTS_ELIM = _logic_rule("exists-elim")
IMPL_INTRO = _logic_rule("impl-intro")
FORALL_INTRO = _logic_rule("forall-intro")
AND_SPLIT = _logic_rule("and-split")
IFF_SPLIT = _logic_rule("iff-split")
EXISTS_GOAL = _logic_rule("exists-goal")
CLAIM = _logic_rule("claim")
NOTE_FACT = _logic_rule("derived-fact")


@dataclass(frozen=True)
class TraceEntry:
    """One replayable transformation: which rule, on which sequent, with
    which results."""

    app: RuleApplication
    source_label: str
    produced: tuple[Sequent, ...]
    keeps_source: bool = False

    @property
    def is_assertion(self) -> bool:
        return not self.app.rule.is_logic

    def render(self) -> str:
        labels = ",".join(s.label for s in self.produced) or "-"
        return f"{self.app.rule.name}[{self.source_label}->{labels}] {self.app.subst.render()}"


@dataclass(frozen=True)
class MentalProofState:
    sequents: tuple[Sequent, ...]
    marked: int
    sigma: Substitution = EMPTY_SUBST
    history: tuple[TraceEntry, ...] = ()

    def __post_init__(self):
        if self.sequents and not (0 <= self.marked < len(self.sequents)):
            raise ValueError("marked index out of range")

    @property
    def marked_sequent(self) -> Optional[Sequent]:
        return self.sequents[self.marked] if self.sequents else None

    def render(self) -> str:
        parts = []
        for i, s in enumerate(self.sequents):
            star = "*" if i == self.marked else " "
            parts.append(f"{star}{s.label}: {s.render()}")
        return "\n".join(parts) if parts else "(closed)"


@dataclass(frozen=True)
class ReconstructionResult:
    verdict: str  # verified | rejected | buggy | resource_exhausted
    successors: tuple[MentalProofState, ...] = ()
    traces: tuple[tuple[TraceEntry, ...], ...] = ()
    proof_complete: bool = False
    buggy_rule: Optional[str] = None
    buggy_message: Optional[str] = None

    @property
    def verified(self) -> bool:
        return self.verdict == "verified"

    def best_trace(self) -> tuple[TraceEntry, ...]:
        return self.traces[0] if self.traces else ()


def initial_states(ex: Exercise) -> list[MentalProofState]:
    root = Sequent((), ex.goal, "T0")
    return [MentalProofState((root,), 0)]


def close_check(state: MentalProofState) -> bool:
    return not state.sequents


# ---------------------------------------------------------------------------
# Search context


class _Ctx:
    def __init__(self, theory: Theory, limits: SearchLimits, extra_pool: tuple[Formula, ...],
                 taken: set[str]):
        self.theory = theory
        self.limits = limits
        self.extra_pool = extra_pool
        self.rules = theory_rules(theory)
        self.buggy_rules = [
            r for r in theory_rules(theory, include_buggy=True) if r.is_buggy
        ]
        self.label_counter = 0
        self.parents: dict[str, str] = {}
        self.fresh: set[str] = set()
        self.taken = taken
        self.nodes = 0
        self.exhausted = False
        #: when set, only sequents descending from this per-origin label are
        #: expanded (fact and trivial steps act on the marked task's lineage)
        self.lineage_roots: Optional[list[str]] = None
        #: committing axiom closures only matter for closure-style matches
        self.zero_moves = False
        self._app_cache: dict[tuple[int, bool], tuple[Sequent, list]] = {}
        self._axiom_cache: dict[int, tuple[Sequent, list]] = {}

    def apps_for(self, s: Sequent, buggy: bool) -> list[RuleApplication]:
        key = (id(s), buggy)
        hit = self._app_cache.get(key)
        if hit is not None and hit[0] is s:
            return hit[1]
        taken = self.taken | self.fresh | _state_names(s)
        if buggy:
            apps = applicable_rules(s, self.buggy_rules, extra_pool=self.extra_pool,
                                    include_buggy=True, taken_names=taken)
        else:
            apps = applicable_rules(s, self.rules, extra_pool=self.extra_pool,
                                    taken_names=taken)
        self._app_cache[key] = (s, apps)
        return apps

    def axioms_for(self, s: Sequent) -> list[RuleApplication]:
        hit = self._axiom_cache.get(id(s))
        if hit is not None and hit[0] is s:
            return hit[1]
        cands = deepaxiom_candidates(s)
        self._axiom_cache[id(s)] = (s, cands)
        return cands

    def may_expand(self, label: str, origin: int) -> bool:
        if self.lineage_roots is None:
            return True
        return _descends(self, label, self.lineage_roots[origin])

    def next_label(self) -> str:
        self.label_counter += 1
        return f"T{self.label_counter}"

    def seed_labels(self, states: Iterable[MentalProofState]):
        mx = 0
        for st in states:
            for s in st.sequents:
                if s.label.startswith("T") and s.label[1:].isdigit():
                    mx = max(mx, int(s.label[1:]))
        self.label_counter = mx

    def charge(self) -> bool:
        self.nodes += 1
        if self.nodes > self.limits.node_budget:
            self.exhausted = True
            return False
        return True


@dataclass
class _Node:
    state: MentalProofState
    level: int
    buggy_used: bool = False
    origin: int = 0


def _apply_entry(state: MentalProofState, idx: int, entry: TraceEntry) -> MentalProofState:
    """Replace sequent idx by entry.produced (prepended with the source when
    the entry keeps it), apply forced meta-variable bindings state-wide."""
    seqs = list(state.sequents)
    produced = list(entry.produced)
    if entry.keeps_source:
        produced = [seqs[idx]] + produced
    seqs[idx:idx + 1] = produced
    marked = state.marked
    if marked == idx:
        marked = idx if produced else (0 if seqs else 0)
    elif marked > idx:
        marked += len(produced) - 1
    if seqs and marked >= len(seqs):
        marked = 0
    sub = entry.app.state_subst
    sigma = state.sigma
    if sub:
        seqs = [
            Sequent(
                tuple(substitute(h, sub) for h in s.hyps),
                substitute(s.goal, sub),
                s.label,
                tuple(substitute(v, sub) for v in s.views),
            )
            for s in seqs
        ]
        sigma = sigma.compose(sub)
    return MentalProofState(tuple(seqs), marked, sigma, state.history + (entry,))


def _label_new(ctx: _Ctx, source: Sequent, produced: list[Sequent], keep_label: bool) -> list[Sequent]:
    out = []
    for i, s in enumerate(produced):
        if keep_label and len(produced) == 1:
            label = source.label
        else:
            label = ctx.next_label()
            ctx.parents[label] = source.label
        out.append(Sequent(s.hyps, s.goal, label, s.views))
    return out


def _descends(ctx: _Ctx, label: str, ancestor: str) -> bool:
    while True:
        if label == ancestor:
            return True
        nxt = ctx.parents.get(label)
        if nxt is None or nxt == label:
            return False
        label = nxt


# ---------------------------------------------------------------------------
# Normalisation: eager structural logic steps


def _normalize(state: MentalProofState, ctx: _Ctx) -> MentalProofState:
    changed = True
    while changed:
        changed = False
        for i, s in enumerate(state.sequents):
            step = _normalize_step(s, ctx)
            if step is not None:
                entry = step
                state = _apply_entry(state, i, entry)
                changed = True
                break
    return state


def _mk_entry(rule: InferenceRule, s: Sequent, produced: tuple[Sequent, ...],
              consumed: tuple[Formula, ...] = (), new_hyps: tuple[Formula, ...] = (),
              state_subst: Substitution = EMPTY_SUBST, keeps_source: bool = False) -> TraceEntry:
    app = RuleApplication(
        rule=rule,
        sequent_label=s.label,
        subst=EMPTY_SUBST,
        state_subst=state_subst,
        consumed=consumed,
        new_hyps_alts=((new_hyps,) if new_hyps else ()),
    )
    return TraceEntry(app, s.label, produced, keeps_source)


def _normalize_step(s: Sequent, ctx: _Ctx) -> Optional[TraceEntry]:
    # hypothesis decomposition
    for i, h in enumerate(s.hyps):
        if isinstance(h, And):
            rest = s.hyps[:i] + (h.left, h.right) + s.hyps[i + 1:]
            return _mk_entry(AND_ELIM, s, (Sequent(rest, s.goal, s.label, s.views),), consumed=(h,))
        if isinstance(h, Exists):
            taken = ctx.taken | ctx.fresh | _state_names(s)
            name = h.var if h.var not in taken else fresh_name(h.var, taken)
            ctx.fresh.add(name)
            inst = substitute_var(h.body, h.var, Const(name))
            rest = s.hyps[:i] + (inst,) + s.hyps[i + 1:]
            return _mk_entry(EXISTS_ELIM, s, (Sequent(rest, s.goal, s.label, s.views),), consumed=(h,))
        if isinstance(h, Or):
            got = or_split(s)
            assert got is not None
            app, parts = got
            labeled = _label_new(ctx, s, parts, keep_label=False)
            return TraceEntry(app, s.label, tuple(labeled))
    # goal decomposition
    g = s.goal
    if isinstance(g, Implies):
        new = Sequent(s.hyps + (g.left,), g.right, s.label, (g,) + s.views)
        return _mk_entry(IMPL_INTRO, s, (new,), new_hyps=(g.left,))
    if isinstance(g, Forall):
        taken = ctx.taken | ctx.fresh | _state_names(s)
        name = g.var if g.var not in taken else fresh_name(g.var, taken)
        ctx.fresh.add(name)
        new_goal = substitute_var(g.body, g.var, Const(name))
        return _mk_entry(FORALL_INTRO, s, (Sequent(s.hyps, new_goal, s.label, (g,) + s.views),))
    if isinstance(g, And):
        left = Sequent(s.hyps, g.left, "", (g,) + s.views)
        right = Sequent(s.hyps, g.right, "", (g,) + s.views)
        labeled = _label_new(ctx, s, [left, right], keep_label=False)
        return _mk_entry(AND_SPLIT, s, tuple(labeled))
    if isinstance(g, Iff):
        left = Sequent(s.hyps, Implies(g.left, g.right), "", (g,) + s.views)
        right = Sequent(s.hyps, Implies(g.right, g.left), "", (g,) + s.views)
        labeled = _label_new(ctx, s, [left, right], keep_label=False)
        return _mk_entry(IFF_SPLIT, s, tuple(labeled))
    if isinstance(g, Exists):
        taken = ctx.taken | ctx.fresh | _state_names(s) | {m for m in formula_metavars(g)}
        name = g.var
        while name in taken:
            name += "_"
        new_goal = substitute_var(g.body, g.var, MetaVar(name))
        return _mk_entry(EXISTS_GOAL, s, (Sequent(s.hyps, new_goal, s.label, (g,) + s.views),))
    # eager axiom closure without commitment: only binding-free matches, and
    # only in closure-style searches (a fact/let search must keep the task
    # open so the filter can inspect it)
    if ctx.zero_moves:
        for cand in ctx.axioms_for(s):
            if not cand.state_subst:
                return TraceEntry(cand, s.label, ())
    return None


_STATE_NAME_CACHE: dict[int, tuple[Sequent, set[str]]] = {}


def _state_names(s: Sequent) -> set[str]:
    """Free names of a sequent: constants and meta-variables.  Bound names
    are scoped away and do not block fresh-name choice."""
    hit = _STATE_NAME_CACHE.get(id(s))
    if hit is not None and hit[0] is s:
        return hit[1]
    names: set[str] = set()
    from .logic import formula_consts

    for f in s.hyps + (s.goal,):
        names |= formula_consts(f)
        names |= formula_metavars(f)
    if len(_STATE_NAME_CACHE) > 100000:
        _STATE_NAME_CACHE.clear()
    _STATE_NAME_CACHE[id(s)] = (s, names)
    return names


# ---------------------------------------------------------------------------
# Eigenvariable-flexible matching


def _lift_flex(f: Formula, flex: set[str]) -> Formula:
    from .rules import _consts_to_mvs

    ren = {n: MetaVar("e!" + n) for n in flex}
    return _consts_to_mvs(f, ren)


def flex_match(stated: Formula, candidate: Formula, flex: set[str],
               sigma: Substitution = EMPTY_SUBST) -> Optional[tuple[Substitution, dict[str, str]]]:
    """Match the student's formula against a state formula, allowing the
    search's fresh eigenvariables to be renamed to the student's names.

    Returns (state bindings, eigen renaming) or None.
    """
    lifted = _lift_flex(candidate, flex)
    got = unify(lifted, stated, sigma)
    if got is None:
        return None
    renaming: dict[str, str] = {}
    state_bindings: dict[str, Term] = {}
    used_targets: set[str] = set()
    for k, v in got.mapping.items():
        if k.startswith("e!"):
            src = k[2:]
            if isinstance(v, MetaVar):
                # the student's bound variable stands for this witness; keep
                # the witness name and bind the student's variable to it
                state_bindings[v.name] = Const(src)
                continue
            if not isinstance(v, Const):
                return None
            if v.name in used_targets and renaming.get(src) != v.name:
                return None
            renaming[src] = v.name
            used_targets.add(v.name)
        else:
            state_bindings[k] = v
    # injectivity
    if len(set(renaming.values())) != len(renaming):
        return None
    try:
        return Substitution(state_bindings), renaming
    except Exception:
        return None


def _apply_renaming(state: MentalProofState, renaming: dict[str, str]) -> MentalProofState:
    if not renaming:
        return state
    seqs = tuple(
        Sequent(
            tuple(rename_consts(h, renaming) for h in s.hyps),
            rename_consts(s.goal, renaming),
            s.label,
            tuple(rename_consts(v, renaming) for v in s.views),
        )
        for s in state.sequents
    )
    return MentalProofState(seqs, state.marked, state.sigma, state.history)


def _renaming_valid(state: MentalProofState, renaming: dict[str, str], flex: set[str]) -> bool:
    """Renaming targets must not collide with rigid names already in use."""
    rigid: set[str] = set()
    for s in state.sequents:
        rigid |= _state_names(s)
    rigid -= flex
    for src, dst in renaming.items():
        if src != dst and dst in rigid:
            return False
    return True


# ---------------------------------------------------------------------------
# Canonical state keys (dedup up to alpha / fresh-name renaming)


def _canon_key(state: MentalProofState, flex: set[str]) -> str:
    ren: dict[str, str] = {}
    mv_ren: dict[str, str] = {}

    def canon_formula(f: Formula) -> str:
        def walk(g) -> Formula:
            return g

        text = render_formula(f)
        # cheap but deterministic: tokenwise rename of flex consts and mvs
        out = []
        token = ""
        i = 0
        while i <= len(text):
            ch = text[i] if i < len(text) else " "
            if ch.isalnum() or ch in "_'!?-":
                token += ch
            else:
                if token:
                    if token.startswith("?"):
                        name = token[1:]
                        mv_ren.setdefault(name, f"m{len(mv_ren)}")
                        out.append("?" + mv_ren[name])
                    elif token in flex:
                        ren.setdefault(token, f"e{len(ren)}")
                        out.append(ren[token])
                    else:
                        out.append(token)
                    token = ""
                out.append(ch)
            i += 1
        return "".join(out)

    parts = []
    for s in state.sequents:
        hyps = sorted(canon_formula(h) for h in s.hyps)
        parts.append(f"{'; '.join(hyps)} |- {canon_formula(s.goal)}")
    return " || ".join(sorted(parts))


# ---------------------------------------------------------------------------
# BFS

# A node's trace is exactly its state's (search-local) history.


def _assertion_count(state: MentalProofState) -> int:
    return sum(1 for e in state.history if e.is_assertion and not e.app.rule.is_buggy)


def _expand_zero(node: _Node, ctx: _Ctx) -> list[_Node]:
    """Axiom closures that commit meta-variable bindings; free of depth cost."""
    out: list[_Node] = []
    state = node.state
    for i, s in enumerate(state.sequents):
        if not ctx.may_expand(s.label, node.origin):
            continue
        for cand in ctx.axioms_for(s):
            if not cand.state_subst:
                continue  # binding-free closures are done eagerly
            entry = TraceEntry(cand, s.label, ())
            child = _normalize(_apply_entry(state, i, entry), ctx)
            out.append(_Node(child, node.level, node.buggy_used, node.origin))
    return out


def _expand_assertion(node: _Node, ctx: _Ctx, allow_buggy: bool) -> list[_Node]:
    out: list[_Node] = []
    state = node.state
    non_buggy_used = node.level - (1 if node.buggy_used else 0)
    for i, s in enumerate(state.sequents):
        if not ctx.may_expand(s.label, node.origin):
            continue
        candidates: list[tuple[RuleApplication, bool]] = []
        if non_buggy_used < ctx.limits.depth:
            candidates += [(a, False) for a in ctx.apps_for(s, False)]
        if allow_buggy and not node.buggy_used:
            candidates += [(a, True) for a in ctx.apps_for(s, True)]
        for app, is_buggy in candidates:
            if not is_productive(app, s):
                continue
            try:
                produced = apply_to_sequent(app, s)
            except Exception:
                continue
            keep_label = app.rule.direction == "forward" and len(produced) == 1
            labeled = _label_new(ctx, s, produced, keep_label=keep_label)
            ctx.fresh.update(app.fresh_names)
            entry = TraceEntry(app, s.label, tuple(labeled))
            child = _normalize(_apply_entry(state, i, entry), ctx)
            out.append(_Node(child, node.level + 1, node.buggy_used or is_buggy, node.origin))
    return out


@dataclass
class _Match:
    state: MentalProofState
    buggy_used: bool
    buggy_rule: Optional[str]
    assertion_len: int
    order: int
    origin: int = 0


MatchFn = Callable[[_Node, "_Ctx"], list[MentalProofState]]


def _buggy_rule_of(state: MentalProofState) -> Optional[str]:
    for e in state.history:
        if e.app.rule.is_buggy:
            return e.app.rule.concept
    return None


def _search(start: list[MentalProofState], match_fn: MatchFn, ctx: _Ctx,
            allow_buggy: bool = False) -> list[_Match]:
    """Level-synchronous BFS over proof states.

    Matches are collected per level and the search stops at the first level
    that produced any, so traces are as short as possible.
    """
    seen: set[str] = set()
    frontier: list[_Node] = []
    for idx, st in enumerate(start):
        base = MentalProofState(st.sequents, st.marked, st.sigma, ())
        node = _Node(_normalize(base, ctx), 0, origin=idx)
        key = _canon_key(node.state, ctx.fresh)
        if key not in seen:
            seen.add(key)
            frontier.append(node)
    max_level = ctx.limits.depth + (1 if allow_buggy else 0)
    level = 0
    order = 0
    while frontier:
        # close the level under zero-cost moves
        queue = deque(frontier)
        closed: list[_Node] = []
        while queue:
            node = queue.popleft()
            closed.append(node)
            if not ctx.zero_moves:
                continue
            for child in _expand_zero(node, ctx):
                key = _canon_key(child.state, ctx.fresh) + ("!b" if child.buggy_used else "")
                if key in seen:
                    continue
                seen.add(key)
                if not ctx.charge():
                    return []
                queue.append(child)
        matches: list[_Match] = []
        for node in closed:
            for succ in match_fn(node, ctx):
                matches.append(
                    _Match(succ, node.buggy_used, _buggy_rule_of(node.state),
                           _assertion_count(node.state), order, node.origin)
                )
                order += 1
        if matches:
            return matches
        if level >= max_level:
            return []
        nxt: list[_Node] = []
        for node in closed:
            if not ctx.charge():
                return []
            for child in _expand_assertion(node, ctx, allow_buggy):
                base = _canon_key(child.state, ctx.fresh)
                if base in seen:
                    continue
                key = base + "!b" if child.buggy_used else base
                if key in seen:
                    continue
                seen.add(key)
                if not ctx.charge():
                    return []
                nxt.append(child)
        frontier = nxt
        level += 1
    return []


# ---------------------------------------------------------------------------
# Renaming fresh names to the student's own choices


def _rename_subst(sub: Substitution, ren: dict[str, str]) -> Substitution:
    return Substitution({k: _rename_term(v, ren) for k, v in sub.mapping.items()})


def _rename_term(t: Term, ren: dict[str, str]):
    from .logic import rename_consts_term

    return rename_consts_term(t, ren)


def _rename_sequent(s: Sequent, ren: dict[str, str]) -> Sequent:
    return Sequent(
        tuple(rename_consts(h, ren) for h in s.hyps),
        rename_consts(s.goal, ren),
        s.label,
        tuple(rename_consts(v, ren) for v in s.views),
    )


def _rename_entry(e: TraceEntry, ren: dict[str, str]) -> TraceEntry:
    app = e.app
    new_app = RuleApplication(
        rule=app.rule,
        sequent_label=app.sequent_label,
        subst=_rename_subst(app.subst, ren),
        state_subst=_rename_subst(app.state_subst, ren),
        consumed=tuple(rename_consts(c, ren) for c in app.consumed),
        new_sequents=tuple(
            (tuple(rename_consts(h, ren) for h in hyps), rename_consts(g, ren),
             rename_consts(v, ren) if v is not None else None)
            for hyps, g, v in app.new_sequents
        ),
        new_hyps_alts=tuple(
            tuple(rename_consts(u, ren) for u in alt) for alt in app.new_hyps_alts
        ),
        fresh_names=tuple(ren.get(n, n) for n in app.fresh_names),
        premise_instance=(
            rename_consts(app.premise_instance, ren)
            if app.premise_instance is not None else None
        ),
    )
    return TraceEntry(new_app, e.source_label, tuple(_rename_sequent(s, ren) for s in e.produced),
                      e.keeps_source)


def _rename_state(state: MentalProofState, ren: dict[str, str]) -> MentalProofState:
    if not ren or all(k == v for k, v in ren.items()):
        return state
    return MentalProofState(
        tuple(_rename_sequent(s, ren) for s in state.sequents),
        state.marked,
        _rename_subst(state.sigma, ren),
        tuple(_rename_entry(e, ren) for e in state.history),
    )


def _apply_bindings(state: MentalProofState, sub: Substitution) -> MentalProofState:
    if not sub:
        return state
    seqs = tuple(
        Sequent(
            tuple(substitute(h, sub) for h in s.hyps),
            substitute(s.goal, sub),
            s.label,
            tuple(substitute(v, sub) for v in s.views),
        )
        for s in state.sequents
    )
    return MentalProofState(seqs, state.marked, state.sigma.compose(sub), state.history)


# ---------------------------------------------------------------------------
# Step interpretations (consistency filters)


@dataclass
class _PreInfo:
    state: MentalProofState
    marked_label: str
    hyp_renders: set[str]
    formulas: tuple[Formula, ...]


def _fact_units(f: Formula, mv_count: list[int]) -> list[Formula]:
    """Decompose a stated fact into hypothesis-matchable units."""
    if isinstance(f, And):
        return _fact_units(f.left, mv_count) + _fact_units(f.right, mv_count)
    if isinstance(f, Exists):
        name = f"s!{mv_count[0]}"
        mv_count[0] += 1
        return _fact_units(substitute_var(f.body, f.var, MetaVar(name)), mv_count)
    return [f]


def _close_marked(state: MentalProofState, idx: int, ctx: _Ctx) -> MentalProofState:
    s = state.sequents[idx]
    app = RuleApplication(
        rule=DEEPAXIOM, sequent_label=s.label, subst=EMPTY_SUBST, state_subst=EMPTY_SUBST,
        consumed=(s.goal,),
    )
    entry = TraceEntry(app, s.label, ())
    return _normalize(_apply_entry(state, idx, entry), ctx)


def _with_marked(state: MentalProofState, idx: int) -> MentalProofState:
    return MentalProofState(state.sequents, idx, state.sigma, state.history)


def _make_let_filter(hyps: tuple[Formula, ...], pre_infos: list[_PreInfo]) -> MatchFn:
    def match(node: _Node, ctx: _Ctx) -> list[MentalProofState]:
        pre = pre_infos[node.origin]
        out = []
        for idx, s in enumerate(node.state.sequents):
            found = _match_hyps_in_sequent(hyps, s, node.state, ctx, pre, require_new=True)
            for sub, ren, _hits in found:
                succ = _apply_bindings(node.state, sub)
                succ = _rename_state(succ, ren)
                out.append(_with_marked(succ, idx))
        return out

    return match


def _match_hyps_in_sequent(stated: tuple[Formula, ...], s: Sequent, state: MentalProofState,
                           ctx: _Ctx, pre: _PreInfo, require_new: bool,
                           ground_targets: bool = False
                           ) -> list[tuple[Substitution, dict[str, str], tuple[Formula, ...]]]:
    """All ways to match every stated hypothesis against distinct hypotheses
    of one sequent (sharing bindings and eigen renamings).

    With ground_targets, hypotheses still containing meta-variables are not
    acceptable matches: an open placeholder is not a derived fact.
    """
    results: list[tuple[Substitution, dict[str, str], tuple[Formula, ...]]] = []

    def backtrack(i: int, sub: Substitution, ren: dict[str, str], used: set[int],
                  hits: tuple[Formula, ...]):
        if i == len(stated):
            results.append((sub, ren, hits))
            return
        target = substitute(stated[i], sub)
        for j, h in enumerate(s.hyps):
            if j in used:
                continue
            if require_new and render_formula(h) in pre.hyp_renders:
                continue
            if ground_targets and formula_metavars(h):
                continue
            cand = substitute(h, sub)
            cand = rename_consts(cand, ren)
            got = flex_match(target, cand, ctx.fresh - set(ren.keys()))
            if got is None:
                continue
            sub2, ren2 = got
            merged = dict(ren)
            ok = True
            for k, v in ren2.items():
                if merged.get(k, v) != v or (v in merged.values() and merged.get(k) != v):
                    ok = False
                    break
                merged[k] = v
            if not ok:
                continue
            if not _renaming_valid(state, merged, ctx.fresh):
                continue
            backtrack(i + 1, sub.compose(sub2), merged, used | {j}, hits + (h,))

    backtrack(0, EMPTY_SUBST, {}, set(), ())
    # deterministic, drop duplicates
    seen = set()
    uniq = []
    for sub, ren, hits in results:
        key = (tuple(sorted((k, render_formula(Atom("w", (v,)))) for k, v in sub.mapping.items())),
               tuple(sorted(ren.items())), tuple(render_formula(h) for h in hits))
        if key not in seen:
            seen.add(key)
            uniq.append((sub, ren, hits))
    return uniq


def _make_fact_filter(formula: Formula, pre_infos: list[_PreInfo], by: Optional[str],
                      from_formulas: tuple[Formula, ...]) -> MatchFn:
    """`by`/`from` are advisory in the tutorial dialect: they influence the
    verbalized-justification feature, not soundness."""
    mv_count = [0]
    units = tuple(_fact_units(formula, mv_count))

    def match(node: _Node, ctx: _Ctx) -> list[MentalProofState]:
        pre = pre_infos[node.origin]
        out = []
        for idx, s in enumerate(node.state.sequents):
            if not _descends(ctx, s.label, pre.marked_label):
                continue
            found = _match_hyps_in_sequent(units, s, node.state, ctx, pre, require_new=False,
                                           ground_targets=True)
            for sub, ren, hits in found:
                # once the search has moved, at least one matched hypothesis
                # must be new; a restatement only verifies on the start state
                if node.state.history:
                    if all(render_formula(h) in pre.hyp_renders for h in hits):
                        continue
                if from_formulas and not all(
                    any(flex_match(ff, h, ctx.fresh) is not None for h in s.hyps)
                    for ff in from_formulas
                ):
                    continue
                succ = _apply_bindings(node.state, sub)
                succ = _rename_state(succ, ren)
                succ = _with_marked(succ, idx)
                stated_inst = rename_consts(substitute(substitute(formula, sub), succ.sigma), ren)
                goal_now = succ.sequents[idx].goal
                closer = unify(stated_inst, goal_now)
                if closer is not None and not formula_metavars(substitute(goal_now, closer)):
                    closed = _apply_bindings(succ, closer)
                    closed = _close_marked(closed, idx, ctx)
                    out.append(closed)
                else:
                    out.append(succ)
        return out

    return match


def _trace_has_concept(trace: tuple[TraceEntry, ...], concept: str) -> bool:
    return any(e.app.rule.concept == concept for e in trace if e.is_assertion)


def _make_subgoal_filter(goals: tuple[Formula, ...], pre_infos: list[_PreInfo],
                         by: Optional[str]) -> MatchFn:
    def match(node: _Node, ctx: _Ctx) -> list[MentalProofState]:
        out = []
        assignments = _assign_goals(goals, node.state, ctx)
        for sub, ren, idxs in assignments:
            succ = _apply_bindings(node.state, sub)
            succ = _rename_state(succ, ren)
            out.append(_with_marked(succ, idxs[0]))
        return out

    return match


def _assign_goals(goals: tuple[Formula, ...], state: MentalProofState, ctx: _Ctx
                  ) -> list[tuple[Substitution, dict[str, str], list[int]]]:
    results: list[tuple[Substitution, dict[str, str], list[int]]] = []

    def backtrack(i: int, sub: Substitution, ren: dict[str, str], used: list[int]):
        if i == len(goals):
            results.append((sub, ren, list(used)))
            return
        target = substitute(goals[i], sub)
        for j, s in enumerate(state.sequents):
            if j in used:
                continue
            for cand_formula in (s.goal,) + s.views:
                cand = rename_consts(substitute(cand_formula, sub), ren)
                got = flex_match(target, cand, ctx.fresh - set(ren.keys()))
                if got is None:
                    continue
                sub2, ren2 = got
                merged = dict(ren)
                clash = False
                for k, v in ren2.items():
                    if merged.get(k, v) != v:
                        clash = True
                        break
                    merged[k] = v
                if clash or not _renaming_valid(state, merged, ctx.fresh):
                    continue
                backtrack(i + 1, sub.compose(sub2), merged, used + [j])
                break  # one matching view per sequent is enough

    backtrack(0, EMPTY_SUBST, {}, [])
    seen = set()
    uniq = []
    for sub, ren, idxs in results:
        key = tuple(idxs)
        if key not in seen:
            seen.add(key)
            uniq.append((sub, ren, idxs))
    return uniq


def _make_cases_filter(branches: tuple[CaseBranch, ...], pre_infos: list[_PreInfo],
                       theory: Theory, limits: SearchLimits) -> MatchFn:
    def match(node: _Node, ctx: _Ctx) -> list[MentalProofState]:
        pre = pre_infos[node.origin]
        # each case formula must be a hypothesis of its own open sequent
        results: list[tuple[Substitution, dict[str, str], list[int]]] = []

        def backtrack(i: int, sub: Substitution, ren: dict[str, str], used: list[int]):
            if i == len(branches):
                results.append((sub, ren, list(used)))
                return
            target = substitute(branches[i].formula, sub)
            for j, s in enumerate(node.state.sequents):
                if j in used:
                    continue
                for h in s.hyps:
                    if render_formula(h) in pre.hyp_renders:
                        continue
                    cand = rename_consts(substitute(h, sub), ren)
                    got = flex_match(target, cand, ctx.fresh - set(ren.keys()))
                    if got is None:
                        continue
                    sub2, ren2 = got
                    merged = dict(ren)
                    if any(merged.get(k, v) != v for k, v in ren2.items()):
                        continue
                    merged.update(ren2)
                    if not _renaming_valid(node.state, merged, ctx.fresh):
                        continue
                    backtrack(i + 1, sub.compose(sub2), merged, used + [j])
                    break

        backtrack(0, EMPTY_SUBST, {}, [])
        out = []
        for sub, ren, idxs in results[:1]:
            succ = _apply_bindings(node.state, sub)
            succ = _rename_state(succ, ren)
            state = _with_marked(succ, idxs[0])
            # verify nested branch scripts in order
            ok = True
            for branch_pos, branch in enumerate(branches):
                if not branch.steps:
                    continue
                label = succ.sequents[idxs[branch_pos]].label
                cur_idx = next(
                    (k for k, sq in enumerate(state.sequents) if sq.label == label), None
                )
                if cur_idx is None:
                    continue  # already closed
                state = _with_marked(state, cur_idx)
                for inner in branch.steps:
                    res = reconstruct_step([state], inner, theory, limits)
                    if not res.verified:
                        ok = False
                        break
                    state = res.successors[0]
                if not ok:
                    break
            if ok:
                out.append(state)
        return out

    return match


def _make_close_filter(pre_infos: list[_PreInfo], scope: str, by: Optional[str]) -> MatchFn:
    def match(node: _Node, ctx: _Ctx) -> list[MentalProofState]:
        if scope == "all":
            return [node.state] if not node.state.sequents else []
        pre = pre_infos[node.origin]
        still_open = any(
            _descends(ctx, s.label, pre.marked_label) for s in node.state.sequents
        )
        return [] if still_open else [node.state]

    return match


# ---------------------------------------------------------------------------
# Public API


def reconstruct_step(
    states: list[MentalProofState],
    step: ProofStep,
    theory: Theory,
    limits: SearchLimits = SearchLimits(),
    extra_names: set[str] | None = None,
) -> ReconstructionResult:
    """Verify one proof step against the live states.

    Successors are deduplicated up to renaming of search-fresh names and
    truncated to ``limits.width``, preferring shorter implicit traces.
    """
    if not states:
        raise ValueError("no states to verify against")
    if isinstance(step, SetStep):
        return ReconstructionResult("verified", tuple(states), ((),) * len(states),
                                    any(close_check(s) for s in states))
    if isinstance(step, Fact) and isinstance(step.formula, Continuation):
        raise ValueError("continuation fact must be resolved before reconstruction")

    pre_infos = []
    for st in states:
        hyp_renders = {render_formula(h) for s in st.sequents for h in s.hyps}
        marked_label = st.marked_sequent.label if st.sequents else ""
        formulas = tuple(f for s in st.sequents for f in (s.goal,) + s.hyps + s.views)
        pre_infos.append(_PreInfo(st, marked_label, hyp_renders, formulas))

    step_formulas = _formulas_of(step)
    taken: set[str] = set()
    for st in states:
        for s in st.sequents:
            taken |= _state_names(s)

    def fresh_ctx(lineage_only: bool) -> _Ctx:
        ctx = _Ctx(theory, limits, tuple(step_formulas), set(taken))
        ctx.seed_labels(states)
        for st in states:
            for s in st.sequents:
                ctx.parents.setdefault(s.label, s.label)
        if lineage_only:
            ctx.lineage_roots = [p.marked_label for p in pre_infos]
        return ctx

    interpretations = _interpretations(step, pre_infos, theory, limits)

    def run(allow_buggy: bool) -> tuple[list[_Match], bool]:
        found: list[_Match] = []
        exhausted = False
        for lineage_only, zero_moves, make in interpretations:
            ctx = fresh_ctx(lineage_only)
            ctx.zero_moves = zero_moves
            match_fn = make()
            found.extend(_search(states, match_fn, ctx, allow_buggy))
            exhausted = exhausted or ctx.exhausted
        return found, exhausted

    matches, exhausted = run(False)
    if not matches and isinstance(step, Fact) and not isinstance(step.formula, Continuation):
        side = _entailed_fact_matches(step, states, pre_infos, theory, limits, taken)
        matches.extend(side)
    if matches:
        return _assemble(matches, states, limits, theory)
    # buggy diagnosis pass
    if any(a.kind == "buggy" for a in theory.assertions):
        buggy_matches, exhausted2 = run(True)
        exhausted = exhausted or exhausted2
        buggy_matches = [m for m in buggy_matches if m.buggy_used]
        if buggy_matches:
            best = sorted(buggy_matches, key=lambda m: (m.assertion_len, m.order))[0]
            label = best.buggy_rule or ""
            message = None
            for a in theory.assertions:
                if a.concept == label or a.label == label:
                    message = a.message
                    break
            return ReconstructionResult("buggy", (), (), False, label, message)
    if exhausted:
        return ReconstructionResult("resource_exhausted")
    return ReconstructionResult("rejected")


def _formulas_of(step: ProofStep) -> list[Formula]:
    if isinstance(step, Assume):
        return list(step.hypotheses) + ([step.thus] if step.thus else [])
    if isinstance(step, Fact):
        return [step.formula] if isinstance(step.formula, Formula) else []
    if isinstance(step, Subgoal):
        return [step.goal, *step.using]
    if isinstance(step, Subgoals):
        return [g.goal for g in step.goals]
    if isinstance(step, Cases):
        return [b.formula for b in step.branches]
    return []


def _interpretations(step: ProofStep, pre_infos: list[_PreInfo], theory: Theory,
                     limits: SearchLimits) -> list:
    """(lineage_only, zero_moves, filter factory) per reading of the step."""
    makers = []
    if isinstance(step, Assume):
        if step.thus is None:
            makers.append((False, False, lambda: _make_let_filter(step.hypotheses, pre_infos)))
        else:
            makers.append(
                (False, False, lambda: _make_assume_thus_filter(step, pre_infos, theory, limits))
            )
    elif isinstance(step, Fact):
        assert isinstance(step.formula, Formula)
        makers.append(
            (True, False, lambda: _make_fact_filter(step.formula, pre_infos, step.by, ()))
        )
        if step.keyword is None:
            makers.append(
                (False, False, lambda: _make_subgoal_filter((step.formula,), pre_infos, step.by))
            )
    elif isinstance(step, Subgoal):
        makers.append((False, False, lambda: _make_subgoal_with_using_filter(step, pre_infos)))
    elif isinstance(step, Subgoals):
        goals = tuple(g.goal for g in step.goals)
        makers.append((False, False, lambda: _make_subgoal_filter(goals, pre_infos, step.by)))
    elif isinstance(step, Cases):
        makers.append(
            (False, False, lambda: _make_cases_filter(step.branches, pre_infos, theory, limits))
        )
    elif isinstance(step, Trivial):
        makers.append((True, True, lambda: _make_close_filter(pre_infos, "marked", step.by)))
    elif isinstance(step, Qed):
        makers.append((False, True, lambda: _make_close_filter(pre_infos, "all", None)))
    else:
        raise ValueError(f"cannot interpret step {step!r}")
    return makers


def _make_subgoal_with_using_filter(step: Subgoal, pre_infos: list[_PreInfo]) -> MatchFn:
    base = _make_subgoal_filter((step.goal,), pre_infos, step.by)

    def match(node: _Node, ctx: _Ctx) -> list[MentalProofState]:
        if step.using:
            pre = pre_infos[node.origin]
            for u in step.using:
                hit = any(
                    flex_match(u, f, ctx.fresh) is not None for f in pre.formulas
                )
                if not hit:
                    return []
        return base(node, ctx)

    return match


def _make_assume_thus_filter(step: Assume, pre_infos: list[_PreInfo], theory: Theory,
                             limits: SearchLimits) -> MatchFn:
    let_filter = _make_let_filter(step.hypotheses, pre_infos)

    def match(node: _Node, ctx: _Ctx) -> list[MentalProofState]:
        out = []
        for succ in let_filter(node, ctx):
            res = reconstruct_step(
                [succ], Fact(step.thus, None, step.from_labels, keyword="hence"), theory, limits
            )
            if res.verified:
                out.extend(res.successors)
        return out

    return match


def _entailed_fact_matches(step: Fact, states: list[MentalProofState],
                           pre_infos: list[_PreInfo], theory: Theory, limits: SearchLimits,
                           taken: set[str]) -> list[_Match]:
    """Tautological / entailed facts: the statement closes as a side goal from
    the current hypotheses."""
    assert isinstance(step.formula, Formula)
    out: list[_Match] = []
    for origin, st in enumerate(states):
        marked = st.marked_sequent
        if marked is None:
            continue
        ctx = _Ctx(theory, limits, (step.formula,), set(taken))
        ctx.zero_moves = True
        ctx.seed_labels(states)
        side_label = ctx.next_label()
        side = Sequent(marked.hyps, step.formula, side_label)
        side_state = MentalProofState((side,), 0)
        ctx.parents[side_label] = side_label

        def closed_fn(node: _Node, _ctx: _Ctx) -> list[MentalProofState]:
            return [node.state] if not node.state.sequents else []

        got = _search([side_state], closed_fn, ctx, allow_buggy=False)
        if not got:
            continue
        best = sorted(got, key=lambda m: (m.assertion_len, m.order))[0]
        claim_app = RuleApplication(
            rule=CLAIM, sequent_label=marked.label, subst=EMPTY_SUBST,
            state_subst=EMPTY_SUBST, consumed=(),
            new_sequents=(((), step.formula, None),),
        )
        claim_entry = TraceEntry(claim_app, marked.label, (side,), keeps_source=True)
        note_app = RuleApplication(
            rule=NOTE_FACT, sequent_label=marked.label, subst=EMPTY_SUBST,
            state_subst=EMPTY_SUBST, consumed=(), new_hyps_alts=((step.formula,),),
        )
        new_marked = marked.with_hyps((step.formula,))
        note_entry = TraceEntry(note_app, marked.label, (new_marked,))
        seqs = list(st.sequents)
        seqs[st.marked] = new_marked
        history = (claim_entry,) + best.state.history + (note_entry,)
        succ = MentalProofState(tuple(seqs), st.marked, st.sigma, history)
        if alpha_equal(step.formula, marked.goal):
            close_app = RuleApplication(
                rule=DEEPAXIOM, sequent_label=marked.label, subst=EMPTY_SUBST,
                state_subst=EMPTY_SUBST, consumed=(step.formula, marked.goal),
            )
            succ = _apply_entry(succ, st.marked, TraceEntry(close_app, marked.label, ()))
        out.append(_Match(succ, False, None, best.assertion_len, len(out), origin))
    return out


def _assemble(matches: list[_Match], states: list[MentalProofState], limits: SearchLimits,
              theory: Theory) -> ReconstructionResult:
    ranked = sorted(matches, key=lambda m: (m.assertion_len, m.order))
    seen: set[str] = set()
    successors: list[MentalProofState] = []
    traces: list[tuple[TraceEntry, ...]] = []
    for m in ranked:
        # reattach the pre-step history
        pre = states[m.origin]
        full = MentalProofState(
            m.state.sequents, m.state.marked, m.state.sigma,
            pre.history + m.state.history,
        )
        marked_render = full.marked_sequent.render() if full.sequents else ""
        key = _canon_key(full, set()) + "|" + marked_render
        if key in seen:
            continue
        seen.add(key)
        successors.append(full)
        traces.append(m.state.history)
        if len(successors) >= limits.width:
            break
    complete = any(close_check(s) for s in successors)
    return ReconstructionResult(
        "verified", tuple(successors), tuple(traces), complete
    )


# ---------------------------------------------------------------------------
# Relevance


def check_relevance(
    state: MentalProofState,
    hyps: Iterable[Formula],
    strategy_name: str,
    theory: Theory,
    budget: int = 5000,
    plan=None,
) -> str:
    """relevant | irrelevant | unknown: do the introduced hypotheses unify
    into a strategy-discovered (partial) solution?

    A pre-computed plan for the pre-step marked task may be passed to avoid
    re-running the strategy.
    """
    from .strategy import run_strategy

    hyps = list(hyps)
    if not hyps:
        return "relevant"
    task = state.marked_sequent
    if task is None:
        return "relevant"
    if budget <= 0:
        return "unknown"
    if plan is None:
        plan = run_strategy(strategy_name, task, theory, budget)
    if plan is None:
        return "unknown"
    rigid = _state_names(task)
    plan_hyps: list[Formula] = []
    for node_seq in plan.all_sequents():
        plan_hyps.extend(node_seq.hyps)
    for h in hyps:
        h_flex = formula_names(h) - rigid - _relation_position_names(h)
        matched = False
        for ph in plan_hyps:
            ph_flex = formula_names(ph) - rigid - _relation_position_names(ph)
            lifted_plan = _lift_flex(ph, ph_flex)
            lifted_stated = _lift_student(h, h_flex)
            if unify(lifted_plan, lifted_stated) is not None:
                matched = True
                break
        if not matched:
            return "irrelevant"
    return "relevant"


def _relation_position_names(f: Formula) -> set[str]:
    """Names used where a relation is expected; these stay rigid when
    checking relevance (only element variables are renameable)."""
    out: set[str] = set()

    def mark(t: Term):
        if isinstance(t, (Const, Var, MetaVar)):
            out.add(t.name)
        elif isinstance(t, App):
            for a in t.args:
                mark(a)

    from .logic import iter_atoms

    for a in iter_atoms(f):
        if a.pred == "in" and len(a.args) == 2:
            mark(a.args[1])
        elif a.pred in ("subset", "supset", "=") and len(a.args) == 2:
            for t in a.args:
                mark(t)
        for t in a.args:
            if isinstance(t, App):
                for sub in t.args:
                    mark(sub)
    return out


def _lift_student(f: Formula, flex: set[str]) -> Formula:
    from .rules import _consts_to_mvs

    ren = {n: MetaVar("s!" + n) for n in flex}
    return _consts_to_mvs(f, ren)


# ---------------------------------------------------------------------------
# Replay


class ReplayError(Exception):
    pass


def replay_trace(pre: MentalProofState, trace: tuple[TraceEntry, ...]) -> MentalProofState:
    """Re-apply a recorded trace; assertion entries are re-validated against
    the rule engine."""
    state = MentalProofState(pre.sequents, pre.marked, pre.sigma, pre.history)
    for entry in trace:
        idx = next(
            (i for i, s in enumerate(state.sequents) if s.label == entry.source_label), None
        )
        if idx is None:
            raise ReplayError(f"sequent {entry.source_label} not open")
        source = state.sequents[idx]
        if entry.is_assertion:
            got = apply_to_sequent(entry.app, source)
            if len(got) != len(entry.produced):
                raise ReplayError(f"{entry.app.rule.name}: arity mismatch on replay")
            for a, b in zip(got, entry.produced):
                if not alpha_equal(a.goal, b.goal):
                    raise ReplayError(f"{entry.app.rule.name}: goal drift on replay")
                if len(a.hyps) != len(b.hyps):
                    raise ReplayError(f"{entry.app.rule.name}: hypothesis drift on replay")
        state = _apply_entry(state, idx, entry)
    return state

