"""First-order formulas, terms, sequents and substitutions.

Everything here is an immutable value.  Identifiers play three roles:
``Var`` is a bound occurrence (always under a quantifier), ``Const`` is a
rigid free name (exercise constants such as R, S, or eigenvariables
introduced during search), and ``MetaVar`` (written ``?name``) is a
placeholder open to unification.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional


class LogicError(Exception):
    pass


class ParseError(LogicError):
    def __init__(self, message: str, pos: int, line: int = 1, col: int | None = None):
        super().__init__(f"{message} (offset {pos})")
        self.message = message
        self.pos = pos
        self.line = line
        self.col = col if col is not None else pos + 1


# ---------------------------------------------------------------------------
# Terms


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Term):
    name: str

    def __repr__(self):
        return f"Var({self.name})"


@dataclass(frozen=True)
class Const(Term):
    name: str

    def __repr__(self):
        return f"Const({self.name})"


@dataclass(frozen=True)
class MetaVar(Term):
    name: str

    def __repr__(self):
        return f"?{self.name}"


@dataclass(frozen=True)
class Pair(Term):
    fst: Term
    snd: Term


@dataclass(frozen=True)
class App(Term):
    fn: str
    args: tuple[Term, ...]


# ---------------------------------------------------------------------------
# Formulas


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class Atom(Formula):
    pred: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class Not(Formula):
    body: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Iff(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


BINARY = (And, Or, Implies, Iff)
QUANT = (Forall, Exists)

#: Binary predicates with fixed arity 2.
PREDICATES = ("=", "in", "subset", "supset")

#: Default function-symbol arities for the relation theories.
DEFAULT_ARITIES = {"comp": 2, "inv": 1, "union": 2, "inter": 2}


# ---------------------------------------------------------------------------
# Traversals


def term_metavars(t: Term) -> set[str]:
    if isinstance(t, MetaVar):
        return {t.name}
    if isinstance(t, Pair):
        return term_metavars(t.fst) | term_metavars(t.snd)
    if isinstance(t, App):
        out: set[str] = set()
        for a in t.args:
            out |= term_metavars(a)
        return out
    return set()


_FORMULA_MV_CACHE: dict[int, tuple["Formula", set[str]]] = {}


def formula_metavars(f: Formula) -> set[str]:
    hit = _FORMULA_MV_CACHE.get(id(f))
    if hit is not None and hit[0] is f:
        return hit[1]
    out: set[str] = set()
    for a in iter_atoms(f):
        for t in a.args:
            out |= term_metavars(t)
    if len(_FORMULA_MV_CACHE) > 200000:
        _FORMULA_MV_CACHE.clear()
    _FORMULA_MV_CACHE[id(f)] = (f, out)
    return out


def iter_atoms(f: Formula) -> Iterator[Atom]:
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, Not):
        yield from iter_atoms(f.body)
    elif isinstance(f, BINARY):
        yield from iter_atoms(f.left)
        yield from iter_atoms(f.right)
    elif isinstance(f, QUANT):
        yield from iter_atoms(f.body)


def term_consts(t: Term) -> set[str]:
    if isinstance(t, Const):
        return {t.name}
    if isinstance(t, Pair):
        return term_consts(t.fst) | term_consts(t.snd)
    if isinstance(t, App):
        out: set[str] = set()
        for a in t.args:
            out |= term_consts(a)
        return out
    return set()


def formula_consts(f: Formula) -> set[str]:
    out: set[str] = set()
    for a in iter_atoms(f):
        for t in a.args:
            out |= term_consts(t)
    return out


def formula_names(f: Formula) -> set[str]:
    """All identifiers occurring anywhere (consts, vars, metavars, binders)."""
    out: set[str] = set()

    def walk_t(t: Term):
        if isinstance(t, (Var, Const, MetaVar)):
            out.add(t.name)
        elif isinstance(t, Pair):
            walk_t(t.fst)
            walk_t(t.snd)
        elif isinstance(t, App):
            for a in t.args:
                walk_t(a)

    def walk_f(g: Formula):
        if isinstance(g, Atom):
            for t in g.args:
                walk_t(t)
        elif isinstance(g, Not):
            walk_f(g.body)
        elif isinstance(g, BINARY):
            walk_f(g.left)
            walk_f(g.right)
        elif isinstance(g, QUANT):
            out.add(g.var)
            walk_f(g.body)

    walk_f(f)
    return out


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, Pair):
        yield from subterms(t.fst)
        yield from subterms(t.snd)
    elif isinstance(t, App):
        for a in t.args:
            yield from subterms(a)


def formula_subterms(f: Formula) -> Iterator[Term]:
    for a in iter_atoms(f):
        for t in a.args:
            yield from subterms(t)


_COMPOUND_CACHE: dict[int, tuple["Formula", frozenset]] = {}


def compound_subterms(f: Formula) -> frozenset[Term]:
    """App subterms of a formula; the pool used for term-directed search."""
    hit = _COMPOUND_CACHE.get(id(f))
    if hit is not None and hit[0] is f:
        return hit[1]
    out = frozenset(t for t in formula_subterms(f) if isinstance(t, App))
    if len(_COMPOUND_CACHE) > 200000:
        _COMPOUND_CACHE.clear()
    _COMPOUND_CACHE[id(f)] = (f, out)
    return out


def free_vars(f: Formula) -> set[str]:
    """Names of Var occurrences not captured by an enclosing quantifier."""
    out: set[str] = set()

    def walk_t(t: Term, bound: frozenset[str]):
        if isinstance(t, Var) and t.name not in bound:
            out.add(t.name)
        elif isinstance(t, Pair):
            walk_t(t.fst, bound)
            walk_t(t.snd, bound)
        elif isinstance(t, App):
            for a in t.args:
                walk_t(a, bound)

    def walk_f(g: Formula, bound: frozenset[str]):
        if isinstance(g, Atom):
            for t in g.args:
                walk_t(t, bound)
        elif isinstance(g, Not):
            walk_f(g.body, bound)
        elif isinstance(g, BINARY):
            walk_f(g.left, bound)
            walk_f(g.right, bound)
        elif isinstance(g, QUANT):
            walk_f(g.body, bound | {g.var})

    walk_f(f, frozenset())
    return out


def is_closed(f: Formula) -> bool:
    return not free_vars(f) and not formula_metavars(f)


# ---------------------------------------------------------------------------
# Substitution


@dataclass(frozen=True)
class Substitution:
    """Idempotent finite map from meta-variable names to terms."""

    mapping: Mapping[str, Term] = field(default_factory=dict)

    def __post_init__(self):
        # Normalise to idempotent form: bindings do not mention the domain.
        m = {k: v for k, v in self.mapping.items() if not (isinstance(v, MetaVar) and v.name == k)}
        # fast path: ground bindings need no fixpoint pass
        dirty = [k for k, v in m.items() if term_metavars(v)]
        if dirty:
            for _ in range(len(m) + 1):
                changed = False
                for k in dirty:
                    v = m[k]
                    if term_metavars(v) & m.keys():
                        nv = subst_term(v, m)
                        if nv != v:
                            m[k] = nv
                            changed = True
                if not changed:
                    break
            for k in dirty:
                if k in term_metavars(m[k]):
                    raise LogicError(f"occurs check failed for ?{k}")
        object.__setattr__(self, "mapping", dict(sorted(m.items())))

    def __bool__(self):
        return bool(self.mapping)

    def __contains__(self, name: str):
        return name in self.mapping

    def get(self, name: str) -> Optional[Term]:
        return self.mapping.get(name)

    def apply_term(self, t: Term) -> Term:
        return subst_term(t, self.mapping)

    def apply(self, f: Formula) -> Formula:
        return substitute(f, self)

    def compose(self, other: "Substitution") -> "Substitution":
        """self then other: (self.compose(other)).apply == other.apply . self.apply."""
        m = {k: subst_term(v, other.mapping) for k, v in self.mapping.items()}
        for k, v in other.mapping.items():
            m.setdefault(k, v)
        return Substitution(m)

    def render(self) -> str:
        inner = ", ".join(f"?{k} := {render_term(v)}" for k, v in self.mapping.items())
        return "{" + inner + "}"


EMPTY_SUBST = Substitution({})


def subst_term(t: Term, m: Mapping[str, Term]) -> Term:
    if isinstance(t, MetaVar):
        return m.get(t.name, t)
    if isinstance(t, Pair):
        return Pair(subst_term(t.fst, m), subst_term(t.snd, m))
    if isinstance(t, App):
        return App(t.fn, tuple(subst_term(a, m) for a in t.args))
    return t


def rename_consts_term(t: Term, ren: Mapping[str, str]) -> Term:
    if isinstance(t, Const):
        return Const(ren.get(t.name, t.name))
    if isinstance(t, Pair):
        return Pair(rename_consts_term(t.fst, ren), rename_consts_term(t.snd, ren))
    if isinstance(t, App):
        return App(t.fn, tuple(rename_consts_term(a, ren) for a in t.args))
    return t


def rename_consts(f: Formula, ren: Mapping[str, str]) -> Formula:
    return map_atoms(f, lambda a: Atom(a.pred, tuple(rename_consts_term(t, ren) for t in a.args)))


def map_atoms(f: Formula, fn) -> Formula:
    if isinstance(f, Atom):
        return fn(f)
    if isinstance(f, Not):
        return Not(map_atoms(f.body, fn))
    if isinstance(f, And):
        return And(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Or):
        return Or(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Implies):
        return Implies(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Iff):
        return Iff(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Forall):
        return Forall(f.var, map_atoms(f.body, fn))
    if isinstance(f, Exists):
        return Exists(f.var, map_atoms(f.body, fn))
    raise LogicError(f"unknown formula node {f!r}")


def substitute(f: Formula, sigma: Substitution) -> Formula:
    """Replace meta-variables, renaming binders that would capture a free name."""
    m = sigma.mapping

    def needs(names_in_bindings: set[str], g: Formula) -> Formula:
        return _subst_f(g, m, names_in_bindings)

    relevant = formula_metavars(f) & m.keys()
    if not relevant:
        return f
    clash_names: set[str] = set()
    for k in relevant:
        clash_names |= term_consts(m[k])
        clash_names |= {v.name for v in _term_vars(m[k])}
    return needs(clash_names, f)


def _term_vars(t: Term) -> set[Var]:
    if isinstance(t, Var):
        return {t}
    if isinstance(t, Pair):
        return _term_vars(t.fst) | _term_vars(t.snd)
    if isinstance(t, App):
        out: set[Var] = set()
        for a in t.args:
            out |= _term_vars(a)
        return out
    return set()


def _subst_f(f: Formula, m: Mapping[str, Term], clash: set[str]) -> Formula:
    if isinstance(f, Atom):
        return Atom(f.pred, tuple(subst_term(t, m) for t in f.args))
    if isinstance(f, Not):
        return Not(_subst_f(f.body, m, clash))
    if isinstance(f, BINARY):
        return type(f)(_subst_f(f.left, m, clash), _subst_f(f.right, m, clash))
    if isinstance(f, QUANT):
        var = f.var
        body = f.body
        hit = {k for k in formula_metavars(body) if k in m}
        if hit and var in clash:
            taken = formula_names(body) | clash
            fresh = fresh_name(var, taken)
            body = _rename_bound(body, var, fresh)
            var = fresh
        return type(f)(var, _subst_f(body, m, clash))
    raise LogicError(f"unknown formula node {f!r}")


def _rename_bound(f: Formula, old: str, new: str) -> Formula:
    def walk_t(t: Term) -> Term:
        if isinstance(t, Var) and t.name == old:
            return Var(new)
        if isinstance(t, Pair):
            return Pair(walk_t(t.fst), walk_t(t.snd))
        if isinstance(t, App):
            return App(t.fn, tuple(walk_t(a) for a in t.args))
        return t

    if isinstance(f, Atom):
        return Atom(f.pred, tuple(walk_t(t) for t in f.args))
    if isinstance(f, Not):
        return Not(_rename_bound(f.body, old, new))
    if isinstance(f, BINARY):
        return type(f)(_rename_bound(f.left, old, new), _rename_bound(f.right, old, new))
    if isinstance(f, QUANT):
        if f.var == old:  # inner binder shadows; stop
            return f
        return type(f)(f.var, _rename_bound(f.body, old, new))
    raise LogicError(f"unknown formula node {f!r}")


def fresh_name(base: str, taken: set[str]) -> str:
    base = base.rstrip("'") or "x"
    cand = base + "'"
    while cand in taken:
        cand += "'"
    if len(cand) - len(base) <= 2:
        return cand
    i = 1
    while f"{base}{i}" in taken:
        i += 1
    return f"{base}{i}"


# ---------------------------------------------------------------------------
# Alpha equivalence


def alpha_equal(f: Formula, g: Formula) -> bool:
    return _alpha(f, g, {}, {})


def _alpha(f: Formula, g: Formula, env_f: dict[str, int], env_g: dict[str, int]) -> bool:
    if type(f) is not type(g):
        return False
    if isinstance(f, Atom):
        assert isinstance(g, Atom)
        if f.pred != g.pred or len(f.args) != len(g.args):
            return False
        return all(_alpha_t(a, b, env_f, env_g) for a, b in zip(f.args, g.args))
    if isinstance(f, Not):
        assert isinstance(g, Not)
        return _alpha(f.body, g.body, env_f, env_g)
    if isinstance(f, BINARY):
        assert isinstance(g, BINARY)
        return _alpha(f.left, g.left, env_f, env_g) and _alpha(f.right, g.right, env_f, env_g)
    if isinstance(f, QUANT):
        assert isinstance(g, QUANT)
        depth = len(env_f)
        ef = dict(env_f)
        eg = dict(env_g)
        ef[f.var] = depth
        eg[g.var] = depth
        return _alpha(f.body, g.body, ef, eg)
    return False


def _alpha_t(a: Term, b: Term, env_f: dict[str, int], env_g: dict[str, int]) -> bool:
    if isinstance(a, Var) and isinstance(b, Var):
        if a.name in env_f or b.name in env_g:
            return env_f.get(a.name) == env_g.get(b.name)
        return a.name == b.name
    if type(a) is not type(b):
        return False
    if isinstance(a, (Const, MetaVar)):
        return a.name == b.name  # type: ignore[union-attr]
    if isinstance(a, Pair):
        assert isinstance(b, Pair)
        return _alpha_t(a.fst, b.fst, env_f, env_g) and _alpha_t(a.snd, b.snd, env_f, env_g)
    if isinstance(a, App):
        assert isinstance(b, App)
        return a.fn == b.fn and len(a.args) == len(b.args) and all(
            _alpha_t(x, y, env_f, env_g) for x, y in zip(a.args, b.args)
        )
    return False


# ---------------------------------------------------------------------------
# Unification

_FAIL = object()


def unify(f: Formula, g: Formula, sigma: Substitution = EMPTY_SUBST) -> Optional[Substitution]:
    """Most general unifier of two formulas, or None.

    Only meta-variables are open; consts are rigid and bound variables
    unify up to alpha.  A meta-variable never captures a bound variable.
    """
    m = dict(sigma.mapping)
    if _unify_f(f, g, m, {}, {}) is _FAIL:
        return None
    try:
        return Substitution(m)
    except LogicError:
        return None


def unify_terms(a: Term, b: Term, sigma: Substitution = EMPTY_SUBST) -> Optional[Substitution]:
    m = dict(sigma.mapping)
    if _unify_t(a, b, m, {}, {}) is _FAIL:
        return None
    try:
        return Substitution(m)
    except LogicError:
        return None


def _unify_f(f, g, m, env_f, env_g):
    if type(f) is not type(g):
        return _FAIL
    if isinstance(f, Atom):
        if f.pred != g.pred or len(f.args) != len(g.args):
            return _FAIL
        for a, b in zip(f.args, g.args):
            if _unify_t(a, b, m, env_f, env_g) is _FAIL:
                return _FAIL
        return None
    if isinstance(f, Not):
        return _unify_f(f.body, g.body, m, env_f, env_g)
    if isinstance(f, BINARY):
        if _unify_f(f.left, g.left, m, env_f, env_g) is _FAIL:
            return _FAIL
        return _unify_f(f.right, g.right, m, env_f, env_g)
    if isinstance(f, QUANT):
        depth = len(env_f)
        ef = dict(env_f)
        eg = dict(env_g)
        ef[f.var] = depth
        eg[g.var] = depth
        return _unify_f(f.body, g.body, m, ef, eg)
    return _FAIL


def _walk(t: Term, m) -> Term:
    while isinstance(t, MetaVar) and t.name in m:
        t = m[t.name]
    return t


def _bound_var_in(t: Term, env) -> bool:
    if isinstance(t, Var):
        return t.name in env
    if isinstance(t, Pair):
        return _bound_var_in(t.fst, env) or _bound_var_in(t.snd, env)
    if isinstance(t, App):
        return any(_bound_var_in(a, env) for a in t.args)
    return False


def _occurs(name: str, t: Term, m) -> bool:
    t = _walk(t, m)
    if isinstance(t, MetaVar):
        return t.name == name
    if isinstance(t, Pair):
        return _occurs(name, t.fst, m) or _occurs(name, t.snd, m)
    if isinstance(t, App):
        return any(_occurs(name, a, m) for a in t.args)
    return False


def _unify_t(a, b, m, env_f, env_g):
    a = _walk(a, m)
    b = _walk(b, m)
    if isinstance(a, MetaVar):
        if isinstance(b, MetaVar) and a.name == b.name:
            return None
        if _occurs(a.name, b, m) or _bound_var_in(subst_term(b, m), env_g):
            return _FAIL
        m[a.name] = subst_term(b, m)
        return None
    if isinstance(b, MetaVar):
        return _unify_t(b, a, m, env_g, env_f)
    if isinstance(a, Var) and isinstance(b, Var):
        if a.name in env_f or b.name in env_g:
            return None if env_f.get(a.name) == env_g.get(b.name) else _FAIL
        return None if a.name == b.name else _FAIL
    if type(a) is not type(b):
        return _FAIL
    if isinstance(a, Const):
        return None if a.name == b.name else _FAIL
    if isinstance(a, Pair):
        if _unify_t(a.fst, b.fst, m, env_f, env_g) is _FAIL:
            return _FAIL
        return _unify_t(a.snd, b.snd, m, env_f, env_g)
    if isinstance(a, App):
        if a.fn != b.fn or len(a.args) != len(b.args):
            return _FAIL
        for x, y in zip(a.args, b.args):
            if _unify_t(x, y, m, env_f, env_g) is _FAIL:
                return _FAIL
        return None
    return _FAIL


def match(pattern: Formula, target: Formula, sigma: Substitution = EMPTY_SUBST) -> Optional[Substitution]:
    """One-sided unification: meta-variables open on the pattern side only."""
    if formula_metavars(target):
        # fall back to full unification when the target is itself open
        return unify(pattern, target, sigma)
    return unify(pattern, target, sigma)


# ---------------------------------------------------------------------------
# Lexer / parser

_UNICODE_ALIASES = [
    ("∈", " in "),
    ("⊆", " subset "),
    ("⊇", " supset "),
    ("⊂", " subset "),
    ("⊃", " supset "),
    ("∧", " /\\ "),
    ("∨", " \\/ "),
    ("¬", " not "),
    ("⇒", " -> "),
    ("⇔", " <-> "),
    ("∀", " forall "),
    ("∃", " exists "),
]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<lpar>\()|(?P<rpar>\))|(?P<comma>,)|(?P<dot>\.)"
    r"|(?P<iff><->)|(?P<imp>->)|(?P<and>/\\)|(?P<or>\\/)"
    r"|(?P<meta>\?[A-Za-z_][A-Za-z0-9_'-]*)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_'-]*)"
    r"|(?P<eq>=))"
)


@dataclass
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    # Unicode aliases are purely an input convenience; ∘ is infix composition.
    expanded = text
    for uni, ascii_ in _UNICODE_ALIASES:
        expanded = expanded.replace(uni, ascii_)
    compose = "∘" in expanded
    if compose:
        expanded = expanded.replace("∘", " @compose@ ")
    toks: list[Token] = []
    i = 0
    n = len(expanded)
    while i < n:
        if expanded[i].isspace():
            i += 1
            continue
        if compose and expanded.startswith("@compose@", i):
            toks.append(Token("compose", "@compose@", i))
            i += len("@compose@")
            continue
        m = _TOKEN_RE.match(expanded, i)
        if not m or m.start() != i:
            raise ParseError(f"unexpected character {expanded[i]!r}", i)
        kind = m.lastgroup or ""
        toks.append(Token(kind, m.group(kind), m.start(kind)))
        i = m.end()
    return toks


class ArityTable:
    """Fixed arities of function symbols; predicates are built in."""

    def __init__(self, arities: Mapping[str, int] | None = None):
        self.arities = dict(DEFAULT_ARITIES if arities is None else arities)

    def check(self, fn: str, n: int, pos: int):
        if fn not in self.arities:
            raise ParseError(f"unknown function symbol {fn!r}", pos)
        if self.arities[fn] != n:
            raise ParseError(
                f"arity mismatch: {fn} expects {self.arities[fn]} arguments, got {n}", pos
            )

    def copy_with(self, extra: Mapping[str, int]) -> "ArityTable":
        merged = dict(self.arities)
        merged.update(extra)
        return ArityTable(merged)


DEFAULT_ARITY_TABLE = ArityTable()

_KEYWORDS = {"forall", "exists", "not", "in", "subset", "supset"}


class _FormulaParser:
    def __init__(self, toks: list[Token], arities: ArityTable, end: int):
        self.toks = toks
        self.i = 0
        self.arities = arities
        self.end = end

    def peek(self) -> Optional[Token]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self.end)
        self.i += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(f"expected {kind!r}, got end of input", self.end)
        if tok.kind != kind and tok.text != kind:
            raise ParseError(f"expected {kind!r}, got {tok.text!r}", tok.pos)
        self.i += 1
        return tok

    # formula := iff
    def formula(self, bound: frozenset[str]) -> Formula:
        return self.iff(bound)

    def iff(self, bound) -> Formula:
        left = self.imp(bound)
        tok = self.peek()
        if tok and tok.kind == "iff":
            self.next()
            return Iff(left, self.iff(bound))
        return left

    def imp(self, bound) -> Formula:
        left = self.disj(bound)
        tok = self.peek()
        if tok and tok.kind == "imp":
            self.next()
            return Implies(left, self.imp(bound))
        return left

    def disj(self, bound) -> Formula:
        left = self.conj(bound)
        while True:
            tok = self.peek()
            if tok and tok.kind == "or":
                self.next()
                left = Or(left, self.conj(bound))
            else:
                return left

    def conj(self, bound) -> Formula:
        left = self.neg(bound)
        while True:
            tok = self.peek()
            if tok and tok.kind == "and":
                self.next()
                left = And(left, self.neg(bound))
            else:
                return left

    def neg(self, bound) -> Formula:
        tok = self.peek()
        if tok and tok.kind == "ident" and tok.text == "not":
            self.next()
            return Not(self.neg(bound))
        if tok and tok.kind == "ident" and tok.text in ("forall", "exists"):
            return self.quant(bound)
        return self.atom(bound)

    def quant(self, bound) -> Formula:
        tok = self.next()
        ctor = Forall if tok.text == "forall" else Exists
        names: list[str] = []
        while True:
            t = self.peek()
            if t and t.kind == "ident" and t.text not in _KEYWORDS:
                names.append(t.text)
                self.next()
            else:
                break
        if not names:
            raise ParseError("quantifier needs at least one variable", tok.pos)
        self.expect("dot")
        body = self.formula(bound | frozenset(names))
        for name in reversed(names):
            body = ctor(name, body)
        return body

    def atom(self, bound) -> Formula:
        tok = self.peek()
        if tok is None:
            raise ParseError("expected formula", self.end)
        if tok.kind == "lpar":
            save = self.i
            try:
                return self.atom_from_term(bound)
            except ParseError:
                self.i = save
            self.next()
            f = self.formula(bound)
            self.expect("rpar")
            return f
        return self.atom_from_term(bound)

    def atom_from_term(self, bound) -> Formula:
        start = self.peek()
        t1 = self.term(bound)
        tok = self.peek()
        if tok and (tok.kind == "eq" or (tok.kind == "ident" and tok.text in PREDICATES)):
            pred = "=" if tok.kind == "eq" else tok.text
            self.next()
            t2 = self.term(bound)
            return Atom(pred, (t1, t2))
        if isinstance(t1, (Const, Var)):
            # bare identifier: propositional atom
            return Atom(t1.name, ())
        pos = tok.pos if tok else self.end
        raise ParseError("expected predicate after term", pos if start is None else pos)

    # term := factor ('∘' factor)*   (left-assoc composition sugar)
    def term(self, bound) -> Term:
        left = self.factor(bound)
        while True:
            tok = self.peek()
            if tok and tok.kind == "compose":
                self.next()
                right = self.factor(bound)
                left = App("comp", (left, right))
            else:
                return left

    def factor(self, bound) -> Term:
        tok = self.peek()
        if tok is None:
            raise ParseError("expected term", self.end)
        if tok.kind == "meta":
            self.next()
            return MetaVar(tok.text[1:])
        if tok.kind == "lpar":
            self.next()
            t1 = self.term(bound)
            nxt = self.peek()
            if nxt and nxt.kind == "comma":
                self.next()
                t2 = self.term(bound)
                self.expect("rpar")
                return Pair(t1, t2)
            self.expect("rpar")
            return t1
        if tok.kind == "ident":
            if tok.text in _KEYWORDS:
                raise ParseError(f"keyword {tok.text!r} cannot start a term", tok.pos)
            self.next()
            nxt = self.peek()
            if nxt and nxt.kind == "lpar":
                self.next()
                args = [self.term(bound)]
                while True:
                    t = self.peek()
                    if t and t.kind == "comma":
                        self.next()
                        args.append(self.term(bound))
                    else:
                        break
                self.expect("rpar")
                self.arities.check(tok.text, len(args), tok.pos)
                return App(tok.text, tuple(args))
            if tok.text in bound:
                return Var(tok.text)
            return Const(tok.text)
        raise ParseError(f"expected term, got {tok.text!r}", tok.pos)


def parse_formula(text: str, arities: ArityTable | None = None) -> Formula:
    """Parse the ASCII formula syntax (Unicode aliases accepted)."""
    toks = tokenize(text)
    p = _FormulaParser(toks, arities or DEFAULT_ARITY_TABLE, len(text))
    f = p.formula(frozenset())
    tok = p.peek()
    if tok is not None:
        raise ParseError(f"trailing input {tok.text!r}", tok.pos)
    return f


def parse_term(text: str, arities: ArityTable | None = None) -> Term:
    toks = tokenize(text)
    p = _FormulaParser(toks, arities or DEFAULT_ARITY_TABLE, len(text))
    t = p.term(frozenset())
    tok = p.peek()
    if tok is not None:
        raise ParseError(f"trailing input {tok.text!r}", tok.pos)
    return t


# ---------------------------------------------------------------------------
# Rendering

# Node precedences; binary operands carry the minimum precedence they may
# hold without parentheses (right-assoc: ->, <->; left-assoc: /\, \/).
_PREC_QUANT, _PREC_IFF, _PREC_IMP, _PREC_OR, _PREC_AND, _PREC_NOT, _PREC_ATOM = 0, 1, 2, 3, 4, 5, 10


def render_term(t: Term) -> str:
    if isinstance(t, (Var, Const)):
        return t.name
    if isinstance(t, MetaVar):
        return f"?{t.name}"
    if isinstance(t, Pair):
        return f"({render_term(t.fst)},{render_term(t.snd)})"
    if isinstance(t, App):
        return f"{t.fn}({','.join(render_term(a) for a in t.args)})"
    raise LogicError(f"unknown term {t!r}")


_RENDER_CACHE: dict[int, tuple[Formula, str]] = {}


def render_formula(f: Formula) -> str:
    hit = _RENDER_CACHE.get(id(f))
    if hit is not None and hit[0] is f:
        return hit[1]
    text = _render(f, 0)
    if len(_RENDER_CACHE) > 200000:
        _RENDER_CACHE.clear()
    _RENDER_CACHE[id(f)] = (f, text)
    return text


def _prec_of(f: Formula) -> int:
    if isinstance(f, Atom):
        return _PREC_ATOM
    if isinstance(f, Not):
        return _PREC_NOT
    if isinstance(f, And):
        return _PREC_AND
    if isinstance(f, Or):
        return _PREC_OR
    if isinstance(f, Implies):
        return _PREC_IMP
    if isinstance(f, Iff):
        return _PREC_IFF
    return _PREC_QUANT


def _render(f: Formula, min_prec: int) -> str:
    if isinstance(f, Atom):
        if not f.args:
            return f.pred
        if len(f.args) == 2:
            a, b = f.args
            return f"{render_term(a)} {f.pred} {render_term(b)}"
        # non-binary atoms only arise internally
        return f"{f.pred}({','.join(render_term(t) for t in f.args)})"
    if isinstance(f, Not):
        s = f"not {_render(f.body, _PREC_NOT)}"
    elif isinstance(f, And):
        s = f"{_render(f.left, _PREC_AND)} /\\ {_render(f.right, _PREC_AND + 1)}"
    elif isinstance(f, Or):
        s = f"{_render(f.left, _PREC_OR)} \\/ {_render(f.right, _PREC_OR + 1)}"
    elif isinstance(f, Implies):
        s = f"{_render(f.left, _PREC_IMP + 1)} -> {_render(f.right, _PREC_IMP)}"
    elif isinstance(f, Iff):
        s = f"{_render(f.left, _PREC_IFF + 1)} <-> {_render(f.right, _PREC_IFF)}"
    elif isinstance(f, QUANT):
        kw = "forall" if isinstance(f, Forall) else "exists"
        names = [f.var]
        body = f.body
        while isinstance(body, type(f)):
            names.append(body.var)
            body = body.body
        s = f"{kw} {' '.join(names)}. {_render(body, 0)}"
    else:
        raise LogicError(f"unknown formula {f!r}")
    return f"({s})" if _prec_of(f) < min_prec else s


# ---------------------------------------------------------------------------
# Sequents


@dataclass(frozen=True)
class Sequent:
    """One proof task: hypotheses |- goal.

    ``views`` keeps displayable pre-decomposition forms of the goal (used
    for subgoal matching and for hint texts).
    """

    hyps: tuple[Formula, ...]
    goal: Formula
    label: str = ""
    views: tuple[Formula, ...] = ()

    def with_hyps(self, extra: tuple[Formula, ...]) -> "Sequent":
        new = list(self.hyps)
        for h in extra:
            if not any(alpha_equal(h, old) for old in new):
                new.append(h)
        return Sequent(tuple(new), self.goal, self.label, self.views)

    def render(self) -> str:
        left = ", ".join(render_formula(h) for h in self.hyps)
        return f"{left} |- {render_formula(self.goal)}" if left else f"|- {render_formula(self.goal)}"


def sequent_alpha_equal(a: Sequent, b: Sequent) -> bool:
    """Equality up to alpha and hypothesis order (labels ignored)."""
    if not alpha_equal(a.goal, b.goal) or len(a.hyps) != len(b.hyps):
        return False
    remaining = list(b.hyps)
    for h in a.hyps:
        for i, other in enumerate(remaining):
            if alpha_equal(h, other):
                remaining.pop(i)
                break
        else:
            return False
    return True


def sequent_pool(s: Sequent, extra: tuple[Formula, ...] = ()) -> set[Term]:
    """Compound terms available for term-directed rule application."""
    pool: set[Term] = set()
    for f in s.hyps + (s.goal,) + s.views + tuple(extra):
        pool |= compound_subterms(f)
    return pool
