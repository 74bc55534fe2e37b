"""Depth-first first-solution resolution over a dynamic clause database.

The solver mutates variable cells and undoes bindings through a trail, so
backtracking is cheap.  Cut is clause-local and implemented with a barrier
id per predicate activation.  Unknown predicates fail quietly: handler
programs routinely query predicates before the first matching assert.
"""

from __future__ import annotations

import itertools
import operator as _op
from typing import Callable, Iterator, Optional

from .reader import Clause, Program
from .terms import (
    Atom, INT64_MAX, INT64_MIN, Int, Struct, Term, Var,
    copy_term, deref, indicator, mklist, struct_eq, term_vars,
)


class EngineError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__("%s: %s" % (kind, message))
        self.kind = kind
        self.message = message


class _Cut(Exception):
    __slots__ = ("depth",)

    def __init__(self, depth: int):
        self.depth = depth


class SolveLimits:
    __slots__ = ("max_steps", "occurs_check")

    def __init__(self, max_steps: int = 10_000_000, occurs_check: bool = False):
        self.max_steps = max_steps
        self.occurs_check = occurs_check


class Database:
    """Ordered clauses per predicate indicator plus declaration flags."""

    def __init__(self):
        self.preds: dict = {}        # (name, arity) -> list[Clause]
        self.dynamic: set = set()
        self.events: set = set()
        self.alarms: set = set()

    def load_program(self, prog: Program) -> None:
        for d in prog.directives:
            target = {"event": self.events, "alarm": self.alarms,
                      "dynamic": self.dynamic}[d.kind]
            for ind in d.indicators:
                target.add(ind)
                if d.kind == "dynamic":
                    self.preds.setdefault(ind, [])
        for c in prog.clauses:
            self.add_clause(c)

    def add_clause(self, clause: Clause) -> None:
        """Consult-time load: static unless the indicator is declared dynamic."""
        ind = indicator(clause.head)
        if ind is None:
            raise EngineError("type", "clause head is not callable")
        self.preds.setdefault(ind, []).append(clause)

    def clauses_for(self, ind) -> Optional[list]:
        return self.preds.get(ind)

    def is_dynamic(self, ind) -> bool:
        return ind in self.dynamic

    def assert_clause(self, clause: Clause) -> None:
        """Runtime assertz; a first assert on an unknown indicator makes it dynamic."""
        ind = indicator(clause.head)
        if ind is None:
            raise EngineError("type", "assert of a non-callable term")
        bucket = self.preds.get(ind)
        if bucket is None:
            self.dynamic.add(ind)
            self.preds[ind] = [clause]
            return
        if ind not in self.dynamic:
            raise EngineError("permission", "assert on static predicate %s/%d" % ind)
        bucket.append(clause)

    def facts(self, name: str, arity: int) -> list:
        """Ground snapshot of the facts stored under name/arity."""
        out = []
        for c in self.preds.get((name, arity), []):
            body = deref(c.body)
            if isinstance(body, Atom) and body.name == "true":
                out.append(copy_term(c.head))
        return out


class BuiltinHost:
    """Extension point for environment predicates (networking, node identity)."""

    def lookup(self, name: str, arity: int) -> Optional[Callable]:
        return None


def _compile_skeleton(t: Term, slots: dict, names: list):
    """Code tree: (0, const) | (1, slot) | (2, name, arg codes)."""
    t = deref(t)
    tt = type(t)
    if tt is Var:
        idx = slots.get(id(t))
        if idx is None:
            idx = len(names)
            slots[id(t)] = idx
            names.append(t.name)
        return (1, idx)
    if tt is Struct:
        codes = tuple(_compile_skeleton(a, slots, names) for a in t.args)
        if all(c[0] == 0 for c in codes):
            return (0, t)
        return (2, t.name, codes)
    return (0, t)


def _build_skeleton(code, fresh):
    tag = code[0]
    if tag == 0:
        return code[1]
    if tag == 1:
        return fresh[code[1]]
    return Struct(code[1], tuple(_build_skeleton(c, fresh) for c in code[2]))


def _rename(clause: Clause):
    """Fresh-variable instance of a stored clause.

    Compiled once per clause: ground subterms are shared, only the
    variable-carrying spine is rebuilt.
    """
    code = getattr(clause, "code", None)
    if code is None:
        slots: dict = {}
        names: list = []
        hc = _compile_skeleton(clause.head, slots, names)
        bc = _compile_skeleton(clause.body, slots, names)
        code = clause.code = (hc, bc, names)
    hc, bc, names = code
    if not names:
        return clause.head, clause.body
    fresh = [Var(n) for n in names]
    return _build_skeleton(hc, fresh), _build_skeleton(bc, fresh)


def _first_arg_key(t: Term):
    """Indexing key for a ground first argument, else None."""
    t = deref(t)
    if isinstance(t, Atom):
        return ("a", t.name)
    if isinstance(t, Int):
        return ("i", t.value)
    if isinstance(t, Struct):
        return ("s", t.name, len(t.args))
    return None


class Solver:
    def __init__(self, db: Database, limits: Optional[SolveLimits] = None,
                 host: Optional[BuiltinHost] = None):
        self.db = db
        self.limits = limits or SolveLimits()
        self.host = host
        self.trail: list = []
        self.steps = 0
        self._barrier = itertools.count(1)

    # --- bindings ---

    def mark(self) -> int:
        return len(self.trail)

    def undo(self, mark: int) -> None:
        trail = self.trail
        while len(trail) > mark:
            trail.pop().ref = None

    def bind(self, var: Var, term: Term) -> None:
        var.ref = term
        self.trail.append(var)

    def _occurs(self, var: Var, term: Term) -> bool:
        stack = [term]
        while stack:
            x = deref(stack.pop())
            if x is var:
                return True
            if isinstance(x, Struct):
                stack.extend(x.args)
        return False

    def unify(self, a: Term, b: Term) -> bool:
        """Trails bindings; on failure the caller must undo to its mark."""
        stack = [(a, b)]
        occurs = self.limits.occurs_check
        while stack:
            x, y = stack.pop()
            x = deref(x)
            y = deref(y)
            if x is y:
                continue
            if isinstance(x, Var):
                if occurs and self._occurs(x, y):
                    return False
                self.bind(x, y)
            elif isinstance(y, Var):
                if occurs and self._occurs(y, x):
                    return False
                self.bind(y, x)
            elif isinstance(x, Atom):
                if not (isinstance(y, Atom) and y.name == x.name):
                    return False
            elif isinstance(x, Int):
                if not (isinstance(y, Int) and y.value == x.value):
                    return False
            elif isinstance(x, Struct):
                if not (isinstance(y, Struct) and y.name == x.name
                        and len(y.args) == len(x.args)):
                    return False
                stack.extend(zip(x.args, y.args))
            else:
                return False
        return True

    # --- resolution ---

    def prove(self, goal: Term, depth: int) -> Iterator[None]:
        self.steps += 1
        if self.steps > self.limits.max_steps:
            raise EngineError("step_limit", "resolution step budget exhausted")
        goal = deref(goal)
        if isinstance(goal, Var):
            raise EngineError("type", "unbound goal")
        if isinstance(goal, Int):
            raise EngineError("type", "integer is not callable")
        if isinstance(goal, Atom):
            key = (goal.name, 0)
            args: tuple = ()
        else:
            key = (goal.name, len(goal.args))
            args = goal.args
        builtin = _BUILTINS.get(key)
        if builtin is not None:
            yield from builtin(self, args, depth)
            return
        if self.host is not None:
            hb = self.host.lookup(*key)
            if hb is not None:
                yield from hb(self, args)
                return
        clauses = self.db.clauses_for(key)
        if clauses is None:
            return
        barrier = next(self._barrier)
        gkey = _first_arg_key(args[0]) if args else None
        for clause in list(clauses):
            if gkey is not None:
                head0 = clause.head
                if isinstance(head0, Struct):
                    ckey = _first_arg_key(head0.args[0])
                    if ckey is not None and ckey != gkey:
                        continue
            m = self.mark()
            head, body = _rename(clause)
            if self.unify(goal, head):
                try:
                    yield from self.prove(body, barrier)
                except _Cut as cut:
                    if cut.depth == barrier:
                        self.undo(m)
                        return
                    raise
            self.undo(m)

    def first(self, goal: Term) -> bool:
        """One committed solution; bindings are kept on success."""
        barrier = next(self._barrier)
        try:
            for _ in self.prove(goal, barrier):
                return True
        except _Cut as cut:
            if cut.depth != barrier:
                raise
        return False

    # --- public entry points ---

    def solve_first(self, goal: Term) -> Optional[dict]:
        qvars = [v for v in term_vars(goal) if v.name != "_"]
        m = self.mark()
        try:
            if self.first(goal):
                return {v.name: copy_term(v) for v in qvars}
            return None
        except RecursionError:
            raise EngineError("step_limit", "resolution depth exhausted") from None
        finally:
            self.undo(m)

    def solve_all(self, goal: Term) -> list:
        qvars = [v for v in term_vars(goal) if v.name != "_"]
        out = []
        m = self.mark()
        barrier = next(self._barrier)
        try:
            for _ in self.prove(goal, barrier):
                out.append({v.name: copy_term(v) for v in qvars})
        except _Cut as cut:
            if cut.depth != barrier:
                raise
        except RecursionError:
            raise EngineError("step_limit", "resolution depth exhausted") from None
        finally:
            self.undo(m)
        return out


def unify_terms(a: Term, b: Term, occurs_check: bool = False) -> Optional[dict]:
    """Pure most-general-unifier check: binds nothing permanently.

    Returns {Var: Term} for the variables of both inputs, or None.
    """
    s = Solver(Database(), SolveLimits(occurs_check=occurs_check))
    m = s.mark()
    if not s.unify(a, b):
        s.undo(m)
        return None
    mapping: dict = {}
    out = {}
    # collect original variables before undoing
    seen = []
    for t in (a, b):
        stack = [t]
        while stack:
            x = stack.pop()
            if isinstance(x, Var):
                if not any(x is v for v in seen):
                    seen.append(x)
            elif isinstance(x, Struct):
                stack.extend(x.args)
    for v in seen:
        if v.ref is not None:
            out[v] = copy_term(v, mapping)
    s.undo(m)
    return out


# --- arithmetic ---


def _check_int(v: int) -> int:
    if v < INT64_MIN or v > INT64_MAX:
        raise EngineError("arith", "integer overflow")
    return v


def arith_eval(t: Term) -> int:
    t = deref(t)
    if isinstance(t, Int):
        return t.value
    if isinstance(t, Var):
        raise EngineError("type", "unbound variable in arithmetic")
    if isinstance(t, Struct):
        if len(t.args) == 1 and t.name == "-":
            return _check_int(-arith_eval(t.args[0]))
        if len(t.args) == 2:
            op = t.name
            x = arith_eval(t.args[0])
            y = arith_eval(t.args[1])
            if op == "+":
                return _check_int(x + y)
            if op == "-":
                return _check_int(x - y)
            if op == "*":
                return _check_int(x * y)
            if op == "//":
                if y == 0:
                    raise EngineError("arith", "division by zero")
                q = abs(x) // abs(y)
                return _check_int(-q if (x < 0) != (y < 0) else q)
            if op == "mod":
                if y == 0:
                    raise EngineError("arith", "division by zero")
                return _check_int(x % y)
    raise EngineError("type", "not an arithmetic expression")


# --- builtins ---


def _bi_true(s, args, depth):
    yield


def _bi_fail(s, args, depth):
    return
    yield


def _bi_cut(s, args, depth):
    yield
    raise _Cut(depth)


def _bi_unify(s, args, depth):
    m = s.mark()
    if s.unify(args[0], args[1]):
        yield
    s.undo(m)


def _bi_struct_eq(s, args, depth):
    if struct_eq(args[0], args[1]):
        yield


def _bi_not_unifiable(s, args, depth):
    m = s.mark()
    ok = s.unify(args[0], args[1])
    s.undo(m)
    if not ok:
        yield


def _bi_negation(s, args, depth):
    m = s.mark()
    found = s.first(args[0])
    s.undo(m)
    if not found:
        yield


def _bi_and(s, args, depth):
    for _ in s.prove(args[0], depth):
        yield from s.prove(args[1], depth)


def _bi_or(s, args, depth):
    left = deref(args[0])
    if isinstance(left, Struct) and left.name == "->" and len(left.args) == 2:
        m = s.mark()
        if s.first(left.args[0]):
            yield from s.prove(left.args[1], depth)
            s.undo(m)
        else:
            s.undo(m)
            yield from s.prove(args[1], depth)
        return
    yield from s.prove(args[0], depth)
    yield from s.prove(args[1], depth)


def _bi_if_then(s, args, depth):
    m = s.mark()
    if s.first(args[0]):
        yield from s.prove(args[1], depth)
    s.undo(m)


def _bi_is(s, args, depth):
    v = Int(arith_eval(args[1]))
    m = s.mark()
    if s.unify(args[0], v):
        yield
    s.undo(m)


def _cmp(op):
    def bi(s, args, depth):
        x = arith_eval(args[0])
        y = arith_eval(args[1])
        if op(x, y):
            yield
    return bi


def _bi_findall(s, args, depth):
    template, goal, out = args
    results = []
    m = s.mark()
    barrier = next(s._barrier)
    try:
        for _ in s.prove(goal, barrier):
            results.append(copy_term(template))
    except _Cut as cut:
        if cut.depth != barrier:
            raise
    s.undo(m)
    m = s.mark()
    if s.unify(out, mklist(results)):
        yield
    s.undo(m)


def _bi_count(s, args, depth):
    goal, out = args
    n = 0
    m = s.mark()
    barrier = next(s._barrier)
    try:
        for _ in s.prove(goal, barrier):
            n += 1
    except _Cut as cut:
        if cut.depth != barrier:
            raise
    s.undo(m)
    m = s.mark()
    if s.unify(out, Int(n)):
        yield
    s.undo(m)


def _bi_member(s, args, depth):
    item = args[0]
    t = deref(args[1])
    while isinstance(t, Struct) and t.name == "." and len(t.args) == 2:
        m = s.mark()
        if s.unify(item, t.args[0]):
            yield
        s.undo(m)
        t = deref(t.args[1])


def _split_clause(t: Term) -> Clause:
    t = deref(t)
    if isinstance(t, Struct) and t.name == ":-" and len(t.args) == 2:
        head = deref(t.args[0])
        if not isinstance(head, (Atom, Struct)):
            raise EngineError("type", "clause head is not callable")
        return Clause(head, t.args[1])
    if not isinstance(t, (Atom, Struct)):
        raise EngineError("type", "clause is not callable")
    return Clause(t, Atom("true"))


def _bi_assert(s, args, depth):
    template = _split_clause(args[0])
    snapshot = Clause(copy_term(template.head), copy_term(template.body))
    s.db.assert_clause(snapshot)
    yield


def _bi_retract(s, args, depth):
    template = _split_clause(args[0])
    ind = indicator(template.head)
    bucket = s.db.clauses_for(ind)
    if bucket is None:
        return
    if not s.db.is_dynamic(ind):
        raise EngineError("permission", "retract on static predicate %s/%d" % ind)
    for clause in list(bucket):
        if not any(c is clause for c in bucket):
            continue
        m = s.mark()
        head, body = _rename(clause)
        if s.unify(template.head, head) and s.unify(template.body, body):
            bucket.remove(clause)
            yield
        s.undo(m)


_BUILTINS = {
    ("true", 0): _bi_true,
    ("fail", 0): _bi_fail,
    ("false", 0): _bi_fail,
    ("!", 0): _bi_cut,
    ("=", 2): _bi_unify,
    ("==", 2): _bi_struct_eq,
    ("\\=", 2): _bi_not_unifiable,
    ("\\+", 1): _bi_negation,
    (",", 2): _bi_and,
    (";", 2): _bi_or,
    ("->", 2): _bi_if_then,
    ("is", 2): _bi_is,
    ("=:=", 2): _cmp(_op.eq),
    ("<", 2): _cmp(_op.lt),
    (">", 2): _cmp(_op.gt),
    ("=<", 2): _cmp(_op.le),
    (">=", 2): _cmp(_op.ge),
    ("findall", 3): _bi_findall,
    ("count", 2): _bi_count,
    ("member", 2): _bi_member,
    ("assert", 1): _bi_assert,
    ("retract", 1): _bi_retract,
}
