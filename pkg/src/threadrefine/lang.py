"""Toy thread language: AST, parser, pretty-printer and well-formedness.

Grammar (``#`` starts a line comment)::

    program := stmt*
    stmt    := 'local' ID (',' ID)* ';'
             | 'lock' '(' ID ')' ';'  |  'unlock' '(' ID ')' ';'
             | ID '=' expr ';'
             | 'if' '(' expr ')' block ['else' block]
             | 'while' '(' expr ')' 'bound' INT block
    block   := '{' stmt* '}'

Identifiers that are not declared ``local`` denote shared memory locations.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

from .errors import DuplicateLocal, ThreadSyntaxError, UnknownIdentifier

KEYWORDS = frozenset({"lock", "unlock", "local", "if", "else", "while", "bound"})

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1


def wrap64(v: int) -> int:
    return ((v - INT64_MIN) & 0xFFFFFFFFFFFFFFFF) + INT64_MIN


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Local:
    name: str


@dataclass(frozen=True)
class Shared:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[Const, Local, Shared, BinOp, Not]

# binding strength, loosest first
PRECEDENCE = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4, "+": 5, "-": 5, "*": 6}


def eval_binop(op: str, a: int, b: int) -> int:
    if op == "+":
        return wrap64(a + b)
    if op == "-":
        return wrap64(a - b)
    if op == "*":
        return wrap64(a * b)
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    if op == "&&":
        return int(bool(a) and bool(b))
    if op == "||":
        return int(bool(a) or bool(b))
    raise ValueError(f"unknown operator {op!r}")


def shared_reads(e: Expr) -> Iterator[str]:
    """Shared locations read by ``e``, in evaluation order (with repeats)."""
    if isinstance(e, Shared):
        yield e.name
    elif isinstance(e, BinOp):
        yield from shared_reads(e.left)
        yield from shared_reads(e.right)
    elif isinstance(e, Not):
        yield from shared_reads(e.operand)


# -- statements --------------------------------------------------------------

Pos = Optional[tuple]


@dataclass(frozen=True)
class Lock:
    lock: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unlock:
    lock: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class AssignShared:
    loc: str
    expr: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class AssignLocal:
    name: str
    expr: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple
    orelse: tuple = ()
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class While:
    cond: Expr
    bound: int
    body: tuple
    pos: Pos = field(default=None, compare=False, repr=False)


Stmt = Union[Lock, Unlock, AssignShared, AssignLocal, If, While]


@dataclass(frozen=True)
class ThreadProgram:
    name: str = "T"
    decls: tuple = ()
    body: tuple = ()

    def locations(self) -> tuple:
        """Shared locations mentioned anywhere in the thread, sorted."""
        found = set()
        for s in walk(self.body):
            if isinstance(s, AssignShared):
                found.add(s.loc)
            for e in _stmt_exprs(s):
                found.update(shared_reads(e))
        return tuple(sorted(found))

    def locks(self) -> tuple:
        return tuple(sorted({s.lock for s in walk(self.body) if isinstance(s, (Lock, Unlock))}))

    def __str__(self):
        return pretty(self)


def walk(body: Iterable[Stmt]) -> Iterator[Stmt]:
    for s in body:
        yield s
        if isinstance(s, If):
            yield from walk(s.then)
            yield from walk(s.orelse)
        elif isinstance(s, While):
            yield from walk(s.body)


def _stmt_exprs(s: Stmt):
    if isinstance(s, (AssignShared, AssignLocal)):
        return (s.expr,)
    if isinstance(s, (If, While)):
        return (s.cond,)
    return ()


# -- lexer -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|\||&&|==|!=|<=|[<+\-*!=;,(){}])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list:
    toks = []
    line, line_start, i = 1, 0, 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if m is None:
            raise ThreadSyntaxError(f"unexpected character {src[i]!r}", line, i - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            if kind == "id" and m.group() in KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        i = m.end()
    toks.append(_Tok("eof", "", line, i - line_start + 1))
    return toks


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, src, shared):
        self.toks = _tokenize(src)
        self.i = 0
        self.locals = []
        self.shared = shared
        self.lock_names = set()
        self.var_names = set()

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, expected):
        t = self.tok
        got = t.text or "end of input"
        raise ThreadSyntaxError(f"expected {expected}, got {got!r}", t.line, t.col, expected)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("kw", "op"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            self.error(repr(text))

    def ident(self):
        t = self.tok
        if t.kind != "id":
            self.error("identifier")
        self.i += 1
        return t

    def program(self, name):
        body = self.block_body(top=True)
        if self.tok.kind != "eof":
            self.error("statement")
        clash = self.lock_names & self.var_names
        if clash:
            n = sorted(clash)[0]
            raise UnknownIdentifier(f"{n!r} used both as a lock and as a variable")
        return ThreadProgram(name, tuple(self.locals), tuple(body))

    def block_body(self, top=False):
        out = []
        while self.tok.kind != "eof" and self.tok.text != "}":
            s = self.statement(top)
            if s is not None:
                out.append(s)
        return out

    def block(self):
        self.expect("{")
        body = self.block_body()
        self.expect("}")
        return tuple(body)

    def statement(self, top):
        t = self.tok
        pos = (t.line, t.col)
        if self.accept("local"):
            if not top:
                raise ThreadSyntaxError("local declarations are only allowed at top level", *pos)
            while True:
                n = self.ident()
                if n.text in self.locals:
                    raise DuplicateLocal(f"local {n.text!r} declared twice", n.line, n.col)
                if n.text in self.var_names:
                    raise DuplicateLocal(f"local {n.text!r} declared after use", n.line, n.col)
                self.locals.append(n.text)
                if not self.accept(","):
                    break
            self.expect(";")
            return None
        if t.text in ("lock", "unlock") and t.kind == "kw":
            self.i += 1
            self.expect("(")
            n = self.ident().text
            self.expect(")")
            self.expect(";")
            self.lock_names.add(n)
            return Lock(n, pos) if t.text == "lock" else Unlock(n, pos)
        if self.accept("if"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            orelse = self.block() if self.accept("else") else ()
            return If(cond, then, orelse, pos)
        if self.accept("while"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect("bound")
            if self.tok.kind != "int" or int(self.tok.text) < 0:
                self.error("non-negative loop bound")
            bound = int(self.tok.text)
            self.i += 1
            return While(cond, bound, self.block(), pos)
        if t.kind == "id":
            target = self.ident()
            self.expect("=")
            e = self.expr()
            self.expect(";")
            if target.text in self.locals:
                return AssignLocal(target.text, e, pos)
            self.check_shared(target)
            return AssignShared(target.text, e, pos)
        self.error("statement")

    def check_shared(self, t):
        self.var_names.add(t.text)
        if self.shared is not None and t.text not in self.shared:
            raise UnknownIdentifier(f"unknown identifier {t.text!r}", t.line, t.col)

    def expr(self, min_prec=1):
        left = self.unary()
        while True:
            op = self.tok.text
            prec = PRECEDENCE.get(op) if self.tok.kind == "op" else None
            if prec is None or prec < min_prec:
                return left
            self.i += 1
            right = self.expr(prec + 1)
            left = BinOp(op, left, right)

    def unary(self):
        if self.accept("!"):
            return Not(self.unary())
        t = self.tok
        neg = t.text == "-" and t.kind == "op" and self.toks[self.i + 1].kind == "int"
        if neg:
            self.i += 1
            t = self.tok
        if t.kind == "int":
            self.i += 1
            v = -int(t.text) if neg else int(t.text)
            if not INT64_MIN <= v <= INT64_MAX:
                raise ThreadSyntaxError("integer literal out of 64-bit range", t.line, t.col)
            return Const(v)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id":
            self.i += 1
            if t.text in self.locals:
                return Local(t.text)
            self.check_shared(t)
            return Shared(t.text)
        self.error("expression")


def parse_thread(source: str, name: str = "T", shared=None) -> ThreadProgram:
    """Parse thread source text.

    ``shared`` optionally restricts which identifiers may denote shared
    locations; anything else that is not a declared local raises
    :class:`UnknownIdentifier`.
    """
    return _Parser(source, None if shared is None else set(shared)).program(name)


def parse_file(path) -> ThreadProgram:
    import os

    with open(path, encoding="utf-8") as f:
        src = f.read()
    return parse_thread(src, name=os.path.splitext(os.path.basename(path))[0])


# -- pretty printer ----------------------------------------------------------


def pretty_expr(e: Expr, ctx: int = 0) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, (Local, Shared)):
        return e.name
    if isinstance(e, Not):
        inner = pretty_expr(e.operand, 7)
        return "!" + inner
    p = PRECEDENCE[e.op]
    s = f"{pretty_expr(e.left, p)} {e.op} {pretty_expr(e.right, p + 1)}"
    return f"({s})" if p < ctx else s


def _pretty_body(body, indent, out):
    pad = "    " * indent
    for s in body:
        if isinstance(s, Lock):
            out.append(f"{pad}lock({s.lock});")
        elif isinstance(s, Unlock):
            out.append(f"{pad}unlock({s.lock});")
        elif isinstance(s, AssignShared):
            out.append(f"{pad}{s.loc} = {pretty_expr(s.expr)};")
        elif isinstance(s, AssignLocal):
            out.append(f"{pad}{s.name} = {pretty_expr(s.expr)};")
        elif isinstance(s, If):
            out.append(f"{pad}if ({pretty_expr(s.cond)}) {{")
            _pretty_body(s.then, indent + 1, out)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                _pretty_body(s.orelse, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while ({pretty_expr(s.cond)}) bound {s.bound} {{")
            _pretty_body(s.body, indent + 1, out)
            out.append(f"{pad}}}")


def pretty(t: ThreadProgram) -> str:
    out = []
    if t.decls:
        out.append("local " + ", ".join(t.decls) + ";")
    _pretty_body(t.body, 0, out)
    return "\n".join(out) + ("\n" if out else "")


# -- well-formedness ---------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    message: str
    pos: Pos = None

    def __str__(self):
        if self.pos:
            return f"{self.pos[0]}:{self.pos[1]}: {self.message}"
        return self.message


@dataclass(frozen=True)
class WellFormedness:
    mode: str
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


FIRST_NOT_LOCK = "first operation not lock"


class _WFChecker:
    # Abstract path states: non-nested -> (phase, held); nested -> frozenset of held locks.
    def __init__(self, mode):
        self.mode = mode
        self.violations = []

    def flag(self, message, pos):
        v = Violation(message, pos)
        if v not in self.violations:
            self.violations.append(v)

    def mem(self, states, pos):
        if self.mode == "nested":
            return states
        out = set()
        for phase, held in states:
            if phase == "init":
                self.flag(FIRST_NOT_LOCK, pos)
                phase = "out"
            out.add((phase, held))
        return out

    def sync(self, states, s):
        out = set()
        for st in states:
            if self.mode == "nested":
                if isinstance(s, Lock):
                    if s.lock in st:
                        self.flag(f"lock {s.lock!r} re-acquired while held", s.pos)
                    out.add(st | {s.lock})
                else:
                    if s.lock not in st:
                        self.flag(f"unlock of {s.lock!r} which is not held", s.pos)
                    out.add(st - {s.lock})
                continue
            phase, held = st
            if isinstance(s, Lock):
                if phase == "in":
                    self.flag(f"lock {s.lock!r} while holding {held!r} (nested locks)", s.pos)
                out.add(("in", s.lock))
            else:
                if phase != "in":
                    self.flag(f"unlock {s.lock!r} without preceding lock", s.pos)
                elif held != s.lock:
                    self.flag(f"unlock {s.lock!r} does not match lock {held!r}", s.pos)
                out.add(("out", None))
        return out

    def body(self, body, states):
        for s in body:
            states = self.stmt(s, states)
        return states

    def stmt(self, s, states):
        if isinstance(s, (Lock, Unlock)):
            return self.sync(states, s)
        if isinstance(s, (AssignShared, AssignLocal)):
            if isinstance(s, AssignShared) or any(True for _ in shared_reads(s.expr)):
                states = self.mem(states, s.pos)
            return states
        if isinstance(s, If):
            if any(True for _ in shared_reads(s.cond)):
                states = self.mem(states, s.pos)
            return self.body(s.then, states) | self.body(s.orelse, states)
        if isinstance(s, While):
            # cond is evaluated only while fewer than `bound` iterations ran
            reads = any(True for _ in shared_reads(s.cond))
            result, seen = set(), set()
            cur = set(states)
            for _ in range(s.bound):
                if cur <= seen:
                    break
                seen |= cur
                if reads:
                    cur = self.mem(cur, s.pos)
                result |= cur
                cur = self.body(s.body, cur)
            return result | cur
        raise TypeError(s)

    def finish(self, states, t):
        for st in states:
            if self.mode == "nested":
                if st:
                    self.flag("locks still held at end of thread: " + ", ".join(sorted(st)), None)
            elif st[0] == "in":
                self.flag(f"last synchronization is lock({st[1]}), not an unlock", None)


def check_well_formed(t: ThreadProgram, mode: str = "non-nested") -> WellFormedness:
    if mode not in ("non-nested", "nested"):
        raise ValueError(f"unknown mode {mode!r}")
    c = _WFChecker(mode)
    init = {frozenset()} if mode == "nested" else {("init", None)}
    c.finish(c.body(t.body, init), t)
    return WellFormedness(mode, tuple(c.violations))
