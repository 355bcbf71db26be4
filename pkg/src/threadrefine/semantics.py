"""Interleaving semantics of parallel thread compositions.

Threads are compiled to a small instruction list.  Local-only instructions
(``set``, ``jmp``, ``jmpf``, ``jmpt``) are silent: a thread's program counter
always rests on a shared access, a lock operation, or the end of the code, so
every transition performs exactly one shared access or one lock operation.
"""
from __future__ import annotations

import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

from . import lang
from .errors import BudgetExceeded, PreconditionViolated

DEFAULT_MAX_STEPS = 10_000


class State(Mapping):
    """Immutable total map from a fixed, sorted location set to integers."""

    __slots__ = ("_locs", "_vals", "_index", "_hash")

    def __init__(self, values=None, locations=None):
        values = dict(values or {})
        if locations is None:
            locations = sorted(values)
        locs = tuple(locations)
        extra = set(values) - set(locs)
        if extra:
            raise KeyError(f"locations outside M: {sorted(extra)}")
        self._locs = locs
        self._vals = tuple(int(values.get(x, 0)) for x in locs)
        self._index = None
        self._hash = None

    @classmethod
    def from_tuple(cls, locations, values):
        s = cls.__new__(cls)
        s._locs = tuple(locations)
        s._vals = tuple(values)
        s._index = None
        s._hash = None
        return s

    @property
    def locations(self):
        return self._locs

    def as_tuple(self):
        return self._vals

    def __getitem__(self, x):
        if self._index is None:
            self._index = {n: i for i, n in enumerate(self._locs)}
        try:
            return self._vals[self._index[x]]
        except KeyError:
            raise KeyError(f"location {x!r} not in M") from None

    def __iter__(self):
        return iter(self._locs)

    def __len__(self):
        return len(self._locs)

    def __eq__(self, other):
        if isinstance(other, State):
            return self._locs == other._locs and self._vals == other._vals
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._locs, self._vals))
        return self._hash

    def replace(self, **changes):
        d = dict(self)
        for k, v in changes.items():
            if k not in d:
                raise KeyError(f"location {k!r} not in M")
            d[k] = v
        return State(d, self._locs)

    def __repr__(self):
        inner = ", ".join(f"{x}: {v}" for x, v in zip(self._locs, self._vals))
        return "{" + inner + "}"


def all_states(locations, domain):
    locations = tuple(locations)
    for vals in itertools.product(tuple(domain), repeat=len(locations)):
        yield State.from_tuple(locations, vals)


# -- compilation -------------------------------------------------------------

ACTIONS = ("read", "write", "lock", "unlock")


class _Label:
    __slots__ = ("at",)

    def __init__(self):
        self.at = None


def _pure(e, slots):
    """Compile a shared-read-free expression to a closure over the locals list."""
    if isinstance(e, lang.Const):
        v = e.value
        return lambda env: v
    if isinstance(e, lang.Local):
        i = slots[e.name]
        return lambda env: env[i]
    if isinstance(e, lang.Not):
        f = _pure(e.operand, slots)
        return lambda env: int(not f(env))
    if isinstance(e, lang.BinOp):
        fl, fr, op = _pure(e.left, slots), _pure(e.right, slots), e.op
        if op == "+":
            return lambda env: lang.wrap64(fl(env) + fr(env))
        if op == "-":
            return lambda env: lang.wrap64(fl(env) - fr(env))
        if op == "*":
            return lambda env: lang.wrap64(fl(env) * fr(env))
        if op == "==":
            return lambda env: int(fl(env) == fr(env))
        if op == "!=":
            return lambda env: int(fl(env) != fr(env))
        if op == "<":
            return lambda env: int(fl(env) < fr(env))
        if op == "<=":
            return lambda env: int(fl(env) <= fr(env))
        if op == "&&":
            return lambda env: int(bool(fl(env)) and bool(fr(env)))
        if op == "||":
            return lambda env: int(bool(fl(env)) or bool(fr(env)))
    raise TypeError(f"not a pure expression: {e!r}")


class _Compiler:
    def __init__(self, t: lang.ThreadProgram, loc_index):
        self.slots = {n: i for i, n in enumerate(t.decls)}
        self.slot_names = list(t.decls)
        self.loc_index = loc_index
        self.code = []

    def temp(self):
        name = f"${len(self.slot_names)}"
        self.slots[name] = len(self.slot_names)
        self.slot_names.append(name)
        return name

    def emit(self, *ins):
        self.code.append(list(ins))

    def mark(self, label):
        label.at = len(self.code)

    def expr(self, e):
        """Emit reads for ``e`` and return an equivalent pure expression."""
        if isinstance(e, lang.Shared):
            tmp = self.temp()
            self.emit("read", self.loc_index[e.name], tmp, e.name)
            return lang.Local(tmp)
        if isinstance(e, (lang.Const, lang.Local)):
            return e
        if isinstance(e, lang.Not):
            return lang.Not(self.expr(e.operand))
        if isinstance(e, lang.BinOp):
            left = self.expr(e.left)
            if e.op in ("&&", "||") and any(True for _ in lang.shared_reads(e.right)):
                # short circuit: the right operand's reads happen only when needed
                tmp = self.temp()
                self.emit("set", self.slots[tmp], lang.Not(lang.Not(left)))
                end = _Label()
                self.emit("jmpf" if e.op == "&&" else "jmpt", lang.Local(tmp), end)
                right = self.expr(e.right)
                self.emit("set", self.slots[tmp], lang.Not(lang.Not(right)))
                self.mark(end)
                return lang.Local(tmp)
            return lang.BinOp(e.op, left, self.expr(e.right))
        raise TypeError(e)

    def body(self, body):
        for s in body:
            self.stmt(s)

    def stmt(self, s):
        if isinstance(s, lang.Lock):
            self.emit("lock", s.lock)
        elif isinstance(s, lang.Unlock):
            self.emit("unlock", s.lock)
        elif isinstance(s, lang.AssignShared):
            self.emit("write", self.loc_index[s.loc], self.expr(s.expr), s.loc)
        elif isinstance(s, lang.AssignLocal):
            self.emit("set", self.slots[s.name], self.expr(s.expr))
        elif isinstance(s, lang.If):
            orelse, end = _Label(), _Label()
            self.emit("jmpf", self.expr(s.cond), orelse)
            self.body(s.then)
            self.emit("jmp", end)
            self.mark(orelse)
            self.body(s.orelse)
            self.mark(end)
        elif isinstance(s, lang.While):
            counter = self.temp()
            ci = self.slots[counter]
            self.emit("set", ci, lang.Const(0))
            head, end = _Label(), _Label()
            self.mark(head)
            self.emit("jmpf", lang.BinOp("<", lang.Local(counter), lang.Const(s.bound)), end)
            self.emit("jmpf", self.expr(s.cond), end)
            self.body(s.body)
            self.emit("set", ci, lang.BinOp("+", lang.Local(counter), lang.Const(1)))
            self.emit("jmp", head)
            self.mark(end)
        else:
            raise TypeError(s)

    def finish(self):
        out = []
        for ins in self.code:
            op = ins[0]
            if op == "read":
                out.append(("read", ins[1], self.slots[ins[2]], ins[3]))
            elif op == "write":
                out.append(("write", ins[1], _pure(ins[2], self.slots), ins[3]))
            elif op == "set":
                out.append(("set", ins[1], _pure(ins[2], self.slots)))
            elif op in ("jmpf", "jmpt"):
                out.append((op, _pure(ins[1], self.slots), ins[2].at))
            elif op == "jmp":
                out.append(("jmp", ins[1].at))
            else:
                out.append(tuple(ins))
        return out


@dataclass(frozen=True)
class ThreadCode:
    name: str
    instrs: tuple
    slot_names: tuple
    locations: tuple

    @property
    def end(self):
        return len(self.instrs)

    def settle(self, pc, env):
        """Run silent instructions from ``pc``; return the resting pc and locals."""
        instrs = self.instrs
        n = len(instrs)
        work = None
        while pc < n:
            ins = instrs[pc]
            op = ins[0]
            if op == "set":
                if work is None:
                    work = list(env)
                work[ins[1]] = ins[2](work)
                pc += 1
            elif op == "jmp":
                pc = ins[1]
            elif op == "jmpf":
                if ins[1](env if work is None else work):
                    pc += 1
                else:
                    pc = ins[2]
            elif op == "jmpt":
                if ins[1](env if work is None else work):
                    pc = ins[2]
                else:
                    pc += 1
            else:
                break
        return pc, (env if work is None else tuple(work))

    def start(self):
        return self.settle(0, (0,) * len(self.slot_names))


def compile_thread(t: lang.ThreadProgram, locations=None) -> ThreadCode:
    locations = tuple(sorted(t.locations())) if locations is None else tuple(locations)
    index = {x: i for i, x in enumerate(locations)}
    missing = set(t.locations()) - set(index)
    if missing:
        raise KeyError(f"thread {t.name} uses locations outside M: {sorted(missing)}")
    c = _Compiler(t, index)
    c.body(t.body)
    return ThreadCode(t.name, tuple(c.finish()), tuple(c.slot_names), locations)


# -- programs and configurations ---------------------------------------------


class StepInfo(NamedTuple):
    thread: int
    kind: str  # lock | unlock | rd | wr
    loc: str
    value: Optional[int] = None

    @property
    def is_mem(self):
        return self.kind in ("rd", "wr")


class ProgramConfig(NamedTuple):
    pcs: tuple
    locals: tuple
    locks: tuple  # per lock index: holding thread or -1
    state: tuple  # values aligned with Program.locations


class Blocked(Exception):
    pass


class Terminated(Exception):
    pass


BLOCKED = "blocked"
TERMINATED = "terminated"


class Program:
    """A parallel composition of threads over a fixed location set M."""

    def __init__(self, threads: Sequence[lang.ThreadProgram], locations=None):
        self.threads = tuple(threads)
        found = set()
        lock_names = set()
        for t in self.threads:
            found.update(t.locations())
            lock_names.update(t.locks())
        if locations is None:
            locations = sorted(found)
        elif found - set(locations):
            raise KeyError(f"locations outside M: {sorted(found - set(locations))}")
        self.locations = tuple(locations)
        self.lock_names = tuple(sorted(lock_names))
        self.lock_index = {n: i for i, n in enumerate(self.lock_names)}
        self.codes = tuple(compile_thread(t, self.locations) for t in self.threads)

    def __len__(self):
        return len(self.threads)

    def state(self, values) -> tuple:
        if isinstance(values, tuple) and len(values) == len(self.locations):
            return values
        if isinstance(values, State):
            if values.locations == self.locations:
                return values.as_tuple()
            values = dict(values)
        values = dict(values or {})
        extra = set(values) - set(self.locations)
        if extra:
            raise KeyError(f"locations outside M: {sorted(extra)}")
        return tuple(int(values.get(x, 0)) for x in self.locations)

    def to_state(self, vals) -> State:
        return State.from_tuple(self.locations, vals)

    def initial(self, s0=None) -> ProgramConfig:
        pcs, envs = [], []
        for code in self.codes:
            pc, env = code.start()
            pcs.append(pc)
            envs.append(env)
        return ProgramConfig(tuple(pcs), tuple(envs), (-1,) * len(self.lock_names), self.state(s0))

    def next_action(self, c: ProgramConfig, t: int):
        """The pending instruction of thread ``t`` or None if terminated."""
        code = self.codes[t]
        pc = c.pcs[t]
        return None if pc >= code.end else code.instrs[pc]

    def terminated(self, c: ProgramConfig) -> bool:
        return all(pc >= code.end for pc, code in zip(c.pcs, self.codes))

    def enabled(self, c: ProgramConfig, t: int) -> bool:
        ins = self.next_action(c, t)
        if ins is None:
            return False
        if ins[0] == "lock":
            return c.locks[self.lock_index[ins[1]]] == -1
        return True

    def step(self, c: ProgramConfig, t: int):
        """Execute the next atomic action of thread ``t``.

        Returns ``(config, StepInfo)``, or the sentinels ``BLOCKED`` /
        ``TERMINATED``.
        """
        code = self.codes[t]
        pc = c.pcs[t]
        if pc >= code.end:
            return TERMINATED
        ins = code.instrs[pc]
        op = ins[0]
        env = c.locals[t]
        locks, state = c.locks, c.state
        if op == "read":
            v = state[ins[1]]
            work = list(env)
            work[ins[2]] = v
            env = tuple(work)
            info = StepInfo(t, "rd", ins[3], v)
        elif op == "write":
            v = ins[2](env)
            state = state[: ins[1]] + (v,) + state[ins[1] + 1:]
            info = StepInfo(t, "wr", ins[3], v)
        elif op == "lock":
            li = self.lock_index[ins[1]]
            if locks[li] != -1:
                return BLOCKED
            locks = locks[:li] + (t,) + locks[li + 1:]
            info = StepInfo(t, "lock", ins[1])
        else:
            li = self.lock_index[ins[1]]
            if locks[li] != t:
                raise PreconditionViolated(f"thread {t} unlocks {ins[1]!r} which it does not hold")
            locks = locks[:li] + (-1,) + locks[li + 1:]
            info = StepInfo(t, "unlock", ins[1])
        pc, env = code.settle(pc + 1, env)
        pcs = c.pcs[:t] + (pc,) + c.pcs[t + 1:]
        envs = c.locals[:t] + (env,) + c.locals[t + 1:]
        return ProgramConfig(pcs, envs, locks, state), info

    def successors(self, c: ProgramConfig):
        for t in range(len(self.codes)):
            r = self.step(c, t)
            if r is not BLOCKED and r is not TERMINATED:
                yield r


def step(program: Program, c: ProgramConfig, thread: int):
    return program.step(c, thread)


# -- execution fragments -----------------------------------------------------


@dataclass(frozen=True)
class ExecutionFragment:
    program: Program = field(repr=False, compare=False)
    configs: tuple
    steps: tuple
    status: str = "terminated"  # terminated | truncated | deadlock | prefix

    def __post_init__(self):
        if len(self.steps) != len(self.configs) - 1:
            raise ValueError("|steps| must equal |configs| - 1")

    def __len__(self):
        return len(self.steps)

    def th(self, i):
        return self.steps[i].thread

    def loc(self, i):
        return self.steps[i].loc

    def type(self, i):
        return self.steps[i].kind

    def wr(self, i):
        return self.steps[i].kind == "wr"

    def rd(self, i):
        return self.steps[i].kind == "rd"

    def mem(self, i):
        return self.steps[i].kind in ("rd", "wr")

    def src(self, i):
        return self.configs[i]

    def tgt(self, i):
        return self.configs[i + 1]

    @property
    def initial(self) -> State:
        return self.program.to_state(self.configs[0].state)

    @property
    def final(self) -> State:
        return self.program.to_state(self.configs[-1].state)

    def schedule(self):
        return tuple(s.thread for s in self.steps)

    def interleaving_log(self) -> str:
        lines = []
        for i, s in enumerate(self.steps):
            v = "" if s.value is None else f" {s.value}"
            op = {"rd": "read", "wr": "write"}.get(s.kind, s.kind)
            lines.append(f"{i} {s.thread} {op} {s.loc}{v}")
        return "\n".join(lines) + ("\n" if lines else "")

    def thread_events(self, t):
        """Event tuples ``(kind, target, value)`` of thread ``t`` in order."""
        out = []
        for s in self.steps:
            if s.thread == t:
                kind = {"rd": "read", "wr": "write"}.get(s.kind, s.kind)
                out.append((kind, s.loc, s.value))
        return out


def conflict(e: ExecutionFragment, i: int, j: int) -> bool:
    a, b = e.steps[i], e.steps[j]
    return a.is_mem and b.is_mem and a.loc == b.loc and (a.kind == "wr" or b.kind == "wr")


def replay(program: Program, s0, schedule, expect=None) -> ExecutionFragment:
    """Re-execute a thread schedule; optionally check each step against ``expect``."""
    c = program.initial(s0) if not isinstance(s0, ProgramConfig) else s0
    configs, steps = [c], []
    for k, t in enumerate(schedule):
        r = program.step(c, t)
        if r is BLOCKED or r is TERMINATED:
            raise PreconditionViolated(f"schedule step {k}: thread {t} is {r}")
        c, info = r
        if expect is not None and info != expect[k]:
            raise PreconditionViolated(f"schedule step {k}: got {info}, expected {expect[k]}")
        configs.append(c)
        steps.append(info)
    status = "terminated" if program.terminated(c) else "prefix"
    return ExecutionFragment(program, tuple(configs), tuple(steps), status)


def enumerate_executions(program: Program, s0=None, max_steps=DEFAULT_MAX_STEPS, complete=True):
    """Yield every maximal interleaving from the initial configuration.

    Each fragment is ``terminated``, ``deadlock`` or (only with
    ``complete=False``) ``truncated`` at ``max_steps``.
    """
    root = program.initial(s0)
    n = len(program.codes)
    configs, steps = [root], []
    # explicit DFS: stack of (config, next thread to try)
    stack = [[root, 0, False]]
    while stack:
        top = stack[-1]
        c, t, moved = top
        if len(steps) >= max_steps and not program.terminated(c):
            if complete:
                raise BudgetExceeded(f"execution longer than {max_steps} steps")
            yield ExecutionFragment(program, tuple(configs), tuple(steps), "truncated")
            stack.pop()
            if stack:
                configs.pop()
                steps.pop()
            continue
        advanced = False
        while t < n:
            r = program.step(c, t)
            t += 1
            if r is BLOCKED or r is TERMINATED:
                continue
            top[1], top[2] = t, True
            c2, info = r
            configs.append(c2)
            steps.append(info)
            stack.append([c2, 0, False])
            advanced = True
            break
        if advanced:
            continue
        if not moved:
            status = "terminated" if program.terminated(c) else "deadlock"
            yield ExecutionFragment(program, tuple(configs), tuple(steps), status)
        stack.pop()
        if stack:
            configs.pop()
            steps.pop()


def _initial_states(program: Program, s0s):
    if s0s is None:
        return [program.state(None)]
    if isinstance(s0s, (State, dict)):
        return [program.state(s0s)]
    return [program.state(s) for s in s0s]


@dataclass(frozen=True)
class SemanticsResult:
    pairs: frozenset
    deadlocks: int = 0

    def __iter__(self):
        return iter(self.pairs)

    def __contains__(self, item):
        return item in self.pairs

    def __len__(self):
        return len(self.pairs)

    def finals(self, s0=None):
        return {f for i, f in self.pairs if s0 is None or i == s0}


def _reachable_finals(program: Program, root: ProgramConfig, memo: dict, max_steps: int):
    """Final state tuples of all finished executions from ``root`` (memoized)."""
    if root in memo:
        return memo[root]
    deadlocks = 0
    stack = [(root, 0)]
    on_stack = set()
    while stack:
        c, depth = stack[-1]
        if c in memo:
            stack.pop()
            continue
        if depth > max_steps:
            raise BudgetExceeded(f"execution longer than {max_steps} steps")
        if c not in on_stack:
            on_stack.add(c)
            pending = [c2 for c2, _ in program.successors(c) if c2 not in memo]
            if pending:
                stack.extend((c2, depth + 1) for c2 in pending)
                continue
        succ = [c2 for c2, _ in program.successors(c)]
        if not succ:
            if program.terminated(c):
                memo[c] = frozenset((c.state,))
            else:
                deadlocks += 1
                memo[c] = frozenset()
        else:
            acc = set()
            for c2 in succ:
                acc |= memo[c2]
            memo[c] = frozenset(acc)
        on_stack.discard(c)
        stack.pop()
    return memo[root]


def semantics(program: Program, s0s=None, max_steps=DEFAULT_MAX_STEPS) -> SemanticsResult:
    """Initial/final state pairs over finished executions (deadlocks excluded)."""
    memo = {}
    pairs = set()
    for s0 in _initial_states(program, s0s):
        for f in _reachable_finals(program, program.initial(s0), memo, max_steps):
            pairs.add((program.to_state(s0), program.to_state(f)))
    dead = sum(1 for c, v in memo.items() if not v and not program.terminated(c)
               and next(program.successors(c), None) is None)
    return SemanticsResult(frozenset(pairs), dead)


# -- race detection on a single execution ------------------------------------


def hb_race(e: ExecutionFragment) -> bool:
    return hb_race_pair(e) is not None


def hb_race_pair(e: ExecutionFragment):
    """First pair ``(i, j)`` forming an hb data race, or None.

    hb is the transitive closure of sequenced-before and synchronizes-with,
    where every unlock(l) synchronizes with every later lock(l).
    """
    nthreads = max((s.thread for s in e.steps), default=-1) + 1
    clocks = [[0] * nthreads for _ in range(nthreads)]
    released = {}
    stamps = []  # (thread, own component) of each step
    by_loc = {}
    for j, s in enumerate(e.steps):
        vc = clocks[s.thread]
        if s.kind == "lock" and s.loc in released:
            rel = released[s.loc]
            for k in range(nthreads):
                if rel[k] > vc[k]:
                    vc[k] = rel[k]
        vc[s.thread] += 1
        stamps.append(vc[s.thread])
        if s.kind == "unlock":
            rel = released.setdefault(s.loc, [0] * nthreads)
            for k in range(nthreads):
                if vc[k] > rel[k]:
                    rel[k] = vc[k]
        if s.is_mem:
            for i in by_loc.get(s.loc, ()):
                a = e.steps[i]
                if a.thread == s.thread or (a.kind != "wr" and s.kind != "wr"):
                    continue
                if stamps[i] > vc[a.thread]:
                    return (i, j)
            by_loc.setdefault(s.loc, []).append(j)
    return None


def adjacent_race(e: ExecutionFragment) -> bool:
    return adjacent_race_pair(e) is not None


def adjacent_race_pair(e: ExecutionFragment):
    for i in range(len(e.steps) - 1):
        a, b = e.steps[i], e.steps[i + 1]
        if a.thread != b.thread and conflict(e, i, i + 1):
            return (i, i + 1)
    return None


# -- program-level race detection --------------------------------------------


@dataclass(frozen=True)
class RaceResult:
    racy: bool
    witness: Optional[ExecutionFragment] = None
    pair: Optional[tuple] = None
    explored: int = 0

    def __bool__(self):
        return self.racy


def _pending_access(program, c, t):
    ins = program.next_action(c, t)
    if ins is None or ins[0] not in ("read", "write"):
        return None
    return ins[3], ins[0] == "write"


def _fragment_from_path(program, path):
    configs = [path[0][0]]
    steps = []
    for c, info in path[1:]:
        configs.append(c)
        steps.append(info)
    return ExecutionFragment(program, tuple(configs), tuple(steps), "prefix")


def find_adjacent_race(program: Program, s0s=None, max_steps=DEFAULT_MAX_STEPS) -> RaceResult:
    """Search reachable configurations for two enabled conflicting accesses.

    Two threads whose pending actions conflict can run them back to back,
    which is exactly an adjacent access race; the search is exhaustive.
    """
    n = len(program.codes)
    parent = {}
    explored = 0
    for s0 in _initial_states(program, s0s):
        root = program.initial(s0)
        if root in parent:
            continue
        parent[root] = None
        frontier = [(root, 0)]
        while frontier:
            c, depth = frontier.pop()
            explored += 1
            pend = [_pending_access(program, c, t) for t in range(n)]
            for a in range(n):
                if pend[a] is None:
                    continue
                for b in range(a + 1, n):
                    if pend[b] is None:
                        continue
                    if pend[a][0] == pend[b][0] and (pend[a][1] or pend[b][1]):
                        path = []
                        node = c
                        while parent[node] is not None:
                            prev, info = parent[node]
                            path.append((node, info))
                            node = prev
                        path.append((node, None))
                        path.reverse()
                        c1, i1 = program.step(c, a)
                        c2, i2 = program.step(c1, b)
                        w = _fragment_from_path(program, path + [(c1, i1), (c2, i2)])
                        return RaceResult(True, w, (len(w) - 2, len(w) - 1), explored)
            if depth >= max_steps:
                raise BudgetExceeded(f"execution longer than {max_steps} steps")
            for c2, info in program.successors(c):
                if c2 not in parent:
                    parent[c2] = (c, info)
                    frontier.append((c2, depth + 1))
    return RaceResult(False, None, None, explored)


def find_hb_race(program: Program, s0s=None, max_steps=DEFAULT_MAX_STEPS) -> RaceResult:
    """Exhaustive search over executions for an hb data race.

    Runs a happens-before detector along every interleaving.  The detector
    state is abstracted to what can still matter for future races: per
    location the last write and the latest read of each thread since that
    write, and per thread and lock the set of those accesses that are
    hb-before it.  Executions reaching the same configuration with the same
    abstract detector state are explored once.
    """
    n = len(program.codes)
    nlocks = len(program.lock_names)
    explored = 0
    seen = set()
    for s0 in _initial_states(program, s0s):
        root = program.initial(s0)
        know0 = (frozenset(),) * n
        lock0 = (frozenset(),) * nlocks
        stack = [(root, know0, lock0, 0, None)]
        # parent links for witness reconstruction
        while stack:
            c, know, lknow, depth, trail = stack.pop()
            key = (c, know, lknow)
            if key in seen:
                continue
            seen.add(key)
            explored += 1
            if depth > max_steps:
                raise BudgetExceeded(f"execution longer than {max_steps} steps")
            for t in range(n):
                r = program.step(c, t)
                if r is BLOCKED or r is TERMINATED:
                    continue
                c2, info = r
                k = know[t]
                if info.kind in ("rd", "wr"):
                    x = info.loc
                    live = frozenset().union(*know)
                    wtok = ("w", x)
                    racy = wtok in live and wtok not in k
                    if info.kind == "wr" and not racy:
                        racy = any(tok[0] == "r" and tok[1] == x and tok[2] != t and tok not in k for tok in live)
                    if racy:
                        steps = []
                        node = trail
                        while node is not None:
                            steps.append(node[0])
                            node = node[1]
                        steps.reverse()
                        w = replay(program, root, [s.thread for s in steps] + [t])
                        pair = hb_race_pair(w)
                        return RaceResult(True, w, pair, explored)
                    if info.kind == "wr":
                        dead = lambda tok: tok[1] == x  # noqa: E731
                        new = ("w", x)
                    else:
                        dead = lambda tok: tok == ("r", x, t)  # noqa: E731
                        new = ("r", x, t)
                    know2 = tuple(frozenset(tok for tok in kk if not dead(tok)) for kk in know)
                    know2 = know2[:t] + (know2[t] | {new},) + know2[t + 1:]
                    lknow2 = tuple(frozenset(tok for tok in kk if not dead(tok)) for kk in lknow)
                elif info.kind == "lock":
                    li = program.lock_index[info.loc]
                    know2 = know[:t] + (k | lknow[li],) + know[t + 1:]
                    lknow2 = lknow
                else:
                    li = program.lock_index[info.loc]
                    know2 = know
                    lknow2 = lknow[:li] + (k,) + lknow[li + 1:]
                stack.append((c2, know2, lknow2, depth + 1, (info, trail)))
    return RaceResult(False, None, None, explored)


def race(program: Program, s0s=None, max_steps=DEFAULT_MAX_STEPS, detector="adjacent") -> bool:
    if detector == "hb":
        return find_hb_race(program, s0s, max_steps).racy
    if detector == "adjacent":
        return find_adjacent_race(program, s0s, max_steps).racy
    raise ValueError(f"unknown detector {detector!r}")


# -- coarse-grained interleaving ---------------------------------------------


def coarsen(e: ExecutionFragment) -> ExecutionFragment:
    """Reorder a race-free execution prefix so that each thread's portion
    from a lock to its next lock runs without interruption.

    Every non-lock step is moved up to just after the previous step of its
    thread; race freedom guarantees it only crosses non-conflicting steps.
    The result is re-executed step by step against the original step records.
    """
    if hb_race(e):
        raise PreconditionViolated("coarsen requires an execution without hb data race")
    order = []  # indices into e.steps
    last_pos = {}  # thread -> position in order of its latest step
    for i, s in enumerate(e.steps):
        t = s.thread
        if s.kind == "lock" or t not in last_pos:
            order.append(i)
            last_pos[t] = len(order) - 1
            continue
        p = last_pos[t] + 1
        order.insert(p, i)
        for u, q in last_pos.items():
            if q >= p:
                last_pos[u] = q + 1
        last_pos[t] = p
    schedule = [e.steps[i].thread for i in order]
    expect = [e.steps[i] for i in order]
    out = replay(e.program, e.configs[0], schedule, expect)
    return ExecutionFragment(e.program, out.configs, out.steps, e.status)


def is_coarse(e: ExecutionFragment) -> bool:
    """True iff each thread's steps after a lock run contiguously up to its next lock."""
    steps = e.steps
    n = len(steps)
    for i, s in enumerate(steps):
        if s.kind != "lock":
            continue
        t = s.thread
        rest = [k for k in range(i + 1, n) if steps[k].thread == t]
        portion = []
        for k in rest:
            if steps[k].kind == "lock":
                break
            portion.append(k)
        if portion != list(range(i + 1, i + 1 + len(portion))):
            return False
    return True


# -- single-thread runs ------------------------------------------------------


def run_thread(t: lang.ThreadProgram, s0=None, locations=None, max_steps=DEFAULT_MAX_STEPS):
    """Run one thread alone; return its event list and final state."""
    p = Program([t], locations)
    c = p.initial(s0)
    events = []
    for _ in range(max_steps + 1):
        r = p.step(c, 0)
        if r is TERMINATED:
            return events, p.to_state(c.state)
        if r is BLOCKED:
            raise PreconditionViolated(f"thread {t.name} blocks on a lock it already holds")
        c, info = r
        events.append(({"rd": "read", "wr": "write"}.get(info.kind, info.kind), info.loc, info.value))
    raise BudgetExceeded(f"thread {t.name} ran longer than {max_steps} steps")
