"""Coarse abstractions of thread runs at synchronization operations.

A *state trace* (non-nested locks) has one :class:`SegmentPair` per
lock/unlock pair: the state at the lock, the locations read and written up
to the unlock (``a`` half), and those read and written from the unlock up
to the next lock or thread end (``b`` half), plus the state reached there.

A *transition trace* (nested locks) has one :class:`TransitionTuple` per
synchronization operation.

Item-indexed view: segment ``k`` provides items ``2k`` (the lock half) and
``2k + 1`` (the unlock half); ``R[i]``, ``W[i]`` are that item's access sets
and ``s[i]`` its state (the lock state for even items, the end state for odd
items).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

from . import lang
from .errors import BudgetExceeded, NotWellFormed
from .semantics import State, ThreadCode, all_states, compile_thread
from .trace import EventTrace, validate

DEFAULT_DOMAIN = (0, 1, 2)
DEFAULT_TRACE_BUDGET = 1_000_000
START = -1  # prev_unlock sentinel: the thread entry acts as an unlock with empty sets


@dataclass(frozen=True)
class SegmentPair:
    lock_id: str
    lock_state: State
    r_a: frozenset
    w_a: frozenset
    unlock_state: State
    r_b: frozenset
    w_b: frozenset
    post_state: State

    @property
    def a_a(self):
        return self.r_a | self.w_a

    @property
    def a_b(self):
        return self.r_b | self.w_b

    @property
    def unlock_exit_state(self) -> dict:
        """State at the unlock, known only outside the locations written after it."""
        return {x: v for x, v in self.unlock_state.items() if x not in self.w_b}


@dataclass(frozen=True)
class StateTrace:
    segments: tuple = ()

    def __len__(self):
        return len(self.segments)

    @property
    def n_items(self):
        return 2 * len(self.segments)

    def R(self, i):
        if i < 0 or i >= self.n_items:
            return frozenset()
        seg = self.segments[i // 2]
        return seg.r_a if i % 2 == 0 else seg.r_b

    def W(self, i):
        if i < 0 or i >= self.n_items:
            return frozenset()
        seg = self.segments[i // 2]
        return seg.w_a if i % 2 == 0 else seg.w_b

    def A(self, i):
        return self.R(i) | self.W(i)

    def s(self, i) -> State:
        seg = self.segments[i // 2]
        return seg.lock_state if i % 2 == 0 else seg.post_state

    def lock(self, i) -> str:
        return self.segments[i // 2].lock_id

    def prefix(self, i) -> "StateTrace":
        """``t[0:i]`` for even item index ``i``."""
        if i % 2:
            raise ValueError("state trace prefixes end at an even item index")
        return StateTrace(self.segments[: i // 2])

    def locations(self):
        if not self.segments:
            return ()
        return self.segments[0].lock_state.locations


@dataclass(frozen=True)
class TransitionTuple:
    lock_id: str
    op: str  # lock | unlock
    pre_state: State
    reads: frozenset
    writes: frozenset
    post_state: State

    @property
    def accesses(self):
        return self.reads | self.writes


@dataclass(frozen=True)
class TransitionTrace:
    tuples: tuple = ()

    def __len__(self):
        return len(self.tuples)

    def __getitem__(self, i):
        return self.tuples[i]

    def types(self):
        return [u.op for u in self.tuples]

    def prefix(self, i) -> "TransitionTrace":
        return TransitionTrace(self.tuples[:i])


# -- next-lock / prev-unlock -------------------------------------------------


def _types(tt):
    return tt.types() if isinstance(tt, TransitionTrace) else list(tt)


def next_lock(tt, i) -> int:
    """Smallest ``j > i`` whose operation is a lock; ``len(tt)`` if none."""
    types = _types(tt)
    for j in range(i + 1, len(types)):
        if types[j] == "lock":
            return j
    return len(types)


def prev_unlock(tt, i) -> int:
    """Index of the unlock that opens the run of locks ending at ``i``.

    For an unlock ``i`` this is ``i`` itself; for a lock it is the latest
    earlier unlock, or ``START`` (-1) when only locks precede it.
    """
    types = _types(tt)
    for j in range(i, -1, -1):
        if types[j] == "unlock":
            return j
    return START


# -- building from a single event trace --------------------------------------


def build_state_trace(t: EventTrace, locations=None) -> StateTrace:
    """State trace of a single-execution event trace (one pass over events)."""
    bad = validate(t, "non-nested")
    if bad:
        raise NotWellFormed(f"trace is not well formed: {bad[0][1]} at event {bad[0][0]}", bad)
    locs = tuple(locations) if locations is not None else t.locations()
    index = {x: i for i, x in enumerate(locs)}
    init = t.init
    cur = [init.get(x, 0) for x in locs]
    segs = []
    lock_id = lock_state = unlock_state = None
    r = set()
    w = set()
    half = None
    for e in t.events:
        if e.kind == "lock":
            if half == "b":
                segs.append((lock_id, lock_state, ra, wa, unlock_state, frozenset(r), frozenset(w), tuple(cur)))
            lock_id, lock_state = e.target, tuple(cur)
            r, w, half = set(), set(), "a"
        elif e.kind == "unlock":
            ra, wa = frozenset(r), frozenset(w)
            unlock_state = tuple(cur)
            r, w, half = set(), set(), "b"
        elif e.kind == "read":
            r.add(e.target)
        else:
            w.add(e.target)
            cur[index[e.target]] = e.value
    if half == "b":
        segs.append((lock_id, lock_state, ra, wa, unlock_state, frozenset(r), frozenset(w), tuple(cur)))
    mk = lambda v: State.from_tuple(locs, v)  # noqa: E731
    return StateTrace(tuple(
        SegmentPair(l, mk(s), ra, wa, mk(su), rb, wb, mk(sp)) for l, s, ra, wa, su, rb, wb, sp in segs
    ))


def build_transition_trace(t: EventTrace, locations=None) -> TransitionTrace:
    bad = validate(t, "nested")
    if bad:
        raise NotWellFormed(f"trace is not well formed: {bad[0][1]} at event {bad[0][0]}", bad)
    if t.events and not t.events[0].is_sync:
        raise NotWellFormed("memory event before the first synchronization operation", [(0, "first operation not sync")])
    locs = tuple(locations) if locations is not None else t.locations()
    index = {x: i for i, x in enumerate(locs)}
    init = t.init
    cur = [init.get(x, 0) for x in locs]
    out = []
    head = None
    r, w = set(), set()

    def close():
        op, lid, pre = head
        out.append(TransitionTuple(lid, op, State.from_tuple(locs, pre), frozenset(r), frozenset(w),
                                   State.from_tuple(locs, tuple(cur))))

    for e in t.events:
        if e.is_sync:
            if head is not None:
                close()
            head = (e.kind, e.target, tuple(cur))
            r, w = set(), set()
        elif e.kind == "read":
            r.add(e.target)
        else:
            w.add(e.target)
            cur[index[e.target]] = e.value
    if head is not None:
        close()
    return TransitionTrace(tuple(out))


# -- running thread code portion by portion ----------------------------------


def run_portion(code: ThreadCode, pc: int, env, state: list):
    """Execute the sync operation at ``pc`` and the memory accesses after it.

    Stops before the next sync operation or at the end of the thread.
    ``state`` is updated in place.  Returns ``(op, lock, reads, writes, pc, env)``.
    """
    instrs = code.instrs
    ins = instrs[pc]
    op, lock_id = ins[0], ins[1]
    if op not in ("lock", "unlock"):
        raise NotWellFormed(f"thread {code.name}: memory access before the first synchronization")
    reads, writes = set(), set()
    pc, env = code.settle(pc + 1, env)
    n = len(instrs)
    while pc < n:
        ins = instrs[pc]
        kind = ins[0]
        if kind == "read":
            reads.add(ins[3])
            work = list(env)
            work[ins[2]] = state[ins[1]]
            env = tuple(work)
        elif kind == "write":
            writes.add(ins[3])
            state[ins[1]] = ins[2](env)
        else:
            break
        pc, env = code.settle(pc + 1, env)
    return op, lock_id, frozenset(reads), frozenset(writes), pc, env


def run_segment(code: ThreadCode, pc: int, env, state: list):
    """Run one lock-to-next-lock segment of a non-nested thread.

    Returns ``(lock, r_a, w_a, unlock_state, r_b, w_b, pc, env)``; ``state``
    ends as the post state.
    """
    op, lid, ra, wa, pc, env = run_portion(code, pc, env, state)
    if op != "lock":
        raise NotWellFormed(f"thread {code.name}: segment starts with unlock({lid})")
    if pc >= code.end or code.instrs[pc][0] != "unlock":
        raise NotWellFormed(f"thread {code.name}: lock({lid}) not followed by its unlock")
    if code.instrs[pc][1] != lid:
        raise NotWellFormed(f"thread {code.name}: lock({lid}) closed by unlock({code.instrs[pc][1]})")
    unlock_state = tuple(state)
    _, _, rb, wb, pc, env = run_portion(code, pc, env, state)
    if pc < code.end and code.instrs[pc][0] != "lock":
        raise NotWellFormed(f"thread {code.name}: unlock followed by another unlock")
    return lid, ra, wa, unlock_state, rb, wb, pc, env


def _thread_code(t, locations):
    if isinstance(t, ThreadCode):
        return t
    if locations is None:
        locations = t.locations()
    return compile_thread(t, locations)


def _start_states(code, s0s, domain):
    if s0s is None:
        return [s.as_tuple() for s in all_states(code.locations, domain)]
    out = []
    for s in s0s:
        if isinstance(s, State):
            s = dict(s)
        out.append(tuple(int(s.get(x, 0)) for x in code.locations))
    return out


def _havoc(base, keep, domain):
    """All states equal to ``base`` on indices in ``keep``, domain values elsewhere."""
    free = [i for i in range(len(base)) if i not in keep]
    if not free:
        yield base
        return
    for vals in itertools.product(domain, repeat=len(free)):
        s = list(base)
        for i, v in zip(free, vals):
            s[i] = v
        yield tuple(s)


def enumerate_S(t, s0s=None, domain=DEFAULT_DOMAIN, locations=None, budget=DEFAULT_TRACE_BUDGET):
    """Yield every state trace of a non-nested thread over a finite value domain.

    At each lock after the first, locations outside the previous unlock
    half's access set take any value in ``domain``; the rest keep their value.
    """
    code = _thread_code(t, locations)
    locs = code.locations
    idx = {x: i for i, x in enumerate(locs)}
    domain = tuple(domain)
    mk = lambda v: State.from_tuple(locs, v)  # noqa: E731
    count = 0
    pc0, env0 = code.start()
    # DFS over (pc, env, lock state, segments so far, keep indices)
    stack = []
    for s0 in _start_states(code, s0s, domain):
        stack.append((pc0, env0, s0, ()))
    stack.reverse()
    while stack:
        pc, env, s, segs = stack.pop()
        if pc >= code.end:
            count += 1
            if count > budget:
                raise BudgetExceeded(f"more than {budget} state traces")
            yield StateTrace(segs)
            continue
        state = list(s)
        lid, ra, wa, su, rb, wb, pc2, env2 = run_segment(code, pc, env, state)
        post = tuple(state)
        seg = SegmentPair(lid, mk(s), ra, wa, mk(su), rb, wb, mk(post))
        segs2 = segs + (seg,)
        if pc2 >= code.end:
            stack.append((pc2, env2, post, segs2))
            continue
        keep = {idx[x] for x in rb | wb}
        nxt = [(pc2, env2, s2, segs2) for s2 in _havoc(post, keep, domain)]
        stack.extend(reversed(nxt))


def enumerate_Sn(t, s0s=None, domain=DEFAULT_DOMAIN, locations=None, budget=DEFAULT_TRACE_BUDGET):
    """Yield every transition trace of a thread with (possibly nested) locks.

    No change at unlocks; at a lock ``i`` locations outside the union of
    access sets from ``prev_unlock(i)`` to ``i - 1`` take any domain value.
    """
    code = _thread_code(t, locations)
    locs = code.locations
    idx = {x: i for i, x in enumerate(locs)}
    domain = tuple(domain)
    mk = lambda v: State.from_tuple(locs, v)  # noqa: E731
    count = 0
    pc0, env0 = code.start()
    if pc0 < code.end and code.instrs[pc0][0] not in ("lock", "unlock"):
        raise NotWellFormed(f"thread {code.name}: memory access before the first synchronization")
    stack = [(pc0, env0, s0, ()) for s0 in reversed(_start_states(code, s0s, domain))]
    while stack:
        pc, env, s, tuples = stack.pop()
        if pc >= code.end:
            count += 1
            if count > budget:
                raise BudgetExceeded(f"more than {budget} transition traces")
            yield TransitionTrace(tuples)
            continue
        state = list(s)
        op, lid, r, w, pc2, env2 = run_portion(code, pc, env, state)
        post = tuple(state)
        tuples2 = tuples + (TransitionTuple(lid, op, mk(s), r, w, mk(post)),)
        if pc2 >= code.end:
            stack.append((pc2, env2, post, tuples2))
            continue
        if code.instrs[pc2][0] == "unlock":
            stack.append((pc2, env2, post, tuples2))
            continue
        i = len(tuples2)
        j = prev_unlock([u.op for u in tuples2] + ["lock"], i)
        keep = set()
        for u in tuples2[max(j, 0):]:
            keep.update(idx[x] for x in u.accesses)
        nxt = [(pc2, env2, s2, tuples2) for s2 in _havoc(post, keep, domain)]
        stack.extend(reversed(nxt))


# -- independent re-validation -----------------------------------------------


def state_trace_violations(st: StateTrace, code: Optional[ThreadCode] = None) -> list:
    """Re-check the defining constraints of the state trace set.

    Verifies the havoc rule at every lock after the first, and, when the
    thread ``code`` is given, replays each segment from its lock state to
    confirm the recorded sets and states.
    """
    out = []
    segs = st.segments
    for k in range(1, len(segs)):
        prev, cur = segs[k - 1], segs[k]
        for x in prev.a_b:
            if prev.post_state[x] != cur.lock_state[x]:
                out.append((2 * k, f"{x} accessed before the lock but changed at it"))
    if code is not None:
        pc, env = code.start()
        for k, seg in enumerate(segs):
            if pc >= code.end:
                out.append((2 * k, "thread ended before this segment"))
                return out
            state = list(seg.lock_state.as_tuple())
            lid, ra, wa, su, rb, wb, pc, env = run_segment(code, pc, env, state)
            got = (lid, ra, wa, su, rb, wb, tuple(state))
            want = (seg.lock_id, seg.r_a, seg.w_a, seg.unlock_state.as_tuple(), seg.r_b, seg.w_b,
                    seg.post_state.as_tuple())
            if got != want:
                out.append((2 * k, "segment does not replay from its lock state"))
        if pc < code.end:
            out.append((2 * len(segs), "thread continues after the last segment"))
    return out


def transition_trace_violations(tt: TransitionTrace, code: Optional[ThreadCode] = None) -> list:
    out = []
    tuples = tt.tuples
    for i in range(1, len(tuples)):
        u, prev = tuples[i], tuples[i - 1]
        if u.op == "unlock":
            if u.pre_state != prev.post_state:
                out.append((i, "state changed at an unlock"))
            continue
        j = prev_unlock(tt, i)
        window = set()
        for v in tuples[max(j, 0): i]:
            window |= v.accesses
        for x in window:
            if u.pre_state[x] != prev.post_state[x]:
                out.append((i, f"{x} accessed since the previous unlock but changed at the lock"))
    if code is not None:
        pc, env = code.start()
        for i, u in enumerate(tuples):
            if pc >= code.end:
                out.append((i, "thread ended before this tuple"))
                return out
            state = list(u.pre_state.as_tuple())
            op, lid, r, w, pc, env = run_portion(code, pc, env, state)
            if (op, lid, r, w, tuple(state)) != (u.op, u.lock_id, u.reads, u.writes, u.post_state.as_tuple()):
                out.append((i, "tuple does not replay from its pre state"))
        if pc < code.end:
            out.append((len(tuples), "thread continues after the last tuple"))
    return out


# -- diagnostic text form ----------------------------------------------------


def _fmt_set(s):
    return "{" + ",".join(sorted(s)) + "}"


def _diff(prev, cur):
    parts = [f"{x}={cur[x]}" for x in cur if prev is None or prev[x] != cur[x]]
    return "[" + " ".join(parts) + "]"


def format_state_trace(st: StateTrace) -> str:
    lines = []
    prev = None
    for seg in st.segments:
        lines.append(
            f"lock {seg.lock_id} {_diff(prev, seg.lock_state)} Ra={_fmt_set(seg.r_a)} Wa={_fmt_set(seg.w_a)} "
            f"| unlock {_diff(seg.lock_state, seg.unlock_state)} Rb={_fmt_set(seg.r_b)} Wb={_fmt_set(seg.w_b)} "
            f"-> {_diff(seg.unlock_state, seg.post_state)}"
        )
        prev = seg.post_state
    return "\n".join(lines) + ("\n" if lines else "")


def format_transition_trace(tt: TransitionTrace) -> str:
    lines = []
    prev = None
    for u in tt.tuples:
        lines.append(
            f"{u.op} {u.lock_id} {_diff(prev, u.pre_state)} R={_fmt_set(u.reads)} W={_fmt_set(u.writes)} "
            f"-> {_diff(u.pre_state, u.post_state)}"
        )
        prev = u.post_state
    return "\n".join(lines) + ("\n" if lines else "")
