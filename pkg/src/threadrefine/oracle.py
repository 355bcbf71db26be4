"""Event-based baseline: search for a sequence of trace transformations.

Rules (none of them moves an event across a lock or unlock):

* ``reorder``: swap two adjacent memory events that do not conflict
  (different locations, or both reads);
* ``eliminate-overwritten-write``: drop a write that is followed, in the
  same block, by another write to its location with no access to that
  location in between;
* ``eliminate-irrelevant-read``: drop any read;
* ``introduce-irrelevant-read``: insert a read that sees the current value.

Because no rule crosses a synchronization event and the state reached at
the end of a block is preserved by every rule, the search decomposes into
independent breadth-first searches, one per block.
"""
from __future__ import annotations

import time
from collections import Counter, deque
from dataclasses import dataclass
from typing import Optional

from .errors import NotApplicable
from .state_traces import next_lock, prev_unlock
from .trace import Event, EventTrace

REORDER = "reorder-adjacent-nonconflicting"
ELIM_WRITE = "eliminate-overwritten-write"
ELIM_READ = "eliminate-irrelevant-read"
INTRO_READ = "introduce-irrelevant-read"
KINDS = (REORDER, ELIM_WRITE, ELIM_READ, INTRO_READ)

FOUND = "found"
NOT_FOUND = "not-found"
EXHAUSTED = "budget-exhausted"
DEFAULT_BUDGET = 1_000_000


@dataclass(frozen=True)
class Transformation:
    kind: str
    position: int
    location: Optional[str] = None  # introduced reads only

    def __str__(self):
        if self.kind == INTRO_READ:
            return f"{self.kind} {self.location} @{self.position}"
        return f"{self.kind} @{self.position}"


def _conflict(a: Event, b: Event):
    return a.target == b.target and (a.kind == "write" or b.kind == "write")


def _value_before(events, pos, loc, init):
    for e in reversed(events[:pos]):
        if e.kind == "write" and e.target == loc:
            return e.value
    return init


def apply(t: EventTrace, x: Transformation) -> EventTrace:
    """Apply one transformation to a whole trace (raises NotApplicable)."""
    ev = list(t.events)
    p = x.position
    if x.kind == REORDER:
        if not (0 <= p < len(ev) - 1):
            raise NotApplicable(f"no adjacent pair at {p}")
        a, b = ev[p], ev[p + 1]
        if not (a.is_mem and b.is_mem):
            raise NotApplicable("reordering would cross a synchronization event")
        if _conflict(a, b):
            raise NotApplicable(f"events at {p} and {p + 1} conflict")
        ev[p], ev[p + 1] = b, a
    elif x.kind == ELIM_WRITE:
        if not (0 <= p < len(ev)) or ev[p].kind != "write":
            raise NotApplicable(f"no write at {p}")
        loc = ev[p].target
        for e in ev[p + 1:]:
            if e.is_sync:
                raise NotApplicable("no later write before the next synchronization")
            if e.target == loc:
                if e.kind == "write":
                    break
                raise NotApplicable(f"{loc} is read before it is overwritten")
        else:
            raise NotApplicable("write is never overwritten")
        del ev[p]
    elif x.kind == ELIM_READ:
        if not (0 <= p < len(ev)) or ev[p].kind != "read":
            raise NotApplicable(f"no read at {p}")
        del ev[p]
    elif x.kind == INTRO_READ:
        if not (0 <= p <= len(ev)) or x.location is None:
            raise NotApplicable("bad introduction position")
        init = t.init.get(x.location, 0)
        ev.insert(p, Event("read", x.location, _value_before(ev, p, x.location, init)))
    else:
        raise NotApplicable(f"unknown transformation {x.kind!r}")
    return EventTrace(tuple(ev), t.explicit_init)


def apply_all(t: EventTrace, seq) -> EventTrace:
    for x in seq:
        t = apply(t, x)
    return t


@dataclass(frozen=True)
class OracleResult:
    status: str
    sequence: tuple = ()
    nodes: int = 0
    elapsed_us: float = 0.0

    @property
    def found(self):
        return self.status == FOUND

    def to_dict(self):
        d = {"verdict": self.status, "nodes": self.nodes, "elapsed_us": round(self.elapsed_us, 3)}
        if self.status == FOUND:
            d["sequence"] = [str(x) for x in self.sequence]
        return d


def _blocks(t: EventTrace):
    """Memory events between synchronization events, and the sync events."""
    blocks, syncs, cur = [], [], []
    for e in t.events:
        if e.is_sync:
            blocks.append(tuple(cur))
            syncs.append(e)
            cur = []
        else:
            cur.append(e)
    blocks.append(tuple(cur))
    return blocks, syncs


def _windows(blocks, syncs):
    """Locations an introduced read may touch in each block.

    Block ``k >= 1`` is the portion after synchronization event ``k - 1``;
    it may read what the original accesses from the previous unlock up to
    the next lock (the matcher's race window).  Block 0 precedes every
    synchronization event and keeps its own accesses.
    """
    acc = [{e.target for e in b} for b in blocks]
    types = [e.kind for e in syncs]
    out = [set(acc[0])]
    for i in range(len(syncs)):
        lo = max(prev_unlock(types, i), 0)
        hi = next_lock(types, i)
        w = set()
        for j in range(lo, hi):
            w |= acc[j + 1]
        out.append(w)
    return out


class _Budget:
    def __init__(self, limit):
        self.limit = limit
        self.used = 0


def _moves(cur, target_counts, allowed, start_state):
    n = len(cur)
    counts = Counter(cur)
    for p in range(n - 1):
        if not _conflict(cur[p], cur[p + 1]):
            yield Transformation(REORDER, p), cur[:p] + (cur[p + 1], cur[p]) + cur[p + 2:]
    for p, e in enumerate(cur):
        if e.kind == "read":
            yield Transformation(ELIM_READ, p), cur[:p] + cur[p + 1:]
        elif counts[e] > target_counts[e]:
            for f in cur[p + 1:]:
                if f.target == e.target:
                    if f.kind == "write":
                        yield Transformation(ELIM_WRITE, p), cur[:p] + cur[p + 1:]
                    break
    state = dict(start_state)
    for p in range(n + 1):
        for x in allowed:
            r = Event("read", x, state.get(x, 0))
            if counts[r] < target_counts[r]:
                yield Transformation(INTRO_READ, p, x), cur[:p] + (r,) + cur[p:]
        if p < n and cur[p].kind == "write":
            state[cur[p].target] = cur[p].value


def _search_block(src, dst, allowed, start_state, budget: _Budget):
    if src == dst:
        return ()
    if not Counter(e for e in dst if e.kind == "write") <= Counter(e for e in src if e.kind == "write"):
        return None
    allowed = sorted(x for x in allowed if any(e.kind == "read" and e.target == x for e in dst))
    target_counts = Counter(dst)
    parent = {src: None}
    queue = deque([src])
    while queue:
        cur = queue.popleft()
        for move, nxt in _moves(cur, target_counts, allowed, start_state):
            if nxt in parent:
                continue
            budget.used += 1
            if budget.used > budget.limit:
                raise _Exhausted
            parent[nxt] = (cur, move)
            if nxt == dst:
                path = []
                node = nxt
                while parent[node] is not None:
                    node, mv = parent[node]
                    path.append(mv)
                return tuple(reversed(path))
            queue.append(nxt)
    return None


class _Exhausted(Exception):
    pass


def oracle_match(tp: EventTrace, t: EventTrace, budget: int = DEFAULT_BUDGET) -> OracleResult:
    """Search for transformations turning ``t`` into ``tp``."""
    t0 = time.perf_counter()
    b = _Budget(budget)
    src_blocks, src_syncs = _blocks(t)
    dst_blocks, dst_syncs = _blocks(tp)

    def done(status, seq=()):
        return OracleResult(status, tuple(seq), b.used, (time.perf_counter() - t0) * 1e6)

    if src_syncs != dst_syncs:
        return done(NOT_FOUND)
    windows = _windows(src_blocks, src_syncs)
    state = dict(t.init)
    seq = []
    offset = 0
    try:
        for k, (src, dst) in enumerate(zip(src_blocks, dst_blocks)):
            local = _search_block(src, dst, windows[k], state, b)
            if local is None:
                return done(NOT_FOUND)
            seq.extend(Transformation(m.kind, m.position + offset, m.location) for m in local)
            for e in src:
                if e.kind == "write":
                    state[e.target] = e.value
            offset += len(dst) + 1
    except _Exhausted:
        return done(EXHAUSTED)
    return done(FOUND, seq)
