"""Matching of state traces and transition traces, and the check decisions.

Constraint numbers follow the numbered lines of the two matching
definitions.  Numbers 11 (flat) and 21 (nested) are our extra
``state-final`` constraint: full final-state agreement at thread
termination.  It is on by default (``strict_final=True``); see
:func:`match_state_traces` for why.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from . import lang
from .errors import BudgetExceeded, InitMismatch, NotWellFormed
from .semantics import State, compile_thread
from .state_traces import (
    DEFAULT_DOMAIN,
    START,
    SegmentPair,
    StateTrace,
    TransitionTrace,
    TransitionTuple,
    _havoc,
    _start_states,
    enumerate_S,
    enumerate_Sn,
    next_lock,
    prev_unlock,
    run_portion,
    run_segment,
)
from .trace import EventTrace, validate

MATCH = "match"
DIVERGE = "prefix-divergence-match"
MISMATCH = "mismatch"

FLAT_LABELS = {
    1: "length",
    3: "race-even-R",
    4: "race-even-W",
    5: "race-odd-R",
    6: "race-odd-W",
    7: "state-lock",
    8: "state-lock-stability",
    9: "state-unlock",
    10: "same-locks",
    11: "state-final",
}
NESTED_LABELS = {
    1: "length",
    3: "same-locks",
    7: "race-W",
    8: "race-R",
    13: "state-lock",
    15: "state-lock-stability",
    20: "state-unlock",
    21: "state-final",
}

DEFAULT_CHECK_BUDGET = 2_000_000


@dataclass(frozen=True)
class Witness:
    index: int
    location: Optional[str] = None
    values: Optional[tuple] = None  # (primed value, original value)
    detail: str = ""

    def to_dict(self):
        d = {"index": self.index, "location": self.location}
        if self.values is not None:
            d["values"] = list(self.values)
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass(frozen=True)
class MatchReport:
    verdict: str
    constraint: Optional[int] = None
    label: Optional[str] = None
    witness: Optional[Witness] = None
    mode: str = "non-nested"
    divergence: Optional[int] = None
    notes: tuple = ()
    elapsed_us: Optional[float] = None

    def __post_init__(self):
        if self.verdict == MISMATCH and self.witness is None:
            raise ValueError("a mismatch report needs a witness")
        if self.verdict != MISMATCH and self.witness is not None:
            raise ValueError("only mismatch reports carry a witness")

    @property
    def ok(self):
        return self.verdict != MISMATCH

    def __bool__(self):
        return self.ok

    def to_dict(self):
        d = {"verdict": self.verdict, "mode": self.mode}
        if self.constraint is not None:
            d["constraint"] = self.constraint
            d["label"] = self.label
            d["witness"] = self.witness.to_dict()
        if self.divergence is not None:
            d["divergence"] = self.divergence
        if self.notes:
            d["notes"] = list(self.notes)
        if self.elapsed_us is not None:
            d["elapsed_us"] = round(self.elapsed_us, 3)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _fail(mode, number, witness):
    labels = FLAT_LABELS if mode == "non-nested" else NESTED_LABELS
    return MatchReport(MISMATCH, number, labels[number], witness, mode)


def _ok(mode):
    return MatchReport(MATCH, mode=mode)


def _same_locations(a, b):
    if a and b and tuple(a) != tuple(b):
        raise ValueError("traces range over different location sets")
    return tuple(a or b or ())


# -- match on state traces ---------------------------------------------------


def match_state_traces(tp: StateTrace, t: StateTrace, strict_final: bool = True) -> MatchReport:
    """Evaluate the ten matching constraints between ``tp`` (primed) and ``t``.

    The first violation is reported, ordered by constraint number and then by
    item index.  With ``strict_final`` the final states must also agree
    everywhere (constraint 11): the plain constraints leave writes made after
    the last unlock unchecked, although they are visible once the thread
    has been joined.
    """
    mode = "non-nested"
    if len(tp) != len(t):
        return _fail(mode, 1, Witness(2 * min(len(tp), len(t)), detail=f"{tp.n_items} vs {t.n_items} items"))
    n = t.n_items
    M = _same_locations(tp.locations(), t.locations())
    evens = range(0, n, 2)
    odds = range(1, n, 2)

    def subset(number, idx, sub, sup):
        for i in idx:
            extra = sub(i) - sup(i)
            if extra:
                x = min(extra)
                return _fail(mode, number, Witness(i, x, detail=f"{x} outside the allowed set"))
        return None

    A, W = t.A, t.W
    for number, idx, sub, sup in (
        (3, evens, tp.R, lambda i: A(i - 1) | A(i) | A(i + 1)),
        (4, evens, tp.W, lambda i: W(i - 1) | W(i) | W(i + 1)),
        (5, odds, tp.R, A),
        (6, odds, tp.W, W),
    ):
        r = subset(number, idx, sub, sup)
        if r is not None:
            return r
    for i in evens:
        skip = A(i - 1)
        sp, s = tp.s(i), t.s(i)
        for x in M:
            if x not in skip and sp[x] != s[x]:
                return _fail(mode, 7, Witness(i, x, (sp[x], s[x])))
    for i in evens:
        if i == 0:
            continue
        before, at = tp.s(i - 1), tp.s(i)
        for x in sorted(A(i - 1) - tp.A(i - 1)):
            if before[x] != at[x]:
                return _fail(mode, 8, Witness(i, x, (before[x], at[x])))
    for i in odds:
        skip = W(i)
        sp, s = tp.s(i), t.s(i)
        for x in M:
            if x not in skip and sp[x] != s[x]:
                return _fail(mode, 9, Witness(i, x, (sp[x], s[x])))
    for i in evens:
        if tp.lock(i) != t.lock(i):
            return _fail(mode, 10, Witness(i, detail=f"lock {tp.lock(i)} vs {t.lock(i)}"))
    if strict_final and n:
        sp, s = tp.s(n - 1), t.s(n - 1)
        for x in M:
            if sp[x] != s[x]:
                return _fail(mode, 11, Witness(n - 1, x, (sp[x], s[x])))
    return _ok(mode)


def match_or_diverge(tp: StateTrace, t: StateTrace, strict_final: bool = True) -> MatchReport:
    """The body of the check definition for one concrete pair of state traces."""
    full = match_state_traces(tp, t, strict_final)
    if full.ok:
        return full
    n = min(tp.n_items, t.n_items)
    for i in range(2, n + 1, 2):
        if i >= tp.n_items or i >= t.n_items:
            break
        if not match_state_traces(tp.prefix(i), t.prefix(i), strict_final=False).ok:
            break
        x = _divergent_location(t.A(i - 1) - tp.A(i - 1), tp.s(i - 1), tp.s(i))
        if x is not None:
            return MatchReport(DIVERGE, divergence=i, notes=(f"{x} changes at lock {i}",))
    return full


def _divergent_location(candidates, before, at):
    for x in sorted(candidates):
        if before[x] != at[x]:
            return x
    return None


# -- match on transition traces ----------------------------------------------


def _windows(types):
    n = len(types)
    nl = [next_lock(types, i) for i in range(n)]
    pu = [prev_unlock(types, i) for i in range(n)]
    return nl, pu


def _union(sets, lo, hi):
    out = set()
    for k in range(max(lo, 0), hi):
        out |= sets[k]
    return out


def match_transition_traces(tp: TransitionTrace, t: TransitionTrace, strict_final: bool = True) -> MatchReport:
    """Evaluate the nested-lock matching constraints (numbered 1 to 20, plus 21)."""
    mode = "nested"
    if len(tp) != len(t):
        return _fail(mode, 1, Witness(min(len(tp), len(t)), detail=f"{len(tp)} vs {len(t)} tuples"))
    n = len(t)
    if n == 0:
        return _ok(mode)
    M = _same_locations(tp[0].pre_state.locations, t[0].pre_state.locations)
    for i in range(n):
        if (tp[i].lock_id, tp[i].op) != (t[i].lock_id, t[i].op):
            return _fail(mode, 3, Witness(i, detail=f"{tp[i].op} {tp[i].lock_id} vs {t[i].op} {t[i].lock_id}"))
    types = t.types()
    nl, pu = _windows(types)
    A = [u.accesses for u in t.tuples]
    Wt = [u.writes for u in t.tuples]
    Ap = [u.accesses for u in tp.tuples]
    for i in range(n):
        extra = tp[i].writes - _union(Wt, pu[i], nl[i])
        if extra:
            x = min(extra)
            return _fail(mode, 7, Witness(i, x, detail=f"{x} outside the allowed set"))
    for i in range(n):
        extra = tp[i].reads - _union(A, pu[i], nl[i])
        if extra:
            x = min(extra)
            return _fail(mode, 8, Witness(i, x, detail=f"{x} outside the allowed set"))
    for i in range(n):
        if types[i] != "lock":
            continue
        skip = _union(A, pu[i], i)
        sp, s = tp[i].pre_state, t[i].pre_state
        for x in M:
            if x not in skip and sp[x] != s[x]:
                return _fail(mode, 13, Witness(i, x, (sp[x], s[x])))
    for i in range(1, n):
        if types[i] != "lock":
            continue
        cand = _union(A, pu[i], i) - _union(Ap, pu[i], i)
        before, at = tp[i - 1].post_state, tp[i].pre_state
        for x in sorted(cand):
            if before[x] != at[x]:
                return _fail(mode, 15, Witness(i, x, (before[x], at[x])))
    for i in range(n):
        if types[i] != "unlock":
            continue
        skip = _union(Wt, i, nl[i])
        sp, s = tp[i].pre_state, t[i].pre_state
        for x in M:
            if x not in skip and sp[x] != s[x]:
                return _fail(mode, 20, Witness(i, x, (sp[x], s[x])))
    if strict_final:
        sp, s = tp[n - 1].post_state, t[n - 1].post_state
        for x in M:
            if sp[x] != s[x]:
                return _fail(mode, 21, Witness(n - 1, x, (sp[x], s[x])))
    return _ok(mode)


def match_n_or_diverge(tp: TransitionTrace, t: TransitionTrace, strict_final: bool = True) -> MatchReport:
    full = match_transition_traces(tp, t, strict_final)
    if full.ok:
        return full
    n = min(len(tp), len(t))
    types = t.types()
    for i in range(1, n):
        if types[i] != "lock":
            continue
        if not match_transition_traces(tp.prefix(i), t.prefix(i), strict_final=False).ok:
            break
        x = _nested_divergence(tp, t, i)
        if x is not None:
            return MatchReport(DIVERGE, mode="nested", divergence=i, notes=(f"{x} changes at lock {i}",))
    return full


def _nested_divergence(tp, t, i):
    j = prev_unlock(t, i)
    cand = _union([u.accesses for u in t.tuples], j, i) - _union([u.accesses for u in tp.tuples], j, i)
    return _divergent_location(cand, tp[i - 1].post_state, tp[i].pre_state)


# -- check / check_n ----------------------------------------------------------


@dataclass
class CheckResult:
    verdict: bool
    report: Optional[MatchReport] = None
    counterexample: Optional[tuple] = None  # (t' trace, t trace or prefix)
    stats: dict = field(default_factory=dict)
    certificate: Optional[list] = None
    mode: str = "non-nested"

    def __bool__(self):
        return self.verdict

    def to_dict(self):
        d = {"verdict": self.verdict, "mode": self.mode, "stats": dict(self.stats)}
        if self.report is not None:
            d["report"] = self.report.to_dict()
        return d


def _program(t, shared=None):
    if isinstance(t, str):
        return lang.parse_thread(t)
    return t


def _require_wf(t, mode):
    wf = lang.check_well_formed(t, mode)
    if not wf.ok:
        v = wf.violations[0]
        raise NotWellFormed(f"thread {t.name}: {v.message}", wf.violations)


def _mk(locs):
    return lambda v: State.from_tuple(locs, v)  # noqa: E731


def _finish_flat(code, pc, env, state, segs, mk):
    """Complete a primed trace without further context changes."""
    state = list(state)
    while pc < code.end:
        s = tuple(state)
        lid, ra, wa, su, rb, wb, pc, env = run_segment(code, pc, env, state)
        segs = segs + (SegmentPair(lid, mk(s), ra, wa, mk(su), rb, wb, mk(tuple(state))),)
    return StateTrace(segs)


def check(tp_thread, t_thread, domain=DEFAULT_DOMAIN, s0s=None, budget=DEFAULT_CHECK_BUDGET,
          strict_final: bool = True, certificate: bool = False) -> CheckResult:
    """Decide ``check(T', T)`` for non-nested threads.

    For a given ``t'`` the only candidate ``t`` is fixed: it starts in the
    same state and, at each later lock, takes the primed state outside the
    locations it accessed since its unlock and keeps its own values inside.
    So the two threads are run in lockstep while the primed side branches
    over every context change in ``domain``.  A primed prefix is settled
    as soon as the divergence clause applies.  The original side is not
    restricted to ``domain``: it receives whatever the primed side holds.
    """
    Tp, T = _program(tp_thread), _program(t_thread)
    _require_wf(Tp, "non-nested")
    _require_wf(T, "non-nested")
    locs = tuple(sorted(set(Tp.locations()) | set(T.locations())))
    idx = {x: i for i, x in enumerate(locs)}
    cp, c = compile_thread(Tp, locs), compile_thread(T, locs)
    mk = _mk(locs)
    domain = tuple(domain)
    stats = {"nodes": 0, "matched": 0, "diverged": 0}
    cert = [] if certificate else None
    pp0, ep0 = cp.start()
    p0, e0 = c.start()
    stack = [(pp0, ep0, s, p0, e0, s, (), ()) for s in reversed(_start_states(cp, s0s, domain))]
    while stack:
        pcp, envp, sp, pc, env, s, segsp, segs = stack.pop()
        stats["nodes"] += 1
        if stats["nodes"] > budget:
            raise BudgetExceeded(f"check explored more than {budget} nodes")
        k = len(segs)
        if k:
            pre = match_state_traces(StateTrace(segsp), StateTrace(segs), strict_final=False)
            if not pre.ok:
                full = _finish_flat(cp, pcp, envp, sp, segsp, mk)
                return CheckResult(False, pre, (full, StateTrace(segs)), stats)
            both_continue = pcp < cp.end and pc < c.end
            x = both_continue and _divergent_location(segs[-1].a_b - segsp[-1].a_b, segsp[-1].post_state, mk(sp))
            if x:
                stats["diverged"] += 1
                if cert is not None:
                    cert.append((StateTrace(segsp), StateTrace(segs), 2 * k))
                continue
        done_p, done = pcp >= cp.end, pc >= c.end
        if done_p or done:
            if done_p and done:
                rep = match_state_traces(StateTrace(segsp), StateTrace(segs), strict_final)
            else:
                rep = _fail("non-nested", 1, Witness(2 * k, detail="one thread terminates earlier"))
            if not rep.ok:
                full = _finish_flat(cp, pcp, envp, sp, segsp, mk)
                return CheckResult(False, rep, (full, StateTrace(segs)), stats)
            stats["matched"] += 1
            if cert is not None:
                cert.append((StateTrace(segsp), StateTrace(segs), None))
            continue
        statep, state = list(sp), list(s)
        lidp, rap, wap, sup, rbp, wbp, pcp2, envp2 = run_segment(cp, pcp, envp, statep)
        lid, ra, wa, su, rb, wb, pc2, env2 = run_segment(c, pc, env, state)
        postp, post = tuple(statep), tuple(state)
        segsp2 = segsp + (SegmentPair(lidp, mk(sp), rap, wap, mk(sup), rbp, wbp, mk(postp)),)
        segs2 = segs + (SegmentPair(lid, mk(s), ra, wa, mk(su), rb, wb, mk(post)),)
        if pcp2 >= cp.end:
            choices = [postp]
        else:
            choices = list(_havoc(postp, {idx[x] for x in rbp | wbp}, domain))
        keep = [idx[x] for x in rb | wb]
        children = []
        for sp2 in choices:
            s2 = list(sp2)
            for i in keep:
                s2[i] = post[i]
            children.append((pcp2, envp2, sp2, pc2, env2, tuple(s2), segsp2, segs2))
        stack.extend(reversed(children))
    return CheckResult(True, None, None, stats, cert)


def _finish_nested(code, pc, env, state, tuples, mk):
    state = list(state)
    while pc < code.end:
        s = tuple(state)
        op, lid, r, w, pc, env = run_portion(code, pc, env, state)
        tuples = tuples + (TransitionTuple(lid, op, mk(s), r, w, mk(tuple(state))),)
    return TransitionTrace(tuples)


def _window_indices(tuples, idx):
    types = [u.op for u in tuples] + ["lock"]
    j = prev_unlock(types, len(tuples))
    keep = set()
    for u in tuples[max(j, 0):]:
        keep.update(idx[x] for x in u.accesses)
    return keep


def check_n(tp_thread, t_thread, domain=DEFAULT_DOMAIN, s0s=None, budget=DEFAULT_CHECK_BUDGET,
            strict_final: bool = True, certificate: bool = False) -> CheckResult:
    """Decide ``check_n(T', T)`` for threads that may nest locks.

    Same lockstep scheme as :func:`check`, one synchronization operation
    at a time.  Race and unlock constraints of a tuple are settled once
    the next lock tuple (or termination) is reached.
    """
    mode = "nested"
    Tp, T = _program(tp_thread), _program(t_thread)
    _require_wf(Tp, "nested")
    _require_wf(T, "nested")
    locs = tuple(sorted(set(Tp.locations()) | set(T.locations())))
    idx = {x: i for i, x in enumerate(locs)}
    cp, c = compile_thread(Tp, locs), compile_thread(T, locs)
    for code in (cp, c):
        pc0, _ = code.start()
        if pc0 < code.end and code.instrs[pc0][0] not in ("lock", "unlock"):
            raise NotWellFormed(f"thread {code.name}: memory access before the first synchronization")
    mk = _mk(locs)
    domain = tuple(domain)
    stats = {"nodes": 0, "matched": 0, "diverged": 0}
    cert = [] if certificate else None
    pp0, ep0 = cp.start()
    p0, e0 = c.start()
    stack = [(pp0, ep0, s, p0, e0, s, (), ()) for s in reversed(_start_states(cp, s0s, domain))]
    while stack:
        pcp, envp, sp, pc, env, s, tp_, t_ = stack.pop()
        stats["nodes"] += 1
        if stats["nodes"] > budget:
            raise BudgetExceeded(f"check_n explored more than {budget} nodes")
        i = len(t_)
        done_p, done = pcp >= cp.end, pc >= c.end
        t_lock = not done and c.instrs[pc][0] == "lock"
        if i and t_lock:
            pre = match_transition_traces(TransitionTrace(tp_), TransitionTrace(t_), strict_final=False)
            if not pre.ok:
                full = _finish_nested(cp, pcp, envp, sp, tp_, mk)
                return CheckResult(False, pre, (full, TransitionTrace(t_)), stats, mode=mode)
            j = prev_unlock([u.op for u in t_] + ["lock"], i)
            cand = set()
            for u in t_[max(j, 0):]:
                cand |= u.accesses
            for u in tp_[max(j, 0):]:
                cand -= u.accesses
            x = _divergent_location(cand, tp_[-1].post_state, mk(sp))
            if x is not None:
                stats["diverged"] += 1
                if cert is not None:
                    cert.append((TransitionTrace(tp_), TransitionTrace(t_), i))
                continue
        if done_p or done:
            if done_p and done:
                rep = match_transition_traces(TransitionTrace(tp_), TransitionTrace(t_), strict_final)
            else:
                rep = _fail(mode, 1, Witness(i, detail="one thread terminates earlier"))
            if not rep.ok:
                full = _finish_nested(cp, pcp, envp, sp, tp_, mk)
                return CheckResult(False, rep, (full, TransitionTrace(t_)), stats, mode=mode)
            stats["matched"] += 1
            if cert is not None:
                cert.append((TransitionTrace(tp_), TransitionTrace(t_), None))
            continue
        statep, state = list(sp), list(s)
        opp, lidp, rp, wp, pcp2, envp2 = run_portion(cp, pcp, envp, statep)
        op, lid, r, w, pc2, env2 = run_portion(c, pc, env, state)
        postp, post = tuple(statep), tuple(state)
        tp2 = tp_ + (TransitionTuple(lidp, opp, mk(sp), rp, wp, mk(postp)),)
        t2 = t_ + (TransitionTuple(lid, op, mk(s), r, w, mk(post)),)
        if pcp2 < cp.end and cp.instrs[pcp2][0] == "lock":
            choices = list(_havoc(postp, _window_indices(tp2, idx), domain))
        else:
            choices = [postp]
        t_next_lock = pc2 < c.end and c.instrs[pc2][0] == "lock"
        keep = _window_indices(t2, idx) if t_next_lock else None
        children = []
        for sp2 in choices:
            if keep is None:
                s2 = post
            else:
                s2 = list(sp2)
                for k in keep:
                    s2[k] = post[k]
                s2 = tuple(s2)
            children.append((pcp2, envp2, sp2, pc2, env2, s2, tp2, t2))
        stack.extend(reversed(children))
    return CheckResult(True, None, None, stats, cert, mode=mode)


def check_exhaustive(tp_thread, t_thread, domain=DEFAULT_DOMAIN, s0s=None, nested=False,
                     strict_final: bool = True, budget=200_000) -> bool:
    """Literal double enumeration of the check definition over ``domain``.

    Both trace sets are enumerated with the same finite domain, so this
    agrees with :func:`check` only for threads whose values never leave
    ``domain``.  It exists as an independent reference for testing.
    """
    Tp, T = _program(tp_thread), _program(t_thread)
    locs = tuple(sorted(set(Tp.locations()) | set(T.locations())))
    enum = enumerate_Sn if nested else enumerate_S
    body = match_n_or_diverge if nested else match_or_diverge
    originals = list(enum(T, s0s, domain, locs, budget))
    for tp in enum(Tp, s0s, domain, locs, budget):
        if not any(body(tp, t, strict_final).ok for t in originals):
            return False
    return True


# -- linear-time trace-pair mode -----------------------------------------------

TRACE_PAIR_NOTE = (
    "state-lock and state-lock-stability are not evaluated separately: both traces start in the "
    "same state and no context acts between them, so each follows from state-unlock at the "
    "preceding unlock"
)


def _merged_init(tp: EventTrace, t: EventTrace) -> dict:
    a, b = dict(tp.explicit_init), dict(t.explicit_init)
    for x in a.keys() & b.keys():
        if a[x] != b[x]:
            raise InitMismatch(f"initial value of {x} differs: {a[x]} vs {b[x]}")
    merged = {**a, **b}
    return merged


def check_trace_pair(tp: EventTrace, t: EventTrace, mode: str = "non-nested",
                     strict_final: bool = True) -> MatchReport:
    """Match two single-execution event traces in one linear pass.

    ``tp`` is the transformed trace.  Both start from the same initial
    state (explicit ``init`` lines must agree).  Only locations written
    since they were last found equal are compared at each unlock, and set
    membership is answered from per-location stamps, so the cost is linear
    in the number of events.
    """
    from . import kernels

    if mode not in ("non-nested", "nested"):
        raise ValueError(f"unknown mode {mode!r}")
    for tr in (tp, t):
        bad = validate(tr, mode)
        if bad:
            raise NotWellFormed(f"trace is not well formed: {bad[0][1]} at event {bad[0][0]}", bad)
        if mode == "nested" and tr.events and not tr.events[0].is_sync:
            raise NotWellFormed("memory event before the first synchronization operation",
                                [(0, "first operation not sync")])
    init = _merged_init(tp, t)
    enc = kernels.encode_pair(tp, t, init)
    viol = kernels.match_kernel(*enc.arrays)
    return _report_from_kernel(viol, enc, mode, strict_final)


def _report_from_kernel(viol, enc, mode, strict_final):
    from . import kernels

    notes = (TRACE_PAIR_NOTE,)
    if mode == "non-nested":
        order = (
            (kernels.C_LENGTH, 1), (kernels.C_R_LOCK, 3), (kernels.C_W_LOCK, 4), (kernels.C_R_UNLOCK, 5),
            (kernels.C_W_UNLOCK, 6), (kernels.C_STATE, 9), (kernels.C_LOCKS, 10), (kernels.C_FINAL, 11),
        )
    else:
        order = (
            (kernels.C_LENGTH, 1), (kernels.C_LOCKS, 3), ((kernels.C_W_LOCK, kernels.C_W_UNLOCK), 7),
            ((kernels.C_R_LOCK, kernels.C_R_UNLOCK), 8), (kernels.C_STATE, 20), (kernels.C_FINAL, 21),
        )
    labels = FLAT_LABELS if mode == "non-nested" else NESTED_LABELS
    for cats, number in order:
        if number in (11, 21) and not strict_final:
            continue
        if not isinstance(cats, tuple):
            cats = (cats,)
        hits = [viol[c] for c in cats if viol[c][0] >= 0]
        if not hits:
            continue
        row = min(hits, key=lambda r: r[0])
        index, loc, vp, v = (int(z) for z in row)
        if number == 1:
            w = Witness(index, detail=f"{enc.n_sync_p} vs {enc.n_sync} synchronization operations")
        elif number in (3, 10) and labels[number] == "same-locks":
            w = Witness(index, detail="lock sequence differs")
        elif number in (9, 11, 20, 21):
            w = Witness(index, enc.locations[loc], (vp, v))
        else:
            x = enc.locations[loc]
            w = Witness(index, x, detail=f"{x} outside the allowed set")
        return MatchReport(MISMATCH, number, labels[number], w, mode, notes=notes)
    return MatchReport(MATCH, mode=mode, notes=notes)
