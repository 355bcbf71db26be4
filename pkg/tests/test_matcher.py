import random

import pytest

from threadrefine import harness
from threadrefine.errors import BudgetExceeded, InitMismatch, NotWellFormed
from threadrefine.lang import parse_thread
from threadrefine.matcher import (
    DIVERGE,
    MATCH,
    MISMATCH,
    MatchReport,
    Witness,
    check,
    check_exhaustive,
    check_n,
    check_trace_pair,
    match_or_diverge,
    match_state_traces,
    match_transition_traces,
)
from threadrefine.state_traces import SegmentPair, StateTrace, build_state_trace, build_transition_trace
from threadrefine.trace import EventTrace, parse_trace, read_trace

from conftest import DATA, read

XYZ = ("x", "y", "z")
ORIG = "lock(l); x = 1; y = 1; unlock(l); y = 2;"
ROACH = "lock(l); x = 1; y = 1; y = 2; unlock(l);"
INVERSE = "lock(l); x = 1; unlock(l); y = 1; y = 2;"


def st(src, locs=XYZ):
    return build_state_trace(parse_trace(src), locs)


def tt(src, locs=XYZ):
    return build_transition_trace(parse_trace(src), locs)


def with_lock_state(trace, k, **changes):
    """Copy of ``trace`` whose segment ``k`` starts in a modified state."""
    segs = list(trace.segments)
    s = segs[k]
    segs[k] = SegmentPair(s.lock_id, s.lock_state.replace(**changes), s.r_a, s.w_a, s.unlock_state,
                          s.r_b, s.w_b, s.post_state)
    return StateTrace(tuple(segs))


class TestReport:
    def test_mismatch_needs_witness(self):
        with pytest.raises(ValueError):
            MatchReport(MISMATCH, 4, "race-even-W")
        with pytest.raises(ValueError):
            MatchReport(MATCH, witness=Witness(0))

    def test_json_shape(self):
        r = match_state_traces(st("lock l\nwrite z 1\nunlock l"), st("lock l\nunlock l"))
        assert r.to_json() == ('{"constraint": 4, "label": "race-even-W", "mode": "non-nested", "verdict": '
                               '"mismatch", "witness": {"detail": "z outside the allowed set", "index": 0, '
                               '"location": "z"}}')
        assert not r and not r.ok


class TestMatchStateTraces:
    def test_left_and_right_traces(self):
        tp = build_state_trace(read_trace(DATA / "opt.trc"), XYZ)
        t = build_state_trace(read_trace(DATA / "orig.trc"), XYZ)
        assert match_state_traces(tp, t).verdict == MATCH

    def test_roach_motel(self):
        t = st("lock l\nwrite x 1\nwrite y 1\nunlock l\nwrite y 2", ("x", "y"))
        tp = st("lock l\nwrite x 1\nwrite y 1\nwrite y 2\nunlock l", ("x", "y"))
        assert tp.segments[0].unlock_state != t.segments[0].unlock_state
        assert match_state_traces(tp, t).ok

    def test_inverse_roach_motel(self):
        t = st("lock l\nwrite x 1\nwrite y 1\nunlock l\nwrite y 2", ("x", "y"))
        tp = st("lock l\nwrite x 1\nunlock l\nwrite y 1\nwrite y 2", ("x", "y"))
        assert match_state_traces(tp, t).ok

    def test_reflexive(self):
        t = build_state_trace(read_trace(DATA / "orig.trc"), XYZ)
        assert match_state_traces(t, t).ok

    @pytest.mark.parametrize("tp_src,t_src,number,label", [
        ("lock l\nunlock l\nlock l\nunlock l", "lock l\nunlock l", 1, "length"),
        ("lock l\nread z 0\nunlock l", "lock l\nunlock l", 3, "race-even-R"),
        ("lock l\nwrite z 1\nunlock l", "lock l\nunlock l", 4, "race-even-W"),
        ("lock l\nunlock l\nread z 0", "lock l\nunlock l", 5, "race-odd-R"),
        ("lock l\nunlock l\nwrite z 0", "lock l\nunlock l\nread z 0", 6, "race-odd-W"),
        ("lock l\nwrite x 2\nunlock l", "lock l\nwrite x 1\nunlock l", 9, "state-unlock"),
        ("lock m\nunlock m", "lock l\nunlock l", 10, "same-locks"),
    ])
    def test_each_constraint(self, tp_src, t_src, number, label):
        r = match_state_traces(st(tp_src), st(t_src))
        assert (r.verdict, r.constraint, r.label) == (MISMATCH, number, label)

    def test_neighbouring_windows(self):
        # a write moved from after the unlock into the section is covered by W_{i+1}
        t = st("lock l\nunlock l\nwrite x 1\nlock l\nunlock l")
        tp = st("lock l\nwrite x 1\nunlock l\nlock l\nunlock l")
        assert match_state_traces(tp, t).ok
        # the same write moved into the second section is covered by W_{i-1}
        tp2 = st("lock l\nunlock l\nlock l\nwrite x 1\nunlock l")
        assert match_state_traces(tp2, t).ok

    def test_lock_state(self):
        t = st("lock l\nunlock l")
        tp = with_lock_state(t, 0, x=1)
        r = match_state_traces(tp, t)
        assert (r.constraint, r.label, r.witness.values) == (7, "state-lock", (1, 0))

    def test_lock_state_stability(self):
        # t reads x between the sections; t' does not, but x changes at t''s second lock
        t = st("lock l\nunlock l\nread x 0\nlock l\nunlock l")
        tp = with_lock_state(st("lock l\nunlock l\nlock l\nunlock l"), 1, x=2)
        t2 = with_lock_state(t, 1, x=0)
        r = match_state_traces(tp, t2)
        assert (r.constraint, r.label, r.witness.location) == (8, "state-lock-stability", "x")
        d = match_or_diverge(tp, t2)
        assert d.verdict == DIVERGE and d.divergence == 2

    def test_writes_after_last_unlock(self):
        t = st("lock l\nunlock l\nwrite x 2")
        tp = st("lock l\nunlock l\nwrite x 1")
        assert match_state_traces(tp, t, strict_final=False).ok
        r = match_state_traces(tp, t)
        assert (r.constraint, r.label) == (11, "state-final")


class TestMatchTransitionTraces:
    def test_flat_specialisation(self):
        pairs = [("opt.trc", "orig.trc"), ("opt_bad.trc", "orig.trc"), ("orig.trc", "opt.trc")]
        for a, b in pairs:
            ta, tb = read_trace(DATA / a), read_trace(DATA / b)
            flat = match_state_traces(build_state_trace(ta, XYZ), build_state_trace(tb, XYZ))
            nested = match_transition_traces(build_transition_trace(ta, XYZ), build_transition_trace(tb, XYZ))
            assert flat.ok == nested.ok

    def test_write_moves_into_inner_section(self):
        t = tt("lock l\nlock m\nunlock m\nwrite x 1\nunlock l")
        tp = tt("lock l\nlock m\nwrite x 1\nunlock m\nunlock l")
        assert match_transition_traces(tp, t).ok

    def test_write_moves_out_of_inner_section(self):
        t = tt("lock l\nlock m\nwrite x 1\nunlock m\nunlock l")
        tp = tt("lock l\nlock m\nunlock m\nwrite x 1\nunlock l")
        r = match_transition_traces(tp, t)
        assert (r.constraint, r.label, r.witness.location) == (7, "race-W", "x")

    def test_lock_order(self):
        r = match_transition_traces(tt("lock m\nlock l\nunlock l\nunlock m"), tt("lock l\nlock m\nunlock m\nunlock l"))
        assert (r.constraint, r.label) == (3, "same-locks")

    def test_state_unlock(self):
        r = match_transition_traces(tt("lock l\nwrite x 2\nunlock l"), tt("lock l\nwrite x 1\nunlock l"))
        assert (r.constraint, r.label) == (20, "state-unlock")


class TestCheck:
    def test_roach_motel(self):
        assert check(parse_thread(ROACH), parse_thread(ORIG)).verdict
        assert check_n(parse_thread(ROACH), parse_thread(ORIG)).verdict

    def test_inverse_roach_motel(self):
        assert check(parse_thread(INVERSE), parse_thread(ORIG)).verdict
        assert check_n(parse_thread(INVERSE), parse_thread(ORIG)).verdict

    def test_reverse_direction_fails(self):
        # moving y = 2 back out of the section is not allowed ...
        r = check(parse_thread(ORIG), parse_thread(ROACH))
        assert not r.verdict and r.report.label == "race-odd-W" and r.report.witness.location == "y"
        # ... while pushing y = 1 back into it is a roach motel move again
        assert check(parse_thread(ORIG), parse_thread(INVERSE)).verdict

    def test_motivating_threads(self):
        tp, t = parse_thread(read("opt.thr")), parse_thread(read("orig.thr"))
        assert check(tp, t).verdict and check_n(tp, t).verdict

    def test_fresh_write(self):
        tp = parse_thread("lock(l); x = 1; y = 1; z = 1; unlock(l); y = 2;")
        r = check(tp, parse_thread(ORIG))
        assert not r.verdict
        assert (r.report.constraint, r.report.witness.location) == (4, "z")
        tprime, torig = r.counterexample
        assert "z" in tprime.W(0) and "z" not in torig.A(0)
        rn = check_n(tp, parse_thread(ORIG))
        assert not rn.verdict and rn.report.label == "race-W"

    def test_nested_fresh_write(self):
        t = parse_thread("lock(l); lock(m); x = 1; unlock(m); y = 1; unlock(l);")
        tp = parse_thread("lock(l); lock(m); x = 1; unlock(m); y = 1; z = 1; unlock(l);")
        assert check_n(t, t).verdict
        assert not check_n(tp, t).verdict

    def test_nested_move_into_inner_section(self):
        t = parse_thread("lock(l); lock(m); x = 1; unlock(m); y = 1; unlock(l);")
        tp = parse_thread("lock(l); lock(m); x = 1; y = 1; unlock(m); unlock(l);")
        assert check_n(tp, t).verdict
        assert not check_n(t, tp).verdict

    def test_reflexive(self):
        for src in (ORIG, ROACH, read("orig.thr"), ""):
            t = parse_thread(src)
            assert check(t, t).verdict and check_n(t, t).verdict

    def test_value_after_last_unlock(self):
        t, tp = parse_thread("lock(l); unlock(l); x = 2;"), parse_thread("lock(l); unlock(l); x = 1;")
        assert check(tp, t, strict_final=False).verdict
        r = check(tp, t)
        assert not r.verdict and r.report.label == "state-final"

    def test_certificate(self):
        r = check(parse_thread(ROACH), parse_thread(ORIG), certificate=True)
        assert r.certificate and all(len(c) == 3 for c in r.certificate)

    def test_requires_well_formed(self):
        with pytest.raises(NotWellFormed):
            check(parse_thread("x = 1;"), parse_thread(ORIG))

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            check(parse_thread(read("opt.thr")), parse_thread(read("orig.thr")), budget=3)

    def test_agrees_with_exhaustive_search(self):
        rng = random.Random(5)
        seen = {True: 0, False: 0}
        for _ in range(60):
            t, tp, _ = harness.gen_thread_pair(rng, locations=("x", "y"), sections=(1, 2), stmts=(0, 2))
            got = check(tp, t, domain=(0, 1)).verdict
            assert got == check_exhaustive(tp, t, domain=(0, 1)), (str(t), str(tp))
            assert check_n(tp, t, domain=(0, 1)).verdict == got
            seen[got] += 1
        assert seen[True] and seen[False]


class TestTracePair:
    def test_left_and_right(self):
        r = check_trace_pair(read_trace(DATA / "opt.trc"), read_trace(DATA / "orig.trc"))
        assert r.verdict == MATCH and r.notes

    def test_identical(self):
        t = read_trace(DATA / "orig.trc")
        assert check_trace_pair(t, t).ok

    def test_missing_final_write(self):
        r = check_trace_pair(read_trace(DATA / "opt_bad.trc"), read_trace(DATA / "orig.trc"))
        assert (r.constraint, r.label, r.witness.index, r.witness.location, r.witness.values) == (
            9, "state-unlock", 3, "x", (2, 0))
        rn = check_trace_pair(read_trace(DATA / "opt_bad.trc"), read_trace(DATA / "orig.trc"), mode="nested")
        assert (rn.constraint, rn.label) == (20, "state-unlock")

    def test_init_mismatch(self):
        a = parse_trace("init x 1\nlock l\nunlock l")
        b = parse_trace("init x 2\nlock l\nunlock l")
        with pytest.raises(InitMismatch):
            check_trace_pair(a, b)

    def test_not_well_formed(self):
        with pytest.raises(NotWellFormed):
            check_trace_pair(parse_trace("write x 1"), parse_trace("lock l\nunlock l"))

    def test_agrees_with_built_state_traces(self):
        for bug in (None,) + harness.BUG_KINDS:
            cfg = harness.GenConfig(seed=11, length=(10, 30), locks=(1, 4), n_transforms=(0, 4), bug=bug, pairs=40)
            for p in harness.gen_corpus(cfg):
                locs = tuple(sorted(set(p.transformed.locations()) | set(p.original.locations())))
                slow = match_state_traces(build_state_trace(p.transformed, locs), build_state_trace(p.original, locs))
                fast = check_trace_pair(p.transformed, p.original)
                assert fast.verdict == slow.verdict
                if slow.constraint in (7, 8):
                    # no havoc between single runs: a lock-state difference shows at the unlock before it
                    assert fast.label == "state-unlock"
                else:
                    assert fast.constraint == slow.constraint

    def test_unknown_mode(self):
        t = read_trace(DATA / "orig.trc")
        with pytest.raises(ValueError):
            check_trace_pair(t, t, mode="sideways")

    def test_empty(self):
        e = EventTrace(())
        assert check_trace_pair(e, e).ok
