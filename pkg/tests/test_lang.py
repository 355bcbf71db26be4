import pytest

from threadrefine.errors import DuplicateLocal, ThreadSyntaxError, UnknownIdentifier
from threadrefine.lang import (
    AssignLocal,
    AssignShared,
    BinOp,
    Const,
    If,
    Local,
    Lock,
    Shared,
    ThreadProgram,
    Unlock,
    While,
    check_well_formed,
    eval_binop,
    parse_thread,
    pretty,
    wrap64,
)

from conftest import read

ORIG = "lock(l); x = 1; x = 2; unlock(l); a = x; b = y; lock(l); if (b == 0) { x = 0; } unlock(l);"


def test_parse_motivating_thread():
    t = parse_thread("local a, b; " + ORIG)
    assert t.body == (
        Lock("l"),
        AssignShared("x", Const(1)),
        AssignShared("x", Const(2)),
        Unlock("l"),
        AssignLocal("a", Shared("x")),
        AssignLocal("b", Shared("y")),
        Lock("l"),
        If(BinOp("==", Local("b"), Const(0)), (AssignShared("x", Const(0)),)),
        Unlock("l"),
    )
    assert t.locations() == ("x", "y")
    assert t.locks() == ("l",)


def test_undeclared_names_are_shared():
    # without a `local` line every identifier is a shared location
    t = parse_thread(ORIG)
    assert t.decls == ()
    assert set(t.locations()) == {"a", "b", "x", "y"}


def test_empty_source():
    t = parse_thread("")
    assert t.body == () and t.decls == ()


def test_missing_semicolon_reports_position():
    with pytest.raises(ThreadSyntaxError) as ei:
        parse_thread("lock(l) x = 1;")
    assert (ei.value.line, ei.value.col, ei.value.expected) == (1, 9, "';'")


def test_duplicate_local():
    with pytest.raises(DuplicateLocal):
        parse_thread("local a, a;")


def test_unknown_identifier_with_fixed_shared_set():
    with pytest.raises(UnknownIdentifier):
        parse_thread("x = q;", shared={"x"})


def test_loops_need_a_bound():
    with pytest.raises(ThreadSyntaxError) as ei:
        parse_thread("while (x < 1) { x = 1; }")
    assert ei.value.expected == "'bound'"
    t = parse_thread("while (x < 2) bound 3 { x = x + 1; }")
    assert isinstance(t.body[0], While) and t.body[0].bound == 3


def test_comments_and_else():
    t = parse_thread("# header\nlocal a;\na = x; # trailing\nif (a) { y = 1; } else { y = 2; }\n")
    assert t.body[1].orelse == (AssignShared("y", Const(2)),)


def test_pretty_is_a_fixpoint():
    src = read("opt.thr")
    once = pretty(parse_thread(src))
    assert pretty(parse_thread(once)) == once


@pytest.mark.parametrize("op,a,b,want", [
    ("+", 2, 3, 5), ("-", 2, 3, -1), ("*", 4, 5, 20), ("==", 1, 1, 1), ("!=", 1, 1, 0),
    ("<", 1, 2, 1), ("<=", 2, 2, 1), ("&&", 1, 0, 0), ("||", 0, 3, 1),
])
def test_operators(op, a, b, want):
    assert eval_binop(op, a, b) == want


def test_values_wrap_at_64_bits():
    assert wrap64(2 ** 63) == -(2 ** 63)
    assert eval_binop("+", 2 ** 63 - 1, 1) == -(2 ** 63)


class TestWellFormed:
    def test_motivating_thread_is_flat(self):
        assert check_well_formed(parse_thread(ORIG), "non-nested").ok

    def test_first_operation_must_be_lock(self):
        wf = check_well_formed(parse_thread("x = 1; lock(l); unlock(l);"), "non-nested")
        assert not wf.ok
        assert wf.violations[0].message == "first operation not lock"
        assert wf.violations[0].pos == (1, 1)

    def test_nesting_depends_on_mode(self):
        t = parse_thread("lock(l); lock(m); unlock(m); unlock(l);")
        assert not check_well_formed(t, "non-nested").ok
        assert check_well_formed(t, "nested").ok

    def test_trailing_lock(self):
        wf = check_well_formed(parse_thread("lock(l);"), "non-nested")
        assert not wf.ok and "last synchronization" in wf.violations[0].message

    def test_reacquire_rejected(self):
        wf = check_well_formed(parse_thread("lock(l); lock(l); unlock(l); unlock(l);"), "nested")
        assert any("re-acquired" in v.message for v in wf.violations)

    def test_path_sensitive(self):
        t = parse_thread("lock(l); if (x == 1) { unlock(l); lock(l); } unlock(l);")
        assert check_well_formed(t, "non-nested").ok
        t = parse_thread("lock(l); if (x == 1) { unlock(l); } unlock(l);")
        assert not check_well_formed(t, "nested").ok

    def test_lock_inside_loop(self):
        t = parse_thread("local i; while (i < 2) bound 2 { lock(l); x = x + 1; unlock(l); i = i + 1; }")
        assert check_well_formed(t, "non-nested").ok
        # a shared read in the condition happens before the first lock
        t = parse_thread("while (x < 2) bound 2 { lock(l); x = x + 1; unlock(l); }")
        assert not check_well_formed(t, "non-nested").ok

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            check_well_formed(ThreadProgram(), "weird")
