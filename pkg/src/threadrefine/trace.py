"""Event traces of single threads and the ``.trc`` text format.

One event per line::

    init x 0          # optional header lines
    lock m
    write x 2
    read y 0
    unlock m
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .errors import MissingValueOnMem, TraceSyntaxError, ValueOnSync

SYNC = ("lock", "unlock")
MEM = ("read", "write")


class Event(NamedTuple):
    kind: str
    target: str
    value: Optional[int] = None

    @property
    def is_sync(self):
        return self.kind in SYNC

    @property
    def is_mem(self):
        return self.kind in MEM

    def __str__(self):
        if self.value is None:
            return f"{self.kind} {self.target}"
        return f"{self.kind} {self.target} {self.value}"


@dataclass(frozen=True)
class EventTrace:
    events: tuple = ()
    explicit_init: tuple = field(default=(), compare=True)  # sorted (loc, value) pairs

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(Event(*e) for e in self.events))
        init = self.explicit_init
        if isinstance(init, dict):
            init = init.items()
        object.__setattr__(self, "explicit_init", tuple(sorted((k, int(v)) for k, v in init)))
        for e in self.events:
            if e.is_sync and e.value is not None:
                raise ValueOnSync(f"{e.kind} carries a value")
            if e.is_mem and e.value is None:
                raise MissingValueOnMem(f"{e.kind} {e.target} has no value")
            if e.kind not in SYNC + MEM:
                raise TraceSyntaxError(f"unknown event kind {e.kind!r}")

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def locations(self) -> tuple:
        found = {e.target for e in self.events if e.is_mem}
        found.update(k for k, _ in self.explicit_init)
        return tuple(sorted(found))

    def locks(self) -> tuple:
        return tuple(sorted({e.target for e in self.events if e.is_sync}))

    @property
    def init(self) -> dict:
        """Initial state over all mentioned locations (unlisted ones are 0)."""
        d = {x: 0 for x in self.locations()}
        d.update(self.explicit_init)
        return d

    def lock_count(self) -> int:
        return sum(1 for e in self.events if e.kind == "lock")

    def __str__(self):
        return emit_trace(self)


def parse_trace(text: str) -> EventTrace:
    events, init = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        kind = toks[0]
        if kind == "init":
            if len(toks) != 3:
                raise TraceSyntaxError("expected 'init <loc> <int>'", lineno)
            if events:
                raise TraceSyntaxError("init lines must precede events", lineno)
            init[toks[1]] = _int(toks[2], lineno)
        elif kind in SYNC:
            if len(toks) == 3:
                raise ValueOnSync(f"{kind} takes no value", lineno)
            if len(toks) != 2:
                raise TraceSyntaxError(f"expected '{kind} <id>'", lineno)
            events.append(Event(kind, toks[1]))
        elif kind in MEM:
            if len(toks) == 2:
                raise MissingValueOnMem(f"{kind} needs a value", lineno)
            if len(toks) != 3:
                raise TraceSyntaxError(f"expected '{kind} <loc> <int>'", lineno)
            events.append(Event(kind, toks[1], _int(toks[2], lineno)))
        else:
            raise TraceSyntaxError(f"unknown event kind {kind!r}", lineno)
    return EventTrace(tuple(events), init)


def _int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise TraceSyntaxError(f"expected integer, got {tok!r}", lineno) from None


def emit_trace(t: EventTrace) -> str:
    lines = [f"init {x} {v}" for x, v in t.explicit_init]
    lines.extend(str(e) for e in t.events)
    return "\n".join(lines) + ("\n" if lines else "")


def read_trace(path) -> EventTrace:
    with open(path, encoding="utf-8") as f:
        return parse_trace(f.read())


def write_trace(t: EventTrace, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(emit_trace(t))


def validate(t: EventTrace, mode: str = "non-nested") -> list:
    """Structural violations of ``t`` as ``(index, message)``; empty if valid."""
    out = []
    if mode == "non-nested":
        held = None
        seen_lock = False
        for i, e in enumerate(t.events):
            if not seen_lock and e.kind != "lock":
                out.append((i, "first operation not lock"))
                seen_lock = True
                if e.kind != "unlock":
                    continue
            if e.kind == "lock":
                seen_lock = True
                if held is not None:
                    out.append((i, f"lock {e.target} while holding {held}"))
                held = e.target
            elif e.kind == "unlock":
                if held is None:
                    out.append((i, f"unlock {e.target} without preceding lock"))
                elif held != e.target:
                    out.append((i, f"unlock {e.target} does not match lock {held}"))
                held = None
        if held is not None:
            out.append((len(t.events), f"last synchronization is lock {held}"))
    elif mode == "nested":
        held = set()
        for i, e in enumerate(t.events):
            if e.kind == "lock":
                if e.target in held:
                    out.append((i, f"lock {e.target} re-acquired while held"))
                held.add(e.target)
            elif e.kind == "unlock":
                if e.target not in held:
                    out.append((i, f"unlock {e.target} which is not held"))
                held.discard(e.target)
        if held:
            out.append((len(t.events), "locks still held at end: " + ", ".join(sorted(held))))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


def coherence_violations(t: EventTrace) -> list:
    """Reads whose value differs from the last preceding write (or init)."""
    cur = dict(t.init)
    out = []
    for i, e in enumerate(t.events):
        if e.kind == "write":
            cur[e.target] = e.value
        elif e.kind == "read" and cur.get(e.target, 0) != e.value:
            out.append((i, f"read {e.target} {e.value} but current value is {cur.get(e.target, 0)}"))
    return out


def from_run(events, init=None) -> EventTrace:
    """Build a trace from ``(kind, target, value)`` tuples of a thread run."""
    return EventTrace(tuple(Event(k, x, v) for k, x, v in events), init or {})
