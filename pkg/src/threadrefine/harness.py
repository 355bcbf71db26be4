"""Corpus generation and benchmarking.

Two generators live here.  The event-level one builds long single-thread
traces and transformed copies for timing the matchers.  The program-level
one builds small threads, programs and contexts for the semantic
experiments (race detector agreement, soundness sampling).
"""
from __future__ import annotations

import csv
import json
import math
import platform
import random
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import lang, oracle
from .lang import AssignLocal, AssignShared, Const, If, Local, Lock, Shared, ThreadProgram, Unlock, BinOp
from .matcher import check_trace_pair
from .trace import Event, EventTrace

BUG_KINDS = ("value-corruption", "fresh-location", "lock-edit")
DEFAULT_MIX = {
    oracle.REORDER: 0.4,
    oracle.ELIM_WRITE: 0.2,
    oracle.ELIM_READ: 0.2,
    oracle.INTRO_READ: 0.2,
}
CSV_HEADER = ("bin", "len", "locks", "state_us", "oracle_us", "verdict")


@dataclass(frozen=True)
class GenConfig:
    seed: int = 1
    length: tuple = (20, 40)
    locks: tuple = (2, 4)
    n_locations: int = 4
    domain: tuple = (0, 1, 2)
    transform_mix: tuple = tuple(sorted(DEFAULT_MIX.items()))
    n_transforms: tuple = (0, 3)
    bug: Optional[str] = None
    pairs: int = 1
    label: str = ""
    lock_names: int = 2

    def __post_init__(self):
        mix = self.transform_mix
        if isinstance(mix, dict):
            mix = tuple(sorted(mix.items()))
            object.__setattr__(self, "transform_mix", mix)
        for name in ("length", "locks", "n_transforms"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (int(lo), int(hi)))
            if lo > hi or lo < 0:
                raise ValueError(f"{name}: empty range {lo}..{hi}")
        if self.locks[0] < 1:
            raise ValueError("traces need at least one lock")
        if 2 * self.locks[1] > self.length[1]:
            raise ValueError("lock count does not fit the trace length")
        total = sum(p for _, p in mix)
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"transformation probabilities sum to {total}, not 1")
        unknown = [k for k, _ in mix if k not in oracle.KINDS]
        if unknown:
            raise ValueError(f"unknown transformation kinds: {unknown}")
        if self.bug is not None and self.bug not in BUG_KINDS:
            raise ValueError(f"unknown bug kind {self.bug!r}")
        if len(self.domain) < 2:
            raise ValueError("value domain needs at least two values")
        if self.n_locations < 1 or self.pairs < 0:
            raise ValueError("n_locations must be positive and pairs non-negative")

    def to_dict(self):
        d = asdict(self)
        d["transform_mix"] = dict(self.transform_mix)
        return d


@dataclass(frozen=True)
class GenPair:
    transformed: EventTrace
    original: EventTrace
    truth: str  # match | mismatch
    transforms: tuple = ()
    bug: Optional[str] = None


# -- event-level generation ----------------------------------------------------


def gen_trace(rng: random.Random, length: int, locks: int, n_locations: int, domain, lock_names=2) -> EventTrace:
    """A random read-coherent non-nested trace with ``locks`` critical sections."""
    locs = [f"x{i}" for i in range(n_locations)]
    names = [f"m{i}" for i in range(max(1, lock_names))]
    n_mem = length - 2 * locks
    per_block = [0] * (2 * locks)
    for _ in range(n_mem):
        per_block[rng.randrange(2 * locks)] += 1
    cur = {x: 0 for x in locs}
    events = []
    for k in range(locks):
        lid = rng.choice(names)
        for half, sync in enumerate(("lock", "unlock")):
            events.append(Event(sync, lid))
            for _ in range(per_block[2 * k + half]):
                x = rng.choice(locs)
                if rng.random() < 0.5:
                    events.append(Event("read", x, cur[x]))
                else:
                    v = rng.choice(domain)
                    cur[x] = v
                    events.append(Event("write", x, v))
    return EventTrace(tuple(events))


def _block_ranges(events):
    """(start, end) index ranges of memory blocks; block k follows sync k - 1."""
    ranges, start = [], 0
    for i, e in enumerate(events):
        if e.is_sync:
            ranges.append((start, i))
            start = i + 1
    ranges.append((start, len(events)))
    return ranges


def _candidates(kind, t: EventTrace, windows):
    ev = t.events
    out = []
    if kind == oracle.REORDER:
        for p in range(len(ev) - 1):
            a, b = ev[p], ev[p + 1]
            if a.is_mem and b.is_mem and not oracle._conflict(a, b):
                out.append(oracle.Transformation(kind, p))
    elif kind == oracle.ELIM_WRITE:
        for p, e in enumerate(ev):
            if e.kind != "write":
                continue
            for f in ev[p + 1:]:
                if f.is_sync:
                    break
                if f.target == e.target:
                    if f.kind == "write":
                        out.append(oracle.Transformation(kind, p))
                    break
    elif kind == oracle.ELIM_READ:
        out = [oracle.Transformation(kind, p) for p, e in enumerate(ev) if e.kind == "read"]
    elif kind == oracle.INTRO_READ:
        for k, (lo, hi) in enumerate(_block_ranges(ev)):
            if k == 0:
                continue
            for x in sorted(windows[k]):
                out.append(oracle.Transformation(kind, rng_slot(lo, hi), x))
    return out


def rng_slot(lo, hi):
    """Placeholder position for an introduction; the caller draws the slot."""
    return (lo, hi)


def _random_transformation(rng, t, windows, mix):
    kinds = [k for k, _ in mix]
    weights = [p for _, p in mix]
    order = []
    pool = list(zip(kinds, weights))
    while pool:
        k = rng.choices([k for k, _ in pool], [w for _, w in pool])[0]
        order.append(k)
        pool = [(a, w) for a, w in pool if a != k]
    for kind in order:
        cands = _candidates(kind, t, windows)
        if not cands:
            continue
        x = rng.choice(cands)
        if kind == oracle.INTRO_READ:
            lo, hi = x.position
            x = oracle.Transformation(kind, rng.randint(lo, hi), x.location)
        return x
    return None


def _flip(rng, v, domain):
    others = [d for d in domain if d != v]
    return rng.choice(others) if others else v + 1


def _recohere(events, start, loc, value):
    """Update reads of ``loc`` after ``start`` until the next write to it."""
    for i in range(start + 1, len(events)):
        e = events[i]
        if e.target != loc or e.is_sync:
            continue
        if e.kind == "write":
            break
        events[i] = Event("read", loc, value)


def inject_bug(rng, tp: EventTrace, t: EventTrace, kind: str, domain) -> EventTrace:
    ev = list(tp.events)
    if kind == "lock-edit":
        locks = [i for i, e in enumerate(ev) if e.kind == "lock"]
        i = rng.choice(locks)
        lid = ev[i].target
        fresh = "m_edit"
        ev[i] = Event("lock", fresh)
        for j in range(i + 1, len(ev)):
            if ev[j].kind == "unlock" and ev[j].target == lid:
                ev[j] = Event("unlock", fresh)
                break
        return EventTrace(tuple(ev), tp.explicit_init)
    if kind == "fresh-location":
        ranges = _block_ranges(ev)[1:]
        lo, hi = rng.choice(ranges)
        p = rng.randint(lo, hi)
        e = Event("read", "fresh", 0) if rng.random() < 0.5 else Event("write", "fresh", rng.choice(domain))
        ev.insert(p, e)
        return EventTrace(tuple(ev), tp.explicit_init)
    if kind != "value-corruption":
        raise ValueError(f"unknown bug kind {kind!r}")
    rp, ro = _block_ranges(ev), _block_ranges(t.events)

    def writes(events, r):
        return {events[i].target for i in range(*r) if events[i].kind == "write"}

    cands = []
    for k in range(1, len(rp) - 1, 2):  # blocks after a lock
        after = writes(ev, rp[k + 1]) | writes(t.events, ro[k + 1])
        last = {}
        for i in range(*rp[k]):
            if ev[i].kind == "write":
                last[ev[i].target] = i
        cands.extend((i, x) for x, i in last.items() if x not in after)
    if cands:
        i, x = rng.choice(sorted(cands))
        v = _flip(rng, ev[i].value, domain)
        ev[i] = Event("write", x, v)
        _recohere(ev, i, x, v)
        return EventTrace(tuple(ev), tp.explicit_init)
    # no visible write to corrupt: add one at the end of a critical section
    k = rng.randrange(1, len(rp) - 1, 2)
    after = writes(ev, rp[k + 1]) | writes(t.events, ro[k + 1])
    locs = sorted({e.target for e in t.events if e.is_mem} - after) or ["fresh"]
    x = rng.choice(locs)
    p = rp[k][1]
    cur = tp.init.get(x, 0)
    for e in ev[:p]:
        if e.kind == "write" and e.target == x:
            cur = e.value
    v = _flip(rng, cur, domain)
    ev.insert(p, Event("write", x, v))
    _recohere(ev, p, x, v)
    return EventTrace(tuple(ev), tp.explicit_init)


def gen_pair(cfg: GenConfig, index: int = 0) -> GenPair:
    """Generate pair number ``index`` of ``cfg`` (deterministic)."""
    rng = random.Random(f"{cfg.seed}:{index}")
    locks = rng.randint(*cfg.locks)
    length = rng.randint(max(cfg.length[0], 2 * locks), max(cfg.length[1], 2 * locks))
    t = gen_trace(rng, length, locks, cfg.n_locations, cfg.domain, cfg.lock_names)
    windows = oracle._windows(*oracle._blocks(t))
    tp = t
    seq = []
    for _ in range(rng.randint(*cfg.n_transforms)):
        x = _random_transformation(rng, tp, windows, cfg.transform_mix)
        if x is None:
            break
        tp = oracle.apply(tp, x)
        seq.append(x)
    if cfg.bug:
        tp = inject_bug(rng, tp, t, cfg.bug, cfg.domain)
        return GenPair(tp, t, "mismatch", tuple(seq), cfg.bug)
    return GenPair(tp, t, "match", tuple(seq), None)


def gen_corpus(cfg: GenConfig):
    for i in range(cfg.pairs):
        yield gen_pair(cfg, i)


# -- benchmarking --------------------------------------------------------------


@dataclass
class BenchRecord:
    bin: str
    pair_id: int
    len: int
    locks: int
    state_us: float
    oracle_us: Optional[float]
    verdict: str
    truth: str
    oracle_verdict: Optional[str] = None
    transforms: int = 0

    def csv_row(self):
        o = "" if self.oracle_us is None else f"{self.oracle_us:.3f}"
        return [self.bin, self.len, self.locks, f"{self.state_us:.3f}", o, self.verdict]


def _best_of(fn, repeats):
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        out = fn()
        dt = (time.perf_counter_ns() - t0) / 1000.0
        best = min(best, dt)
    return best, out


def bench_pair(pair: GenPair, repeats=3, with_oracle=False, oracle_budget=oracle.DEFAULT_BUDGET):
    state_us, rep = _best_of(lambda: check_trace_pair(pair.transformed, pair.original), repeats)
    oracle_us = oracle_verdict = None
    if with_oracle:
        oracle_us, res = _best_of(lambda: oracle.oracle_match(pair.transformed, pair.original, oracle_budget), 1)
        oracle_verdict = res.status
    return state_us, rep.verdict, oracle_us, oracle_verdict


def run_bench(cfgs, out=None, repeats=3, with_oracle=False, oracle_budget=oracle.DEFAULT_BUDGET,
              warmup=True, progress=None):
    """Time the state-based matcher (and optionally the oracle) on every pair.

    Returns ``(records, summary)``.  With ``out`` a CSV file is written plus
    a ``.manifest.json`` sidecar echoing configurations and environment.
    """
    cfgs = list(cfgs)
    if warmup and cfgs:
        p = gen_pair(GenConfig(seed=0, length=(8, 8), locks=(1, 1)))
        check_trace_pair(p.transformed, p.original)
    records = []
    for cfg in cfgs:
        label = cfg.label or f"{cfg.length[0]}-{cfg.length[1]}"
        for i in range(cfg.pairs):
            pair = gen_pair(cfg, i)
            s_us, verdict, o_us, o_verdict = bench_pair(pair, repeats, with_oracle, oracle_budget)
            records.append(BenchRecord(label, i, len(pair.original), pair.original.lock_count(), s_us, o_us,
                                       verdict, pair.truth, o_verdict, len(pair.transforms)))
            if progress:
                progress(records[-1])
    summary = summarize(records)
    if out is not None:
        write_csv(records, out)
        write_manifest(cfgs, summary, Path(str(out) + ".manifest.json"), repeats, with_oracle, oracle_budget)
    return records, summary


def write_csv(records, out):
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.csv_row())


def write_manifest(cfgs, summary, path, repeats, with_oracle, oracle_budget):
    from . import kernels

    manifest = {
        "configs": [c.to_dict() for c in cfgs],
        "repeats": repeats,
        "with_oracle": with_oracle,
        "oracle_budget": oracle_budget,
        "kernel_backend": kernels.backend(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "summary": summary,
    }
    try:
        import numba

        manifest["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        pass
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def linear_fit(x, y):
    """Least-squares line through ``(x, y)``: ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        return float("nan"), float("nan"), float("nan")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _stats(vals):
    a = np.asarray(vals, dtype=float)
    return {
        "median": float(np.median(a)),
        "mean": float(a.mean()),
        "p20": float(np.percentile(a, 20)),
        "p80": float(np.percentile(a, 80)),
    }


def summarize(records) -> dict:
    """Per-bin statistics, linear fits of state-based time, speedups."""
    if not records:
        return {"bins": {}, "pairs": 0}
    bins = {}
    for r in records:
        bins.setdefault(r.bin, []).append(r)
    out_bins = {}
    for label, rs in bins.items():
        b = {
            "pairs": len(rs),
            "len_mean": statistics.fmean(r.len for r in rs),
            "locks_mean": statistics.fmean(r.locks for r in rs),
            "state_us": _stats([r.state_us for r in rs]),
            "agree": sum(r.verdict == r.truth for r in rs),
        }
        timed = [r for r in rs if r.oracle_us is not None]
        if timed:
            b["oracle_us"] = _stats([r.oracle_us for r in timed])
            b["speedup_median"] = float(np.median([r.oracle_us / r.state_us for r in timed]))
            b["oracle_verdicts"] = dict(sorted(
                (v, sum(r.oracle_verdict == v for r in timed)) for v in {r.oracle_verdict for r in timed}))
        out_bins[label] = b
    def fin(v):
        return v if math.isfinite(v) else None

    slope, icpt, r2 = map(fin, linear_fit([r.len for r in records], [r.state_us for r in records]))
    meds = [(b["len_mean"], b["state_us"]["median"]) for b in out_bins.values()]
    bslope, bicpt, br2 = map(fin, linear_fit([m[0] for m in meds], [m[1] for m in meds]))
    summary = {
        "pairs": len(records),
        "bins": out_bins,
        "fit_pairs": {"slope_us_per_event": slope, "intercept_us": icpt, "r2": r2},
        "fit_bin_medians": {"slope_us_per_event": bslope, "intercept_us": bicpt, "r2": br2},
        "agreement": sum(r.verdict == r.truth for r in records) / len(records),
    }
    timed = [r for r in records if r.oracle_us is not None]
    if timed:
        summary["speedup_median"] = float(np.median([r.oracle_us / r.state_us for r in timed]))
    return summary


# -- program-level generation ----------------------------------------------------


def _expr_value(rng, locs, domain, locals_):
    r = rng.random()
    if r < 0.5:
        return Const(rng.choice(domain))
    if r < 0.8 or not locals_:
        return Shared(rng.choice(locs))
    return Local(rng.choice(locals_))


def _gen_stmt(rng, locs, domain, locals_, depth=0):
    r = rng.random()
    if r < 0.45:
        return AssignShared(rng.choice(locs), _expr_value(rng, locs, domain, locals_))
    if r < 0.75 and locals_:
        return AssignLocal(rng.choice(locals_), Shared(rng.choice(locs)))
    if r < 0.9 and depth == 0:
        cond = BinOp("==", Shared(rng.choice(locs)), Const(rng.choice(domain)))
        return If(cond, (_gen_stmt(rng, locs, domain, locals_, 1),))
    return AssignShared(rng.choice(locs), Const(rng.choice(domain)))


def gen_thread(rng: random.Random, name="T", locations=("x", "y", "z"), locks=("l",), sections=(1, 3),
               stmts=(0, 2), unprotected=0.5, domain=(0, 1, 2), locals_=("a",)) -> ThreadProgram:
    """Random non-nested thread; every value it computes stays in ``domain``."""
    body = []
    used_locals = set()
    for _ in range(rng.randint(*sections)):
        lid = rng.choice(locks)
        body.append(Lock(lid))
        for _ in range(rng.randint(*stmts)):
            body.append(_gen_stmt(rng, list(locations), domain, list(locals_)))
        body.append(Unlock(lid))
        if rng.random() < unprotected:
            for _ in range(rng.randint(1, max(1, stmts[1]))):
                body.append(_gen_stmt(rng, list(locations), domain, list(locals_)))
    for s in lang.walk(body):
        if isinstance(s, AssignLocal):
            used_locals.add(s.name)
        for e in lang._stmt_exprs(s):
            used_locals.update(_locals_in(e))
    return ThreadProgram(name, tuple(sorted(used_locals)), tuple(body))


def _locals_in(e):
    if isinstance(e, Local):
        yield e.name
    elif isinstance(e, BinOp):
        yield from _locals_in(e.left)
        yield from _locals_in(e.right)


def gen_program(rng: random.Random, threads=(2, 3), n_locations=(1, 4), sections=(1, 3), locks=("l", "m")):
    """Threads for the race-detector agreement experiment.

    Half of the programs follow a single-lock discipline (no statements
    outside critical sections) so that race-free programs are common.
    """
    k = rng.randint(*n_locations)
    locs = tuple(f"x{i}" for i in range(k))
    disciplined = rng.random() < 0.5
    shared_lock = (rng.choice(locks),)
    out = []
    for i in range(rng.randint(*threads)):
        if disciplined:
            lk, unprotected = shared_lock, 0.0
        else:
            lk, unprotected = tuple(rng.sample(locks, rng.randint(1, len(locks)))), 0.4
        out.append(gen_thread(rng, f"T{i}", locs, lk, sections, stmts=(0, 2), unprotected=unprotected))
    return out


# -- thread transformations --------------------------------------------------------

THREAD_TRANSFORMS = (
    "roach-motel", "inverse-roach-motel", "delete", "swap", "introduce-read", "hoist", "sink", "constant",
)


def _sections(body):
    """Indices (lock_index, unlock_index) of top-level critical sections."""
    out, open_at = [], None
    for i, s in enumerate(body):
        if isinstance(s, Lock):
            open_at = i
        elif isinstance(s, Unlock) and open_at is not None:
            out.append((open_at, i))
            open_at = None
    return out


def _is_sync(s):
    return isinstance(s, (Lock, Unlock))


def transform_thread(rng: random.Random, t: ThreadProgram, kind: str) -> Optional[ThreadProgram]:
    """One syntactic rewrite; not necessarily semantics-preserving."""
    body = list(t.body)
    decls = t.decls
    secs = _sections(body)
    if kind == "roach-motel":
        # pull the statement right after an unlock into the section
        opts = [u for _, u in secs if u + 1 < len(body) and not _is_sync(body[u + 1])]
        if not opts:
            return None
        u = rng.choice(opts)
        body[u], body[u + 1] = body[u + 1], body[u]
    elif kind == "inverse-roach-motel":
        opts = [u for lk, u in secs if u - 1 > lk]
        if not opts:
            return None
        u = rng.choice(opts)
        body[u - 1], body[u] = body[u], body[u - 1]
    elif kind == "hoist":
        # move the statement after a lock above it
        opts = [lk for lk, u in secs if lk + 1 < u and lk > 0]
        if not opts:
            return None
        lk = rng.choice(opts)
        body[lk], body[lk + 1] = body[lk + 1], body[lk]
    elif kind == "sink":
        opts = [lk - 1 for lk, _ in secs if lk > 0 and not _is_sync(body[lk - 1])]
        if not opts:
            return None
        p = rng.choice(opts)
        body[p], body[p + 1] = body[p + 1], body[p]
    elif kind == "delete":
        opts = [i for i, s in enumerate(body) if not _is_sync(s)]
        if not opts:
            return None
        del body[rng.choice(opts)]
    elif kind == "swap":
        opts = [i for i in range(len(body) - 1) if not _is_sync(body[i]) and not _is_sync(body[i + 1])]
        if not opts:
            return None
        i = rng.choice(opts)
        body[i], body[i + 1] = body[i + 1], body[i]
    elif kind == "introduce-read":
        locs = t.locations()
        opts = [i for i in range(1, len(body) + 1) if i - 1 < len(body) and not isinstance(body[i - 1], Unlock)
                or i == len(body)]
        if not locs or not opts:
            return None
        i = rng.choice(opts)
        body.insert(i, AssignLocal("r", Shared(rng.choice(locs))))
        decls = tuple(sorted(set(decls) | {"r"}))
    elif kind == "constant":
        opts = [i for i, s in enumerate(body) if isinstance(s, AssignShared) and isinstance(s.expr, Const)]
        if not opts:
            return None
        i = rng.choice(opts)
        s = body[i]
        body[i] = AssignShared(s.loc, Const((s.expr.value + 1) % 3))
    else:
        raise ValueError(f"unknown thread transformation {kind!r}")
    out = ThreadProgram(t.name, decls, tuple(body))
    if not lang.check_well_formed(out, "non-nested").ok:
        return None
    return out


def gen_thread_pair(rng: random.Random, steps=(1, 3), **kw):
    """A random thread and a rewritten copy (not filtered by check)."""
    t = gen_thread(rng, **kw)
    tp = t
    applied = []
    for _ in range(rng.randint(*steps)):
        kind = rng.choice(THREAD_TRANSFORMS)
        nxt = transform_thread(rng, tp, kind)
        if nxt is not None:
            tp = nxt
            applied.append(kind)
    return t, tp, tuple(applied)


# -- bounded context family --------------------------------------------------------


def context_actions(locations, domain=(0, 1, 2), observer="o"):
    acts = [AssignShared(x, Const(c)) for x in locations for c in domain]
    acts += [AssignShared(observer, Shared(x)) for x in locations]
    return acts


def context_family(locations=("x", "y", "z"), locks=("l",), domain=(0, 1, 2), observer="o"):
    """Single-thread contexts with at most two one-action critical sections.

    Shapes: empty; one unprotected action; one section; one section then an
    unprotected action; two sections.  Actions write a constant or copy a
    location into the private ``observer`` location.
    """
    acts = context_actions(locations, domain, observer)
    out = [ThreadProgram("C", (), ())]
    out += [ThreadProgram("C", (), (a,)) for a in acts]

    def section(lid, a):
        return (Lock(lid), a, Unlock(lid))

    for lid in locks:
        for a in acts:
            out.append(ThreadProgram("C", (), section(lid, a)))
            for b in acts:
                out.append(ThreadProgram("C", (), section(lid, a) + (b,)))
        for lid2 in locks:
            for a in acts:
                for b in acts:
                    out.append(ThreadProgram("C", (), section(lid, a) + section(lid2, b)))
    return out


# -- refinement sampling -------------------------------------------------------


@dataclass(frozen=True)
class RefinementViolation:
    context: ThreadProgram
    kind: str  # race | behaviour
    detail: str = ""


def refinement_violations(tp: ThreadProgram, t: ThreadProgram, contexts, domain=(0, 1, 2),
                          locations=("x", "y", "z"), observer="o", max_steps=10_000, stop_at_first=True):
    """Contexts ``C`` where ``T || C`` is race-free but ``T' || C`` races or adds behaviour.

    Initial states range over ``domain`` on ``locations``; the observer starts at 0.
    """
    from .semantics import Program, all_states, race, semantics

    locs = tuple(sorted(set(locations) | {observer} | set(t.locations()) | set(tp.locations())))
    base = [x for x in locs if x != observer]
    s0s = [dict(s, **{observer: 0}) for s in all_states(base, domain)]
    out = []
    for c in contexts:
        orig = Program([t, c], locs)
        if race(orig, s0s, max_steps):
            continue
        new = Program([tp, c], locs)
        if race(new, s0s, max_steps):
            out.append(RefinementViolation(c, "race"))
        else:
            extra = semantics(new, s0s, max_steps).pairs - semantics(orig, s0s, max_steps).pairs
            if extra:
                s0, s1 = min(extra, key=repr)
                out.append(RefinementViolation(c, "behaviour", f"{dict(s0)} -> {dict(s1)}"))
        if out and stop_at_first:
            break
    return out


def random_execution(program, rng: random.Random, s0=None, max_steps=200, prefix=True):
    """A random interleaving, cut at a random length when ``prefix`` is set."""
    from .semantics import ExecutionFragment

    c = program.initial(s0)
    configs, steps = [c], []
    for _ in range(max_steps):
        succ = list(program.successors(c))
        if not succ:
            break
        c, info = rng.choice(succ)
        configs.append(c)
        steps.append(info)
    status = "terminated" if program.terminated(c) else "deadlock" if len(steps) < max_steps else "truncated"
    if prefix and steps:
        cut = rng.randint(0, len(steps))
        configs, steps, status = configs[: cut + 1], steps[:cut], "prefix"
    return ExecutionFragment(program, tuple(configs), tuple(steps), status)


# -- config files and corpora ------------------------------------------------------

_MIX_ALIASES = {
    "reorder": oracle.REORDER,
    "eliminate-write": oracle.ELIM_WRITE,
    "eliminate-read": oracle.ELIM_READ,
    "introduce-read": oracle.INTRO_READ,
}


def _range(text):
    lo, _, hi = text.partition("-")
    lo = int(lo)
    return (lo, int(hi) if hi else lo)


def parse_config(text: str) -> list:
    """Read ``key=value`` configurations.

    Without section headers the whole file is one configuration.  Each
    ``[name]`` section is a further configuration labelled ``name``;
    ``[DEFAULT]`` keys apply to all of them.  Keys: ``seed``, ``length``
    and ``locks`` and ``transforms`` (``lo-hi`` or a single number),
    ``locations``, ``domain`` (comma list), ``mix`` (``kind:p`` comma list),
    ``bug`` (``off`` or a bug kind), ``pairs``.
    """
    import configparser

    cp = configparser.ConfigParser(interpolation=None)
    if not any(line.strip().startswith("[") for line in text.splitlines()):
        text = "[main]\n" + text
    cp.read_string(text)
    out = []
    for name in cp.sections():
        sec = cp[name]
        known = {"seed", "length", "locks", "transforms", "locations", "domain", "mix", "bug", "pairs", "label"}
        unknown = set(sec) - known
        if unknown:
            raise ValueError(f"[{name}] unknown keys: {sorted(unknown)}")
        kw = {"label": sec.get("label", "" if name == "main" else name)}
        if "seed" in sec:
            kw["seed"] = int(sec["seed"])
        if "length" in sec:
            kw["length"] = _range(sec["length"])
        if "locks" in sec:
            kw["locks"] = _range(sec["locks"])
        if "transforms" in sec:
            kw["n_transforms"] = _range(sec["transforms"])
        if "locations" in sec:
            kw["n_locations"] = int(sec["locations"])
        if "domain" in sec:
            kw["domain"] = tuple(int(v) for v in sec["domain"].split(","))
        if "pairs" in sec:
            kw["pairs"] = int(sec["pairs"])
        if "bug" in sec and sec["bug"] not in ("off", "none", ""):
            kw["bug"] = sec["bug"]
        if "mix" in sec:
            mix = {}
            for item in sec["mix"].split(","):
                k, _, p = item.strip().partition(":")
                mix[_MIX_ALIASES.get(k, k)] = float(p)
            kw["transform_mix"] = mix
        out.append(GenConfig(**kw))
    return out


def write_corpus(cfgs, outdir) -> list:
    """Write each pair as ``<label>-<i>.tp.trc`` / ``.t.trc`` plus ``corpus.jsonl``."""
    from .trace import emit_trace

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    index = []
    for n, cfg in enumerate(cfgs):
        label = cfg.label or f"cfg{n}"
        for i in range(cfg.pairs):
            pair = gen_pair(cfg, i)
            stem = f"{label}-{i:04d}"
            (outdir / f"{stem}.tp.trc").write_text(emit_trace(pair.transformed), encoding="utf-8")
            (outdir / f"{stem}.t.trc").write_text(emit_trace(pair.original), encoding="utf-8")
            index.append({"pair": stem, "truth": pair.truth, "bug": pair.bug,
                          "transforms": [str(x) for x in pair.transforms]})
    with open(outdir / "corpus.jsonl", "w", encoding="utf-8") as f:
        for row in index:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    (outdir / "manifest.json").write_text(
        json.dumps({"configs": [c.to_dict() for c in cfgs]}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return index


def _verdict_job(args):
    cfg, i = args
    pair = gen_pair(cfg, i)
    rep = check_trace_pair(pair.transformed, pair.original)
    return cfg.label, i, len(pair.original), pair.original.lock_count(), rep.verdict, pair.truth


def run_verdicts(cfgs, jobs=1):
    """Verdicts only (no timing), optionally across ``jobs`` processes."""
    work = [(c, i) for c in cfgs for i in range(c.pairs)]
    if jobs <= 1:
        return [_verdict_job(w) for w in work]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(jobs) as ex:
        return list(ex.map(_verdict_job, work, chunksize=16))
