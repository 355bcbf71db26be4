"""Linear-time trace-pair matching kernel.

The kernel runs on integer-encoded traces.  It is compiled with numba when
available; setting ``THREADREFINE_DISABLE_NUMBA=1`` (or lacking numba)
selects the same function interpreted by plain Python.

Event kinds: 0 lock, 1 unlock, 2 read, 3 write.  Targets are location ids
for memory events and lock ids for synchronization events.

The result is an ``(8, 4)`` int64 array, one row per violation category:
``(tuple index, location id, primed value, original value)``, with ``-1``
in the index column when the category was not violated.  Tuple ``i`` is
the portion that starts at synchronization event ``i`` (in the flat case,
even tuples are lock halves and odd tuples unlock halves).
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

C_LENGTH = 0
C_LOCKS = 1
C_R_LOCK = 2
C_W_LOCK = 3
C_R_UNLOCK = 4
C_W_UNLOCK = 5
C_STATE = 6
C_FINAL = 7
N_CATEGORIES = 8

KIND = {"lock": 0, "unlock": 1, "read": 2, "write": 3}

ENV_FLAG = "THREADREFINE_DISABLE_NUMBA"


def _numba_wanted():
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


if HAVE_NUMBA:
    from numba.extending import register_jitable as _jitable
else:  # pragma: no cover
    def _jitable(f):
        return f


# Helpers marked ``_jitable`` stay plain Python functions when called from
# Python and are compiled into the kernel when it is jitted.  Everything is
# defined at module level so numba's on-disk cache can be reused across
# processes.


@_jitable
def _record(viol, cat, i, loc, vp, v):
    if viol[cat, 0] < 0:
        viol[cat, 0] = i
        viol[cat, 1] = loc
        viol[cat, 2] = vp
        viol[cat, 3] = v
    elif viol[cat, 0] == i and loc < viol[cat, 1]:
        viol[cat, 1] = loc
        viol[cat, 2] = vp
        viol[cat, 3] = v

@_jitable
def _sync_positions(kind):
    n = 0
    for e in range(kind.shape[0]):
        if kind[e] < 2:
            n += 1
    pos = np.empty(n + 1, np.int64)
    j = 0
    for e in range(kind.shape[0]):
        if kind[e] < 2:
            pos[j] = e
            j += 1
    pos[n] = kind.shape[0]
    return pos, n

def _kernel(kp, xp, vp, kt, xt, vt, init):
    viol = np.full((N_CATEGORIES, 4), -1, np.int64)
    pos_p, n_p = _sync_positions(kp)
    pos_t, n = _sync_positions(kt)
    if n_p != n:
        viol[C_LENGTH, 0] = min(n_p, n)
        return viol

    for i in range(n):
        a, b = pos_p[i], pos_t[i]
        if kp[a] != kt[b] or xp[a] != xt[b]:
            viol[C_LOCKS, 0] = i
            break

    # window bounds from the original trace's operation types
    nxt = np.empty(n, np.int64)
    prv = np.empty(n, np.int64)
    following = n
    for i in range(n - 1, -1, -1):
        nxt[i] = following
        if kt[pos_t[i]] == 0:
            following = i
    last = -1
    for i in range(n):
        if kt[pos_t[i]] == 1:
            last = i
        prv[i] = last

    nloc = init.shape[0]
    last_a = np.full(nloc, -2, np.int64)
    last_w = np.full(nloc, -2, np.int64)
    cur_t = init.copy()
    cur_p = init.copy()
    dirty = np.empty(nloc, np.int64)
    in_dirty = np.zeros(nloc, np.bool_)
    nd = 0
    scanned = 0
    state_bad = False

    for i in range(n):
        lo = prv[i]
        if lo < 0:
            lo = 0
        hi = nxt[i]
        # stamp the original's accesses up to the next lock
        while scanned < hi:
            for e in range(pos_t[scanned] + 1, pos_t[scanned + 1]):
                x = xt[e]
                last_a[x] = scanned
                if kt[e] == 3:
                    last_w[x] = scanned
            scanned += 1
        is_lock = kt[pos_t[i]] == 0
        # state at unlock i: compare only locations that may differ
        if not is_lock and not state_bad:
            keep = 0
            for d in range(nd):
                x = dirty[d]
                if last_w[x] >= i:
                    dirty[keep] = x
                    keep += 1
                elif cur_t[x] == cur_p[x]:
                    in_dirty[x] = False
                else:
                    _record(viol, C_STATE, i, x, cur_p[x], cur_t[x])
                    dirty[keep] = x
                    keep += 1
            nd = keep
            if viol[C_STATE, 0] >= 0:
                state_bad = True
        if is_lock:
            c_r, c_w = C_R_LOCK, C_W_LOCK
        else:
            c_r, c_w = C_R_UNLOCK, C_W_UNLOCK
        for e in range(pos_p[i] + 1, pos_p[i + 1]):
            x = xp[e]
            if kp[e] == 2:
                if last_a[x] < lo:
                    _record(viol, c_r, i, x, -1, -1)
            else:
                if last_w[x] < lo:
                    _record(viol, c_w, i, x, -1, -1)
                cur_p[x] = vp[e]
                if not in_dirty[x]:
                    in_dirty[x] = True
                    dirty[nd] = x
                    nd += 1
        for e in range(pos_t[i] + 1, pos_t[i + 1]):
            if kt[e] == 3:
                x = xt[e]
                cur_t[x] = vt[e]
                if not in_dirty[x]:
                    in_dirty[x] = True
                    dirty[nd] = x
                    nd += 1

    best = -1
    for d in range(nd):
        x = dirty[d]
        if cur_t[x] != cur_p[x] and (best < 0 or x < best):
            best = x
    if best >= 0:
        viol[C_FINAL, 0] = max(n - 1, 0)
        viol[C_FINAL, 1] = best
        viol[C_FINAL, 2] = cur_p[best]
        viol[C_FINAL, 3] = cur_t[best]
    return viol


_match_kernel_py = _kernel
_match_kernel_jit = numba.njit(cache=True)(_kernel) if HAVE_NUMBA else None


def backend() -> str:
    """``"numba"`` or ``"python"``, as selected by the environment right now."""
    return "numba" if HAVE_NUMBA and _numba_wanted() else "python"


def match_kernel(kp, xp, vp, kt, xt, vt, init, force=None):
    """Run the kernel on the selected backend (``force`` overrides the flag)."""
    which = force or backend()
    if which == "numba":
        if _match_kernel_jit is None:
            raise RuntimeError("numba is not available")
        return _match_kernel_jit(kp, xp, vp, kt, xt, vt, init)
    return _match_kernel_py(kp, xp, vp, kt, xt, vt, init)


@dataclass(frozen=True)
class EncodedPair:
    arrays: tuple
    locations: tuple
    locks: tuple
    n_sync_p: int
    n_sync: int


def _encode(t, loc_id, lock_id):
    n = len(t.events)
    kind = np.empty(n, np.int64)
    tgt = np.empty(n, np.int64)
    val = np.zeros(n, np.int64)
    syncs = 0
    for e, ev in enumerate(t.events):
        k = KIND[ev.kind]
        kind[e] = k
        if k < 2:
            tgt[e] = lock_id[ev.target]
            syncs += 1
        else:
            tgt[e] = loc_id[ev.target]
            val[e] = ev.value
    return kind, tgt, val, syncs


def encode_pair(tp, t, init: dict) -> EncodedPair:
    """Intern locations and locks of both traces and build the kernel inputs."""
    locs = tuple(sorted(set(tp.locations()) | set(t.locations()) | set(init)))
    locks = tuple(sorted(set(tp.locks()) | set(t.locks())))
    loc_id = {x: i for i, x in enumerate(locs)}
    lock_id = {x: i for i, x in enumerate(locks)}
    kp, xp, vp, n_p = _encode(tp, loc_id, lock_id)
    kt, xt, vt, n_t = _encode(t, loc_id, lock_id)
    init_arr = np.array([init.get(x, 0) for x in locs], dtype=np.int64)
    return EncodedPair((kp, xp, vp, kt, xt, vt, init_arr), locs, locks, n_p, n_t)
