"""End-to-end acceptance runs.  Each test prints one PASS/FAIL line."""
import random
import statistics
import time

import pytest
from conftest import DATA, record_criterion

import test_properties
from threadrefine import harness
from threadrefine.errors import BudgetExceeded
from threadrefine.lang import parse_file
from threadrefine.matcher import check, check_trace_pair, match_state_traces
from threadrefine.semantics import Program, coarsen, find_adjacent_race, find_hb_race, hb_race, is_coarse
from threadrefine.state_traces import build_state_trace
from threadrefine.trace import read_trace

pytestmark = pytest.mark.acceptance

XYZ = ("x", "y", "z")


def test_golden_examples():
    t0 = time.perf_counter()
    tp, t = read_trace(DATA / "opt.trc"), read_trace(DATA / "orig.trc")
    ok = check_trace_pair(tp, t).ok
    for tr in (tp, t):
        s = build_state_trace(tr, XYZ)
        ok &= [dict(seg.unlock_state) for seg in s.segments] == [
            {"x": 2, "y": 0, "z": 0}, {"x": 0, "y": 0, "z": 0}]
    orig = parse_file(DATA / "rm_original.thr")
    ok &= check(parse_file(DATA / "rm_roach.thr"), orig).verdict
    ok &= check(parse_file(DATA / "rm_inverse.thr"), orig).verdict
    ok &= match_state_traces(build_state_trace(tp, XYZ), build_state_trace(t, XYZ)).ok
    elapsed = time.perf_counter() - t0
    assert record_criterion(1, ok and elapsed < 1.0, f"golden pairs accepted in {elapsed * 1e3:.0f} ms")


def test_race_detectors_agree():
    rng = random.Random(2024)
    n, racy, bad = 0, 0, []
    for _ in range(500):
        p = Program(harness.gen_program(rng, n_locations=(1, 4), sections=(1, 3)))
        a = find_adjacent_race(p, [{}]).racy
        b = find_hb_race(p, [{}]).racy
        n += 1
        racy += a
        if a != b:
            bad.append(p)
    assert record_criterion(2, not bad, f"{n} programs, {racy} racy, {len(bad)} detector disagreements")


def _refinement_corpus(want, seed):
    rng = random.Random(seed)
    pairs, rejected = [], 0
    while len(pairs) < want:
        t, tp, applied = harness.gen_thread_pair(rng, steps=(1, 3))
        if not applied or tp == t:
            continue
        try:
            ok = check(tp, t).verdict
        except BudgetExceeded:
            ok = False
        if ok:
            pairs.append((t, tp, applied))
        else:
            rejected += 1
    return pairs, rejected


def test_refinement_sampling():
    pairs, rejected = _refinement_corpus(200, 7)
    contexts = harness.context_family()
    violations = []
    for t, tp, _ in pairs:
        violations += harness.refinement_violations(tp, t, contexts)
    kinds = sorted({k for _, _, a in pairs for k in a})
    detail = (f"{len(pairs)} check-true pairs x {len(contexts)} contexts, {len(violations)} violations "
              f"({rejected} generated pairs rejected by check; transforms used: {', '.join(kinds)})")
    assert record_criterion(3, not violations, detail)


def test_coarsening():
    rng = random.Random(99)
    done, bad = 0, 0
    while done < 1000:
        p = Program(harness.gen_program(rng))
        e = harness.random_execution(p, rng)
        if hb_race(e):
            continue
        c = coarsen(e)
        bad += not (c.final == e.final and is_coarse(c) and not hb_race(c)
                    and sorted(c.steps, key=repr) == sorted(e.steps, key=repr))
        done += 1
    assert record_criterion(4, bad == 0, f"{done} race-free prefixes coarsened, {bad} violations")


def _bin(seed, label, length, locks, pairs, **kw):
    return harness.GenConfig(seed=seed, length=length, locks=locks, pairs=pairs, label=label,
                             n_transforms=kw.pop("n_transforms", (3, 10)), **kw)


def test_linear_time(tmp_path):
    cfgs = [_bin(500 + n, f"len{n}", (n, n), (max(1, n // 40), max(1, n // 20)), 100)
            for n in range(250, 4001, 250)]
    records, summary = harness.run_bench(cfgs, out=tmp_path / "linear.csv")
    r2 = summary["fit_bin_medians"]["r2"]
    med = summary["bins"]["len4000"]["state_us"]["median"] / 1000.0
    ok = r2 >= 0.9 and med <= 50.0 and summary["agreement"] == 1.0
    detail = (f"R^2 {r2:.4f} over {len(cfgs)} bin medians (per-pair R^2 {summary['fit_pairs']['r2']:.4f}), "
              f"median {med:.2f} ms at 4000 events, {len(records)} pairs")
    assert record_criterion(5, ok, detail)


def test_lock_insensitivity(tmp_path):
    cfgs = [_bin(700 + k, f"locks{k}", (1900, 2100), (k, k), 60) for k in (10, 50, 100, 150, 200)]
    _, summary = harness.run_bench(cfgs, out=tmp_path / "locks.csv")
    meds = {k: b["state_us"]["median"] for k, b in summary["bins"].items()}
    ratio = max(meds.values()) / min(meds.values())
    shown = ", ".join(f"{k}={v:.0f}us" for k, v in meds.items())
    assert record_criterion(6, ratio <= 1.5, f"max/min bin median {ratio:.2f} ({shown})")


def test_speedup_over_oracle(tmp_path):
    cfgs = [_bin(900 + k, f"locks{k}", (512, 600), (k, k), 40, n_transforms=(3, 8)) for k in (2, 3, 4, 6)]
    records, summary = harness.run_bench(cfgs, out=tmp_path / "oracle.csv", with_oracle=True,
                                         oracle_budget=50_000)
    assert all(r.transforms >= 3 and r.len >= 512 for r in records)
    speedup = summary["speedup_median"]
    meds = [summary["bins"][c.label]["oracle_us"]["median"] for c in cfgs]
    monotone = all(a > b for a, b in zip(meds, meds[1:]))
    exhausted = sum(b["oracle_verdicts"].get("budget-exhausted", 0) for b in summary["bins"].values())
    detail = (f"median speedup {speedup:.1f}x, oracle bin medians "
              + " > ".join(f"{m / 1000:.1f}ms" for m in meds)
              + f" ({'monotone' if monotone else 'not monotone'}; {exhausted} oracle runs hit the budget)")
    assert record_criterion(7, speedup >= 10 and monotone and summary["agreement"] == 1.0, detail)


PROPERTIES = [
    test_properties.test_trace_pair_reflexive,
    test_properties.test_nested_trace_pair_reflexive,
    test_properties.test_check_reflexive,
    test_properties.test_check_n_reflexive,
    test_properties.test_trace_round_trip,
    test_properties.test_pretty_is_a_fixpoint,
    test_properties.test_state_traces_revalidate,
    test_properties.test_generated_pairs_agree_with_ground_truth,
    test_properties.test_oracle_found_implies_match,
]


def test_property_suites():
    failed = []
    for prop in PROPERTIES:
        try:
            prop()
        except Exception as e:  # noqa: BLE001 - a failing property is reported, not raised
            failed.append(f"{prop.__name__}: {type(e).__name__}")
    n = test_properties.CASES.max_examples
    detail = f"{len(PROPERTIES) - len(failed)}/{len(PROPERTIES)} properties held on {n} cases each"
    if failed:
        detail += "; failed: " + ", ".join(failed)
    assert record_criterion(8, not failed, detail)
