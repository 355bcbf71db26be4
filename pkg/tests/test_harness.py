import csv
import json
import random

import pytest

from threadrefine import harness, oracle
from threadrefine.lang import check_well_formed
from threadrefine.matcher import check, check_trace_pair
from threadrefine.trace import coherence_violations, emit_trace, validate


class TestGenerationSettings:
    def test_defaults_are_valid(self):
        harness.GenConfig()

    @pytest.mark.parametrize("kw", [
        {"length": (10, 5)},
        {"locks": (0, 2)},
        {"locks": (30, 30), "length": (20, 40)},
        {"transform_mix": {oracle.REORDER: 0.5}},
        {"transform_mix": {"shuffle": 1.0}},
        {"bug": "gremlins"},
        {"domain": (0,)},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            harness.GenConfig(**kw)

    def test_mix_from_dict(self):
        cfg = harness.GenConfig(transform_mix={oracle.REORDER: 1.0})
        assert cfg.transform_mix == ((oracle.REORDER, 1.0),)
        assert cfg.to_dict()["transform_mix"] == {oracle.REORDER: 1.0}


class TestGenPair:
    def test_zero_transformations(self):
        p = harness.gen_pair(harness.GenConfig(seed=1, n_transforms=(0, 0)))
        assert p.transformed == p.original and p.truth == "match"

    def test_traces_are_valid(self):
        cfg = harness.GenConfig(seed=2, length=(30, 80), locks=(1, 6), n_transforms=(2, 6), pairs=50)
        for p in harness.gen_corpus(cfg):
            for t in (p.original, p.transformed):
                assert validate(t) == [] and coherence_violations(t) == []
            assert len(p.original) >= 30 and p.original.lock_count() <= 6
            assert oracle.apply_all(p.original, p.transforms) == p.transformed

    def test_reproducible(self):
        cfg = harness.GenConfig(seed=7, pairs=5, n_transforms=(1, 5))
        a = [emit_trace(p.transformed) + emit_trace(p.original) for p in harness.gen_corpus(cfg)]
        b = [emit_trace(p.transformed) + emit_trace(p.original) for p in harness.gen_corpus(cfg)]
        assert a == b
        other = harness.GenConfig(seed=8, pairs=5, n_transforms=(1, 5))
        assert a != [emit_trace(p.transformed) + emit_trace(p.original) for p in harness.gen_corpus(other)]

    @pytest.mark.parametrize("bug", harness.BUG_KINDS)
    def test_bugs_are_detected(self, bug):
        cfg = harness.GenConfig(seed=4, length=(20, 60), locks=(1, 5), n_transforms=(0, 4), bug=bug, pairs=60)
        for p in harness.gen_corpus(cfg):
            assert p.truth == "mismatch" and p.bug == bug
            assert validate(p.transformed) == [] and coherence_violations(p.transformed) == []
            assert check_trace_pair(p.transformed, p.original).verdict == "mismatch"

    def test_fresh_location_is_a_race_violation(self):
        cfg = harness.GenConfig(seed=5, bug="fresh-location", pairs=30)
        for p in harness.gen_corpus(cfg):
            assert check_trace_pair(p.transformed, p.original).label.startswith("race-")

    def test_lock_edit_is_a_lock_violation(self):
        cfg = harness.GenConfig(seed=5, bug="lock-edit", pairs=30)
        for p in harness.gen_corpus(cfg):
            assert check_trace_pair(p.transformed, p.original).label == "same-locks"


class TestBench:
    def test_empty(self, tmp_path):
        records, summary = harness.run_bench([], out=tmp_path / "b.csv")
        assert records == [] and summary == {"bins": {}, "pairs": 0}

    def test_csv_and_manifest(self, tmp_path):
        cfgs = [harness.GenConfig(seed=1, length=(40, 60), locks=(2, 3), pairs=4, label="a"),
                harness.GenConfig(seed=2, length=(80, 100), locks=(2, 3), pairs=4, label="b")]
        out = tmp_path / "b.csv"
        records, summary = harness.run_bench(cfgs, out=out, with_oracle=True)
        rows = list(csv.reader(out.open()))
        assert tuple(rows[0]) == harness.CSV_HEADER
        assert len(rows) == 9 and {r[0] for r in rows[1:]} == {"a", "b"}
        assert all(r[5] == "match" for r in rows[1:])
        man = json.loads((tmp_path / "b.csv.manifest.json").read_text())
        assert [c["seed"] for c in man["configs"]] == [1, 2] and man["repeats"] == 3
        b = summary["bins"]["a"]
        assert b["pairs"] == 4 and b["state_us"]["p20"] <= b["state_us"]["median"] <= b["state_us"]["p80"]
        assert "speedup_median" in b and summary["agreement"] == 1.0
        assert summary["fit_bin_medians"]["r2"] is not None

    def test_linear_fit(self):
        slope, icpt, r2 = harness.linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
        assert slope == pytest.approx(2) and icpt == pytest.approx(1) and r2 == pytest.approx(1)

    def test_verdicts_parallel(self):
        cfgs = [harness.GenConfig(seed=3, pairs=6, label="p"), harness.GenConfig(seed=3, pairs=6, bug="lock-edit")]
        serial = harness.run_verdicts(cfgs, 1)
        assert harness.run_verdicts(cfgs, 2) == serial
        assert all(v == t for *_, v, t in serial)


class TestSettingsFile:
    def test_plain(self):
        (cfg,) = harness.parse_config("seed=3\nlength=100-200\nlocks=4\ndomain=0,1\nbug=off\npairs=7\n")
        assert (cfg.seed, cfg.length, cfg.locks, cfg.domain, cfg.bug, cfg.pairs) == (
            3, (100, 200), (4, 4), (0, 1), None, 7)

    def test_sections(self):
        text = "[DEFAULT]\nseed=2\n[short]\nlength=20-30\n[buggy]\nbug=lock-edit\nmix=reorder:0.5,introduce-read:0.5\n"
        a, b = harness.parse_config(text)
        assert (a.label, a.seed, a.length) == ("short", 2, (20, 30))
        assert b.bug == "lock-edit" and dict(b.transform_mix) == {oracle.REORDER: 0.5, oracle.INTRO_READ: 0.5}

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            harness.parse_config("speed=3\n")

    def test_corpus_is_byte_identical(self, tmp_path):
        cfgs = harness.parse_config("seed=5\npairs=4\ntransforms=1-3\n")
        harness.write_corpus(cfgs, tmp_path / "a")
        harness.write_corpus(cfgs, tmp_path / "b")
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
        assert len(list((tmp_path / "a").glob("*.trc"))) == 8


class TestPrograms:
    def test_threads_are_well_formed(self):
        rng = random.Random(0)
        for _ in range(200):
            t = harness.gen_thread(rng)
            assert check_well_formed(t, "non-nested").ok
            assert len(t.locations()) <= 3

    def test_programs(self):
        rng = random.Random(1)
        for _ in range(50):
            threads = harness.gen_program(rng)
            assert 2 <= len(threads) <= 3
            assert len({x for t in threads for x in t.locations()}) <= 4

    @pytest.mark.parametrize("kind", harness.THREAD_TRANSFORMS)
    def test_thread_transforms(self, kind):
        rng = random.Random(2)
        applied = 0
        for _ in range(40):
            t = harness.gen_thread(rng)
            out = harness.transform_thread(rng, t, kind)
            if out is not None:
                applied += 1
                assert check_well_formed(out, "non-nested").ok
        assert applied > 0

    def test_unknown_transform(self):
        with pytest.raises(ValueError):
            harness.transform_thread(random.Random(0), harness.gen_thread(random.Random(0)), "fold")

    def test_context_family(self):
        ctx = harness.context_family()
        assert len(ctx) == 1 + 12 + 12 + 144 + 144
        assert all(sum(1 for s in c.body if type(s).__name__ == "Lock") <= 2 for c in ctx)
        assert len({str(c) for c in ctx}) == len(ctx)

    def test_refinement_on_a_known_pair(self):
        from threadrefine.lang import parse_thread

        t = parse_thread("lock(l); x = 1; y = 1; unlock(l); y = 2;")
        tp = parse_thread("lock(l); x = 1; y = 1; y = 2; unlock(l);")
        assert check(tp, t).verdict
        ctx = harness.context_family(("x", "y"))[:60]
        assert harness.refinement_violations(tp, t, ctx, locations=("x", "y")) == []
        # the reverse move is caught by some context
        bad = harness.refinement_violations(t, tp, harness.context_family(("x", "y")), locations=("x", "y"))
        assert bad and bad[0].kind in ("race", "behaviour")
