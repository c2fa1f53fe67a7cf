import json
import math

import jsonschema
import pytest
from hypothesis import given, strategies as st

from favsites import harness as H
from favsites._rng import trial_seed


def spec(**kw):
    base = dict(name="t", target="walk.exit_time", params={"radius": 6}, trials=20, master_seed=9)
    base.update(kw)
    return H.ExperimentSpec(**base)


def test_single_trial_aggregate_equals_record():
    rep = H.run_trials(spec(trials=1))
    assert rep.aggregate["n"] == 1
    assert rep.aggregate["mean"] == rep.records[0]["value"]
    assert rep.aggregate["variance"] == 0.0
    assert rep.aggregate["ci95"] == [rep.records[0]["value"]] * 2


def test_trial_seed_is_used_per_trial():
    from favsites.walk import ExitDisk, simulate_walk
    rep = H.run_trials(spec(trials=5))
    for r in rep.records:
        w = simulate_walk(2, 0, trial_seed(9, r["trial"]), ExitDisk(6.0, retain_path=False))
        assert r["value"] == w.length


def test_replay_is_byte_identical(tmp_path):
    a, b, c = tmp_path / "a.jsonl", tmp_path / "b.jsonl", tmp_path / "c.jsonl"
    H.run_trials(spec(output=str(a)))
    H.run_trials(spec(output=str(b)))
    H.run_trials(spec(output=str(c), workers=2))
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    agg = [p.with_suffix(".aggregate.csv").read_bytes() for p in (a, b, c)]
    assert agg[0] == agg[1] == agg[2]


def test_aggregate_recomputable_from_records(tmp_path):
    out = tmp_path / "r.jsonl"
    rep = H.run_trials(spec(output=str(out)))
    again = H.aggregate(H.read_jsonl(out))
    assert again["mean"] == pytest.approx(rep.aggregate["mean"], rel=1e-11)
    assert again["variance"] == pytest.approx(rep.aggregate["variance"], rel=1e-11)


@given(st.permutations(list(range(12))))
def test_aggregation_is_order_independent(perm):
    recs = [{"trial": i, "value": (i * 7) % 5} for i in range(12)]
    a = H.aggregate(recs)
    b = H.aggregate([recs[i] for i in perm])
    assert a["mean"] == pytest.approx(b["mean"], rel=1e-12)
    assert a["variance"] == pytest.approx(b["variance"], rel=1e-12)


def test_escape_ci_matches_binomial_formula():
    n = 10_000
    rep = H.run_trials(H.ExperimentSpec("esc", "walk.escape", {"dim": 3, "radius": 10}, n, 12))
    p = rep.aggregate["mean"]
    assert 0.5 < p < 0.8
    assert rep.aggregate["ci_half_width"] == pytest.approx(H.binomial_ci_half_width(p, n), rel=1e-3)


def test_records_validate_against_schema():
    rep = H.run_trials(H.ExperimentSpec("mjp", "mjp.upcrossings", {"n": 4}, 10, 3))
    for r in rep.records:
        H.validate_record(r, "trial_record")
    with pytest.raises(jsonschema.ValidationError):
        H.validate_record({"trial": -1, "value": 1}, "trial_record")
    with pytest.raises(jsonschema.ValidationError):
        H.validate_record({"trial": 0}, "trial_record")


def test_failed_trials_are_recorded():
    # level 0 is rejected by the walk, so every trial fails
    with pytest.raises(RuntimeError):
        H.run_trials(H.ExperimentSpec("bad", "walk.second_favorite", {"m": -1}, 3, 0))
    recs = H._run_chunk("walk.exit_time", {"radius": "x"}, 0, [0, 1])
    assert all("error" in r for r in recs)
    agg = H.aggregate(recs + [{"trial": 2, "value": 4}])
    assert agg["n"] == 1 and agg["failed"] == 2
    for r in recs:
        H.validate_record(r, "trial_record")


def test_invalid_spec():
    with pytest.raises(ValueError):
        H.run_trials(spec(target="nope"))
    with pytest.raises(ValueError):
        H.run_trials(spec(trials=0))


def test_spec_hash_ignores_execution_details():
    assert spec().spec_hash() == spec(workers=4, output="x").spec_hash()
    assert spec().spec_hash() != spec(master_seed=10).spec_hash()
    round_trip = H.ExperimentSpec.from_dict(json.loads(json.dumps(H.asdict(spec()))))
    assert round_trip.spec_hash() == spec().spec_hash()


def test_number_formatting():
    assert H.dumps({"b": 1 / 3, "a": 2}) == '{"a":2,"b":0.333333333333}'
    assert H.format_number(math.pi) == "3.14159265359"
    assert H.fmt(float("nan")) is None
    assert H.csv_text(["x", "y"], [{"x": 1, "y": None}]) == "x,y\n1,\n"


def test_default_output_dir_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv(H.OUTPUT_ENV, str(tmp_path))
    assert H.default_output_dir() == tmp_path
