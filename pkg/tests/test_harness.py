import csv
import json
import statistics

import pytest

from hypersched_sim.core import ConfigError
from hypersched_sim.harness import (
    PRESETS,
    SweepSpec,
    aggregate,
    compare_rows,
    main,
    preset,
    read_csv,
    run_sweep,
)


def write_config(tmp_path, **overrides):
    cfg = dict(scheduler="hypersched", atoms_N=4, deadline_T=5, seed=0)
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(write_config(tmp_path)), "--out", str(out)]) == 0
    assert (out / "trace.jsonl").exists()
    rows = read_csv(out / "summary.csv")
    assert list(rows[0]) == ["scheduler", "seed", "N", "T", "scaling", "startup_delay",
                             "max_score", "trial_count", "top_trial_iters"]
    printed = capsys.readouterr().out
    assert "best score" in printed and "trials launched" in printed


def test_run_rejects_bad_eta(tmp_path, capsys):
    rc = main(["run", "--config", str(write_config(tmp_path, eta=1)), "--out", str(tmp_path)])
    assert rc != 0
    assert "eta" in capsys.readouterr().err


def test_run_rejects_unknown_scheduler(tmp_path, capsys):
    rc = main(["run", "--config", str(write_config(tmp_path, scheduler="bohb")), "--out", str(tmp_path)])
    assert rc != 0
    assert "scheduler" in capsys.readouterr().err


def test_run_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, scaling="SQRT", startup_delay=0.1)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    for name in ("trace.jsonl", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_out_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("HYPERSCHED_SIM_OUT", str(tmp_path / "envout"))
    assert main(["run", "--config", str(write_config(tmp_path))]) == 0
    assert (tmp_path / "envout" / "trace.jsonl").exists()


def test_unknown_preset_lists_valid(capsys, tmp_path):
    assert main(["sweep", "--preset", "nope", "--out", str(tmp_path)]) != 0
    err = capsys.readouterr().err
    for name in PRESETS:
        assert name in err


def test_preset_grids():
    dra = preset("dra")
    assert dra.axes == {
        "scaling": ["LINEAR", "SQRT", "NONE"],
        "atoms_N": [2, 4, 8, 16],
        "variant": ["resize", "no_resize"],
    }
    assert dra.base["deadline_T"] == 10
    prof = preset("profiling")
    assert prof.base["atoms_N"] == 16 and prof.base["deadline_T"] == 10
    assert prof.axes["startup_delay_frac"] == [0.01, 0.05, 0.10]
    cells = prof.cells()
    delays = sorted({c.startup_delay for _, c in cells})
    assert delays == pytest.approx([0.1, 0.5, 1.0])
    sens = preset("sensitivity")
    assert sens.base["atoms_N"] == 4 and sens.base["deadline_T"] == 20
    assert sens.axes["startup_delay_frac"] == [0.01, 0.05, 0.10, 0.20]
    spec = preset("speculative")
    assert spec.axes["deadline_T"] == [15, 30, 60, 120]
    assert list(preset("dra").seeds) == [0, 1, 2, 3, 4]


def test_sweep_enumeration_order():
    spec = SweepSpec(name="t", base={"deadline_T": 2}, axes={"atoms_N": [1, 2], "eta": [2, 3]},
                     seeds=[5, 6])
    labels = [l for l, _ in spec.cells()]
    assert labels[0] == {"atoms_N": 1, "eta": 2, "seed": 5}
    assert labels[1] == {"atoms_N": 1, "eta": 2, "seed": 6}
    assert labels[-1] == {"atoms_N": 2, "eta": 3, "seed": 6}


def test_sweep_rejects_unknown_variant():
    spec = SweepSpec(name="t", base={}, axes={"variant": ["x"]})
    with pytest.raises(ConfigError):
        spec.cells()


def test_aggregation_matches_per_seed_rows(tmp_path):
    assert main(["sweep", "--preset", "profiling", "--out", str(tmp_path), "--seeds", "0,1,2"]) == 0
    runs = read_csv(tmp_path / "profiling_runs.csv")
    agg = read_csv(tmp_path / "profiling.csv")
    assert len(runs) == 3 * 2 * 3 and len(agg) == 6
    for cell in agg:
        members = [float(r["max_score"]) for r in runs
                   if r["variant"] == cell["variant"]
                   and r["startup_delay_frac"] == cell["startup_delay_frac"]]
        assert float(cell["mean_score"]) == pytest.approx(statistics.fmean(members), rel=1e-12)
        assert float(cell["std_score"]) == pytest.approx(statistics.pstdev(members), rel=1e-9, abs=1e-15)


def test_sweep_parallel_matches_serial(tmp_path):
    assert main(["sweep", "--preset", "profiling", "--out", str(tmp_path / "s"), "--seeds", "0,1"]) == 0
    assert main(["sweep", "--preset", "profiling", "--out", str(tmp_path / "p"), "--seeds", "0,1",
                 "--workers", "2"]) == 0
    for name in ("profiling.csv", "profiling_runs.csv"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_custom_spec_file(tmp_path):
    spec = {"name": "mine", "base": {"deadline_T": 3, "scheduler": "asha"},
            "axes": {"atoms_N": [2, 4]}, "seeds": [1]}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    assert main(["sweep", "--spec", str(path), "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "mine.csv")) == 2


def _summaries(tmp_path, name, **overrides):
    spec = SweepSpec(name=name, base=dict(deadline_T=15, **overrides), axes={"atoms_N": [4]},
                     seeds=[0, 1, 2, 3, 4])
    rows = run_sweep(spec)
    path = tmp_path / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path


def test_compare_self_is_zero(tmp_path, capsys):
    a = _summaries(tmp_path, "a")
    assert main(["compare", str(a), str(a), "--out", str(tmp_path / "cmp")]) == 0
    rows = read_csv(tmp_path / "cmp" / "compare.csv")
    assert rows and all(float(r["delta"]) == 0.0 for r in rows)


def test_compare_speculative_vs_not(tmp_path, capsys):
    off = _summaries(tmp_path, "nospec", speculative=False)
    on = _summaries(tmp_path, "spec", speculative=True)
    assert main(["compare", str(off), str(on)]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FLAG" not in out


def test_compare_disjoint_seeds_errors(tmp_path, capsys):
    a = _summaries(tmp_path, "a")
    rows = read_csv(a)
    for r in rows:
        r["seed"] = str(int(r["seed"]) + 100)
    b = tmp_path / "b.csv"
    with open(b, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    assert main(["compare", str(a), str(b)]) != 0
    assert "unmatched keys" in capsys.readouterr().err
    with pytest.raises(KeyError):
        compare_rows(read_csv(a), read_csv(b))


def test_aggregate_population_spread():
    rows = [{"g": 1, "max_score": 1.0, "top_trial_iters": 2, "trial_count": 3},
            {"g": 1, "max_score": 3.0, "top_trial_iters": 4, "trial_count": 5}]
    (cell,) = aggregate(rows, ["g"])
    assert cell["mean_score"] == 2.0 and cell["std_score"] == 1.0
