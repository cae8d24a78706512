"""Command-line entry points, sweep presets and CSV reporting.

    python -m hypersched_sim run --config cfg.json --out results/
    python -m hypersched_sim sweep --preset dra --out results/ --seeds 0,1,2,3,4 --workers 4
    python -m hypersched_sim compare asha.csv hypersched.csv

The output directory defaults to ``$HYPERSCHED_SIM_OUT`` or ``./results``.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .core import ConfigError, ExperimentConfig
from .simulator import ExperimentResult, run_experiment, trace_to_jsonl

logger = logging.getLogger(__name__)

OUT_ENV = "HYPERSCHED_SIM_OUT"
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
SUMMARY_COLUMNS = (
    "scheduler", "seed", "N", "T", "scaling", "startup_delay",
    "max_score", "trial_count", "top_trial_iters",
)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepSpec:
    """A grid of experiments.

    ``axes`` maps an axis name to its values, enumerated in insertion order.
    An axis name is either an :class:`ExperimentConfig` field, the special
    ``startup_delay_frac`` (delay as a fraction of the deadline), or
    ``variant``, whose values are names looked up in ``variants`` (a mapping
    from variant name to config overrides).
    """

    name: str
    base: Dict[str, Any]
    axes: Dict[str, List[Any]]
    seeds: Sequence[int] = DEFAULT_SEEDS
    variants: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    group_by: Optional[List[str]] = None

    def cells(self) -> List[Tuple[Dict[str, Any], ExperimentConfig]]:
        names = list(self.axes)
        out = []
        for values in itertools.product(*(self.axes[n] for n in names)):
            labels = dict(zip(names, values))
            for seed in self.seeds:
                out.append((dict(labels, seed=seed), self.config_for(labels, seed)))
        return out

    def config_for(self, labels: Dict[str, Any], seed: int) -> ExperimentConfig:
        data = dict(self.base)
        for name, value in labels.items():
            if name == "variant":
                if value not in self.variants:
                    raise ConfigError(f"variant: unknown variant {value!r}")
                data.update(self.variants[value])
            elif name != "startup_delay_frac":
                data[name] = value
        if "startup_delay_frac" in labels:
            T = data.get("deadline_T", ExperimentConfig.deadline_T)
            data["startup_delay"] = labels["startup_delay_frac"] * T
        data["seed"] = seed
        return ExperimentConfig.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepSpec":
        if "axes" not in data:
            raise ConfigError("axes: sweep spec needs an 'axes' mapping")
        return cls(
            name=data.get("name", "custom"),
            base=data.get("base", {}),
            axes=data["axes"],
            seeds=data.get("seeds", DEFAULT_SEEDS),
            variants=data.get("variants", {}),
            group_by=data.get("group_by"),
        )


def _speculative_preset() -> SweepSpec:
    return SweepSpec(
        name="speculative",
        base=dict(scheduler="hypersched", base_step_time=0.1, scaling="LINEAR", max_epochs_R=500),
        axes={
            "atoms_N": [4, 8, 16, 32],
            "deadline_T": [15, 30, 60, 120],
            "variant": ["speculative", "no_speculative"],
        },
        variants={"speculative": {"speculative": True}, "no_speculative": {"speculative": False}},
    )


def _entrance_preset() -> SweepSpec:
    variants: Dict[str, Dict[str, Any]] = {"hypersched": {"scheduler": "hypersched"}}
    for frac in (0.1, 0.25, 0.5, 0.75, 1.0):
        variants[f"fixed_{frac:g}"] = {"scheduler": "fixed_fraction", "exploration_fraction": frac}
    return SweepSpec(
        name="entrance",
        base=dict(base_step_time=0.1, scaling="LINEAR", max_epochs_R=500),
        axes={"atoms_N": [4, 16], "deadline_T": [10, 20, 30], "variant": list(variants)},
        variants=variants,
    )


def _dra_preset() -> SweepSpec:
    return SweepSpec(
        name="dra",
        base=dict(scheduler="hypersched", deadline_T=10, base_step_time=0.1, max_epochs_R=500),
        axes={
            "scaling": ["LINEAR", "SQRT", "NONE"],
            "atoms_N": [2, 4, 8, 16],
            "variant": ["resize", "no_resize"],
        },
        variants={"resize": {"resize": True}, "no_resize": {"resize": False}},
    )


def _profiling_preset() -> SweepSpec:
    return SweepSpec(
        name="profiling",
        base=dict(scheduler="hypersched", atoms_N=16, deadline_T=10, scaling="SQRT",
                  base_step_time=0.1, max_epochs_R=500),
        axes={"startup_delay_frac": [0.01, 0.05, 0.10], "variant": ["profile", "no_profile"]},
        variants={"profile": {"profile": True}, "no_profile": {"profile": False}},
    )


def _sensitivity_preset() -> SweepSpec:
    return SweepSpec(
        name="sensitivity",
        base=dict(scheduler="hypersched", atoms_N=4, deadline_T=20, base_step_time=0.1,
                  max_epochs_R=500),
        axes={
            "scaling": ["LINEAR", "SQRT", "NONE"],
            "startup_delay_frac": [0.01, 0.05, 0.10, 0.20],
            "variant": ["hypersched", "no_resize"],
        },
        variants={"hypersched": {"resize": True}, "no_resize": {"resize": False}},
    )


PRESETS = {
    "speculative": _speculative_preset,
    "entrance": _entrance_preset,
    "dra": _dra_preset,
    "profiling": _profiling_preset,
    "sensitivity": _sensitivity_preset,
}


def preset(name: str, seeds: Optional[Sequence[int]] = None) -> SweepSpec:
    try:
        spec = PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"preset: unknown preset {name!r}; valid presets: {', '.join(PRESETS)}"
        ) from None
    if seeds is not None:
        spec.seeds = list(seeds)
    return spec


def _run_cell(config: ExperimentConfig) -> Dict[str, Any]:
    # results only; traces stay in the worker
    return run_experiment(config).summary_row()


def run_sweep(spec: SweepSpec, workers: int = 1) -> List[Dict[str, Any]]:
    """Run every cell of ``spec``; one row per (cell, seed), in grid order."""
    cells = spec.cells()
    configs = [cfg for _, cfg in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, configs, chunksize=1))
    else:
        rows = [_run_cell(c) for c in configs]
    out = []
    for (labels, _), row in zip(cells, rows):
        merged = dict(labels)
        for k, v in row.items():
            merged.setdefault(k, v)
        out.append(merged)
    return out


def aggregate(rows: List[Dict[str, Any]], group_by: Sequence[str]) -> List[Dict[str, Any]]:
    """Mean and population standard deviation of the metrics per cell."""
    groups: Dict[Tuple, List[Dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault(tuple(row[g] for g in group_by), []).append(row)
    out = []
    for key, members in groups.items():
        agg = dict(zip(group_by, key))
        agg["n_seeds"] = len(members)
        for metric, short in (("max_score", "score"), ("top_trial_iters", "top_iter"),
                              ("trial_count", "trial_count")):
            vals = [float(m[metric]) for m in members]
            agg[f"mean_{short}"] = statistics.fmean(vals)
            agg[f"std_{short}"] = statistics.pstdev(vals)
        out.append(agg)
    return out


def write_csv(path: Path, rows: List[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> None:
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in columns})
    path.write_text(buf.getvalue(), encoding="utf-8")


def _fmt(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return value


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# commands


def cmd_run(config_path: str, out_dir: Path) -> int:
    try:
        data = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {config_path}: {exc}", file=sys.stderr)
        return 2
    if not isinstance(data, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return 2
    try:
        config = ExperimentConfig.from_dict(data)
    except (ConfigError, TypeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    result = run_experiment(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.jsonl").write_text(trace_to_jsonl(result.trace, config), encoding="utf-8")
    write_csv(out_dir / "summary.csv", [result.summary_row()], SUMMARY_COLUMNS)
    print(f"best score: {result.max_score:.6f} (trial {result.best_trial}, "
          f"{result.top_trial_iters} iterations)")
    print(f"trials launched: {result.trial_count}")
    return 0


def cmd_sweep(spec: SweepSpec, out_dir: Path, workers: int = 1) -> int:
    rows = run_sweep(spec, workers=workers)
    out_dir.mkdir(parents=True, exist_ok=True)
    axis_names = list(spec.axes)
    per_seed_cols = axis_names + [c for c in SUMMARY_COLUMNS if c not in axis_names]
    write_csv(out_dir / f"{spec.name}_runs.csv", rows, per_seed_cols)
    group_by = spec.group_by or axis_names
    agg = aggregate(rows, group_by)
    write_csv(out_dir / f"{spec.name}.csv", agg)
    print(f"{spec.name}: {len(rows)} runs, {len(agg)} cells -> {out_dir / (spec.name + '.csv')}")
    return 0


KEY_COLUMNS = ("N", "T", "scaling", "startup_delay", "seed")


def compare_rows(
    reference: List[Dict[str, str]],
    candidate: List[Dict[str, str]],
    metric: str = "max_score",
) -> List[Dict[str, Any]]:
    """Per-seed deltas ``candidate - reference`` keyed by (N, T, scaling, delay, seed).

    Raises ``KeyError`` listing the keys present in only one input.
    """
    keys = [k for k in KEY_COLUMNS if reference and k in reference[0] and candidate and k in candidate[0]]

    def index(rows, label):
        out = {}
        for row in rows:
            key = tuple(row[k] for k in keys)
            if key in out:
                raise KeyError(f"duplicate key {dict(zip(keys, key))} in {label}")
            out[key] = row
        return out

    ref, cand = index(reference, "reference"), index(candidate, "candidate")
    missing = sorted(set(ref) ^ set(cand))
    if missing:
        raise KeyError("unmatched keys: " + "; ".join(str(dict(zip(keys, m))) for m in missing))
    out = []
    for key in ref:
        r, c = float(ref[key][metric]), float(cand[key][metric])
        row = dict(zip(keys, key))
        row.update(metric=metric, reference=r, candidate=c, delta=c - r)
        out.append(row)
    return out


def cmd_compare(paths: Sequence[str], out_dir: Optional[Path], metric: str = "max_score") -> int:
    if len(paths) < 2:
        print("error: compare needs at least two summary CSVs", file=sys.stderr)
        return 2
    tables = [read_csv(Path(p)) for p in paths]
    long_rows = []
    status = 0
    for path, table in zip(paths[1:], tables[1:]):
        try:
            deltas = compare_rows(tables[0], table, metric)
        except KeyError as exc:
            print(f"error: {paths[0]} vs {path}: {exc.args[0]}", file=sys.stderr)
            return 2
        cells: Dict[Tuple, List[float]] = {}
        for d in deltas:
            d["candidate_file"] = Path(path).name
            d["reference_file"] = Path(paths[0]).name
            long_rows.append(d)
            cell = tuple((k, d[k]) for k in ("N", "T", "scaling", "startup_delay") if k in d)
            cells.setdefault(cell, []).append(d["delta"])
        print(f"{Path(path).name} - {Path(paths[0]).name} ({metric})")
        for cell, ds in cells.items():
            mean = statistics.fmean(ds)
            verdict = "PASS" if mean >= 0 else "FLAG"
            label = " ".join(f"{k}={v}" for k, v in cell)
            print(f"  {label:<40} mean delta {mean:+.4f} over {len(ds)} seeds  {verdict}")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "compare.csv", long_rows)
    return status


def _parse_seeds(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    default_out = os.environ.get(OUT_ENV, "results")
    parser = argparse.ArgumentParser(prog="hypersched_sim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=default_out)

    p = sub.add_parser("sweep", help="run a preset or custom sweep")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset")
    g.add_argument("--spec")
    p.add_argument("--out", default=default_out)
    p.add_argument("--seeds", type=_parse_seeds, default=None)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("compare", help="per-seed deltas between summary CSVs")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--metric", default="max_score")
    p.add_argument("--out", default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "run":
        return cmd_run(args.config, Path(args.out))
    if args.command == "sweep":
        try:
            if args.preset:
                spec = preset(args.preset, args.seeds)
            else:
                spec = SweepSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
                if args.seeds is not None:
                    spec.seeds = args.seeds
            spec.cells()  # validates every config up front
        except (ConfigError, OSError, json.JSONDecodeError, TypeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return cmd_sweep(spec, Path(args.out), workers=max(1, args.workers))
    if args.command == "compare":
        return cmd_compare(args.csvs, Path(args.out) if args.out else None, args.metric)
    return 2
