"""Regenerate the golden regression traces under tests/golden/.

Run only after an intentional behaviour change, and audit the new traces
(tests/tracecheck.py) before committing them.
"""
import hashlib
import json
import sys
from pathlib import Path

from hypersched_sim import ExperimentConfig, run_experiment
from hypersched_sim.simulator import trace_to_jsonl

GOLDEN = {
    "asha_N4_T15_seed0": dict(scheduler="asha", atoms_N=4, deadline_T=15, seed=0),
    "hypersched_N4_T15_seed0": dict(scheduler="hypersched", atoms_N=4, deadline_T=15, seed=0),
    "hypersched_N8_T10_sqrt_delay_seed3": dict(
        scheduler="hypersched", atoms_N=8, deadline_T=10, scaling="SQRT", startup_delay=0.5, seed=3
    ),
}


def main(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, overrides in GOLDEN.items():
        cfg = ExperimentConfig.from_dict(overrides)
        res = run_experiment(cfg)
        text = trace_to_jsonl(res.trace, cfg)
        record = {
            "config": overrides,
            "trial_count": res.trial_count,
            "max_score": res.max_score,
            "best_trial": res.best_trial,
            "top_trial_iters": res.top_trial_iters,
            "n_records": len(res.trace),
            "n_resizes": res.n_resizes,
            "trace_sha256": hashlib.sha256(text.encode()).hexdigest(),
        }
        (out_dir / f"{name}.json").write_text(json.dumps(record, indent=1) + "\n")
        print(name, record["trial_count"], record["max_score"])


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parents[1] / "tests" / "golden")
