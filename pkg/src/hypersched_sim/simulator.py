"""Deterministic discrete-event engine with a virtual clock.

Three event kinds drive everything: a trial finishing its startup (or
resize restart), a trial finishing one training step, and the deadline.
Scheduling decisions happen only at step completions; freed atoms are
refilled immediately through the scheduler's promote-or-launch choice.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Tuple

from .allocator import ClusterState
from .core import ExperimentConfig, Trial, TrialState, Verdict
from .schedulers import Scheduler, make_scheduler
from .trial_model import ScalingFunction, rng_stream, sample_hyperparams, score

SCHEMA_VERSION = 1

STARTUP_COMPLETE = "STARTUP_COMPLETE"
STEP_COMPLETE = "STEP_COMPLETE"
DEADLINE = "DEADLINE"


@dataclass
class TraceRecord:
    """One line of the event trace. Field order is the JSONL field order."""

    seq: int
    time: float
    event: str  # launch | resume | startup_complete | step | resize | terminate | deadline
    trial: Optional[int] = None
    iter: Optional[int] = None
    score: Optional[float] = None
    atoms_before: Optional[int] = None
    atoms_after: Optional[int] = None
    state: Optional[str] = None
    decision: Optional[str] = None
    duration: Optional[float] = None
    rung: Optional[int] = None
    rung_rank: Optional[int] = None
    rung_size: Optional[int] = None
    used_atoms: Optional[int] = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    best_trial: Optional[int]
    max_score: float
    trial_count: int
    top_trial_iters: int
    score_curve: List[Tuple[float, float]]
    n_resizes: int
    final_time: float
    trace: List[TraceRecord] = field(repr=False, default_factory=list)

    def summary_row(self) -> Dict[str, object]:
        c = self.config
        return {
            "scheduler": scheduler_label(c),
            "seed": c.seed,
            "N": c.atoms_N,
            "T": c.deadline_T,
            "scaling": c.scaling.value,
            "startup_delay": c.startup_delay,
            "max_score": self.max_score,
            "trial_count": self.trial_count,
            "top_trial_iters": self.top_trial_iters,
        }


def scheduler_label(config: ExperimentConfig) -> str:
    if config.scheduler == "fixed_fraction":
        return f"fixed_fraction_{config.exploration_fraction:g}"
    return config.scheduler


class Simulation:
    """One experiment. Create, call :meth:`run`, read the result."""

    def __init__(self, config: ExperimentConfig, scheduler: Optional[Scheduler] = None):
        self.config = config
        self.scheduler = scheduler or make_scheduler(config)
        self.cluster = ClusterState(config.atoms_N)
        self.scaling = ScalingFunction.from_step_time(config.scaling, config.base_step_time)
        self.now = 0.0
        self.trials: Dict[int, Trial] = {}
        self.trace: List[TraceRecord] = []
        self._queue: List[Tuple[float, int, str, Optional[int]]] = []
        self._seq = 0
        self._step_started: Dict[int, Tuple[float, int]] = {}
        self._startup_began: Dict[int, float] = {}
        self._sampler = rng_stream(config.seed, "hyperparams")
        self._live: Dict[int, Trial] = {}
        self._done = False

    # view used by schedulers ------------------------------------------------
    def live_trials(self) -> List[Trial]:
        return list(self._live.values())

    # plumbing -------------------------------------------------------------
    def _push(self, time: float, kind: str, trial_id: Optional[int] = None) -> None:
        heapq.heappush(self._queue, (time, self._seq, kind, trial_id))
        self._seq += 1

    def _emit(self, event: str, trial: Optional[Trial] = None, **fields) -> None:
        rec = TraceRecord(seq=len(self.trace), time=self.now, event=event, **fields)
        if trial is not None:
            rec.trial = trial.id
            rec.iter = trial.iter
            rec.state = trial.state.value if trial.state else None
            if rec.atoms_after is None:
                rec.atoms_after = trial.atoms
        rec.used_atoms = self.cluster.used
        self.trace.append(rec)
        self.cluster.check()
        if self.cluster.used > self.config.atoms_N:
            raise AssertionError("atom conservation violated")

    def _start(self, trial: Trial, event: str) -> None:
        if trial.state is TrialState.PAUSED:
            self.scheduler.on_trial_event(trial, "resumed", self)
        trial.set_state(TrialState.PENDING_START)
        self._live[trial.id] = trial
        self.cluster.acquire(trial.id, 1)
        trial.atoms = 1
        trial.iters_since_resize = 0
        if trial.start_time is None:
            trial.start_time = self.now
        self._startup_began[trial.id] = self.now
        self._push(self.now + self.config.startup_delay, STARTUP_COMPLETE, trial.id)
        self._emit(event, trial, atoms_before=0, score=trial.current_score)

    def launch_new_trial(self) -> Trial:
        tid = len(self.trials)
        sample = sample_hyperparams(self._sampler, self.config.exp_scale)
        trial = Trial(id=tid, sample=sample)
        trial.current_score = score(sample, 0)
        self.trials[tid] = trial
        self._start(trial, "launch")
        return trial

    def resume(self, trial: Trial) -> None:
        self._start(trial, "resume")

    def _release(self, trial: Trial, new_state: TrialState) -> int:
        held = self.cluster.release(trial.id)
        trial.atoms = 0
        trial.set_state(new_state)
        del self._live[trial.id]
        if new_state is TrialState.PAUSED:
            self.scheduler.on_trial_event(trial, "paused", self)
        return held

    def fill(self) -> None:
        while self.cluster.free >= 1:
            action = self.scheduler.select(self)
            if action is None:
                return
            kind, trial = action
            if kind == "resume":
                self.resume(trial)
            else:
                self.launch_new_trial()

    # event handlers -------------------------------------------------------
    def _on_startup_complete(self, trial: Trial) -> None:
        overhead = self.now - self._startup_began.pop(trial.id)
        trial.set_state(TrialState.RUNNING)
        self.scheduler.on_trial_event(trial, "startup", self, overhead=overhead)
        self._begin_step(trial)
        self._emit("startup_complete", trial, atoms_before=trial.atoms, duration=overhead)

    def _begin_step(self, trial: Trial) -> None:
        self._step_started[trial.id] = (self.now, trial.atoms)
        dt = self.scaling.step_duration(trial.atoms)
        self._push(self.now + dt, STEP_COMPLETE, trial.id)

    def _on_step_complete(self, trial: Trial) -> None:
        started, atoms = self._step_started.pop(trial.id)
        duration = self.now - started
        trial.iter += 1
        trial.current_score = score(trial.sample, trial.iter)
        trial.total_running_time += duration
        trial.iters_since_resize += 1
        self.scheduler.on_trial_event(trial, "step", self, duration=duration, atoms=atoms)
        decision = self.scheduler.schedule(trial, self)

        rung_fields = {}
        rung = self.scheduler.rungs.get(trial.iter)
        if rung is not None and trial.id in rung:
            rung_fields = dict(
                rung=rung.milestone,
                rung_rank=rung.rank_of(trial.id) + 1,
                rung_size=len(rung),
            )

        before = trial.atoms
        if decision.verdict is Verdict.STOP:
            self._release(trial, TrialState.STOPPED)
        elif decision.verdict is Verdict.PAUSE:
            self._release(trial, TrialState.PAUSED)
        label = decision.verdict.value
        resized = False
        if decision.verdict is Verdict.CONTINUE:
            target = decision.resize_to
            if target is not None and target != before:
                if target - before <= self.cluster.free:
                    resized = True
                else:
                    label = "CONTINUE_RESIZE_SKIPPED"
            if not resized:
                self._begin_step(trial)
        self._emit(
            "step",
            trial,
            atoms_before=before,
            score=trial.current_score,
            decision=label,
            duration=duration,
            **rung_fields,
        )
        if resized:
            self.apply_resize(trial, decision.resize_to)
        if self.cluster.free >= 1:
            self.fill()

    def apply_resize(self, trial: Trial, new_atoms: int) -> None:
        """Checkpoint, restart on ``new_atoms`` and pay the startup delay."""
        before = trial.atoms
        if new_atoms == before:
            return
        self.cluster.resize(trial.id, new_atoms)
        trial.atoms = new_atoms
        trial.set_state(TrialState.PENDING_START)
        trial.iters_since_resize = 0
        self._startup_began[trial.id] = self.now
        self._push(self.now + self.config.startup_delay, STARTUP_COMPLETE, trial.id)
        self._emit("resize", trial, atoms_before=before, score=trial.current_score)

    def _on_deadline(self) -> None:
        self._emit("deadline")
        for trial in self.trials.values():
            if trial.state is not None and not trial.state.is_terminal:
                before = trial.atoms
                if trial.state is TrialState.PAUSED:
                    self.scheduler.on_trial_event(trial, "terminated", self)
                self.cluster.release(trial.id)
                self._live.pop(trial.id, None)
                trial.atoms = 0
                trial.set_state(TrialState.TERMINATED_AT_DEADLINE)
                self._emit("terminate", trial, atoms_before=before, score=trial.current_score)

    # driver ---------------------------------------------------------------
    def run(self) -> ExperimentResult:
        if self._done:
            raise RuntimeError("simulation already run")
        T = self.config.deadline_T
        self._push(T, DEADLINE)
        self.launch_new_trial()
        self.fill()
        while self._queue:
            time, _, kind, tid = heapq.heappop(self._queue)
            if time < self.now:
                raise AssertionError("event queue went back in time")
            if time > T:
                break
            self.now = time
            if kind == DEADLINE:
                self._on_deadline()
                break
            trial = self.trials[tid]
            if kind == STARTUP_COMPLETE:
                self._on_startup_complete(trial)
            elif kind == STEP_COMPLETE:
                self._on_step_complete(trial)
        self._done = True
        return compute_metrics(self.trace, self.config)


def compute_metrics(trace: Iterable[TraceRecord], config: ExperimentConfig) -> ExperimentResult:
    """Summarise a trace: best score, trial count, top-trial iterations, score curve."""
    trace = list(trace)
    launched = set()
    best_score: Dict[int, float] = {}
    last_iter: Dict[int, int] = {}
    curve: List[Tuple[float, float]] = []
    running_max = -math.inf
    n_resizes = 0
    final_time = 0.0
    for rec in trace:
        final_time = max(final_time, rec.time)
        if rec.event == "launch":
            launched.add(rec.trial)
        elif rec.event == "resize":
            n_resizes += 1
        elif rec.event == "step":
            best_score[rec.trial] = rec.score
            last_iter[rec.trial] = rec.iter
            if rec.score > running_max:
                running_max = rec.score
            curve.append((rec.time, running_max))
    if best_score:
        best = min(best_score, key=lambda tid: (-best_score[tid], tid))
        max_score = best_score[best]
        top_iters = last_iter[best]
    else:
        best, max_score, top_iters = None, math.nan, 0
    return ExperimentResult(
        config=config,
        best_trial=best,
        max_score=max_score,
        trial_count=len(launched),
        top_trial_iters=top_iters,
        score_curve=curve,
        n_resizes=n_resizes,
        final_time=final_time,
        trace=trace,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    return Simulation(config).run()


_RECORD_FIELDS = tuple(f.name for f in fields(TraceRecord))


def trace_to_jsonl(trace: Iterable[TraceRecord], config: Optional[ExperimentConfig] = None) -> str:
    lines = []
    if config is not None:
        header = {"schema_version": SCHEMA_VERSION, "event": "header", "config": config.to_dict()}
        lines.append(json.dumps(header))
    names = _RECORD_FIELDS
    encode = json.JSONEncoder().encode
    for rec in trace:
        row = {"schema_version": SCHEMA_VERSION}
        for name in names:
            row[name] = getattr(rec, name)
        lines.append(encode(row))
    return "\n".join(lines) + "\n"


def trace_from_jsonl(text: str) -> List[TraceRecord]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        if row.get("event") == "header":
            continue
        row.pop("schema_version", None)
        out.append(TraceRecord(**row))
    return out
