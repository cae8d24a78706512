"""Pluggable scheduling policies: ASHA, HyperSched and fixed exploration baselines.

A scheduler sees the simulation only through a read-only view exposing
``now``, ``config``, ``cluster`` and ``live_trials()``. Every scheduler owns
its rungs.
"""
from __future__ import annotations

import heapq
import logging
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .allocator import live_ranking, resize_gain_check, uniform_allocation
from .core import (
    CONTINUE,
    PAUSE,
    STOP,
    ExperimentConfig,
    Rung,
    ScalingKind,
    SchedulerDecision,
    Trial,
    TrialState,
    top_k_count,
)
from .trial_model import ScalingFunction, speedup

logger = logging.getLogger(__name__)


class RunningMedian:
    """Streaming median over two heaps."""

    def __init__(self):
        self._lo: List[float] = []  # max-heap via negation
        self._hi: List[float] = []

    def __len__(self) -> int:
        return len(self._lo) + len(self._hi)

    def add(self, x: float) -> None:
        if self._lo and x > -self._lo[0]:
            heapq.heappush(self._hi, x)
        else:
            heapq.heappush(self._lo, -x)
        if len(self._lo) > len(self._hi) + 1:
            heapq.heappush(self._hi, -heapq.heappop(self._lo))
        elif len(self._hi) > len(self._lo):
            heapq.heappush(self._lo, -heapq.heappop(self._hi))

    def low(self) -> float:
        """Lower median (the middle element for odd counts)."""
        if not self._lo:
            raise ValueError("median of empty sample")
        return -self._lo[0]

    def median(self) -> float:
        if not self._lo:
            raise ValueError("median of empty sample")
        if len(self._lo) > len(self._hi):
            return -self._lo[0]
        return (-self._lo[0] + self._hi[0]) / 2.0


class Profiler:
    """Measured startup overhead and one-atom step time.

    Step observations are normalised to one atom with the scheduler's own
    scaling model, which may differ from the true workload.
    """

    def __init__(
        self,
        model_scaling: ScalingKind,
        prior_step_time: float,
        prior_overhead: float,
        track_overhead: bool = True,
    ):
        self.model_scaling = ScalingKind(model_scaling)
        self.prior_step_time = prior_step_time
        self.prior_overhead = prior_overhead
        self.track_overhead = track_overhead
        self._overheads = RunningMedian()
        self._steps = RunningMedian()
        self.last_update: Optional[float] = None

    def observe_overhead(self, duration: float, now: float) -> None:
        self._overheads.add(duration)
        self.last_update = now

    def observe_step(self, duration: float, atoms: int, now: float) -> None:
        self._steps.add(duration * speedup(self.model_scaling, atoms))
        self.last_update = now

    @property
    def t_o(self) -> float:
        if not self.track_overhead:
            return 0.0
        if not len(self._overheads):
            return self.prior_overhead
        return self._overheads.low()

    @property
    def t_a(self) -> float:
        if not len(self._steps):
            return self.prior_step_time
        return self._steps.median()

    @property
    def n_overhead_samples(self) -> int:
        return len(self._overheads)

    @property
    def n_step_samples(self) -> int:
        return len(self._steps)


def promote_or_launch(
    rungs: Iterable[Rung],
    trials: Dict[int, Trial],
    entrance_ok: bool,
    eta: int,
    eligible: Optional[Callable[[Trial], bool]] = None,
) -> Optional[Tuple[str, Optional[Trial]]]:
    """Choose what to run on a free atom.

    Rungs are scanned from the highest milestone down; within a rung the top
    ``floor(n/eta)`` recorded trials are scanned best-first and the first one
    paused at that rung is resumed. Otherwise a fresh trial is launched when
    the entrance policy allows it.

    Returns ``("resume", trial)``, ``("launch", None)`` or ``None``.
    """
    for rung in sorted(rungs, key=lambda r: r.milestone, reverse=True):
        k = top_k_count(len(rung), eta, speculative=False)
        for tid in rung.paused_within(k):
            trial = trials[tid]
            if trial.state is not TrialState.PAUSED or trial.highest_rung != rung.milestone:
                raise RuntimeError(f"stale paused index entry for trial {tid}")
            if eligible is not None and not eligible(trial):
                continue
            return ("resume", trial)
    if entrance_ok:
        return ("launch", None)
    return None


class Scheduler:
    """Base class holding the rung ladder and the common contract."""

    name = "base"

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.eta = config.eta
        self.R = config.max_epochs_R
        self.rungs: Dict[int, Rung] = {m: Rung(m) for m in config.rungs}

    # contract -------------------------------------------------------------
    def entrance_policy(self, sim) -> bool:
        raise NotImplementedError

    def schedule(self, trial: Trial, sim) -> SchedulerDecision:
        raise NotImplementedError

    def on_trial_event(self, trial: Trial, event: str, sim, **info) -> None:
        # keep each rung's index of trials paused there
        if event == "paused" and trial.highest_rung is not None:
            self.rungs[trial.highest_rung].mark_paused(trial.id)
        elif event in ("resumed", "terminated") and trial.highest_rung is not None:
            self.rungs[trial.highest_rung].unmark_paused(trial.id)

    def promotable(self, trial: Trial) -> bool:
        return True

    # helpers ----------------------------------------------------------------
    def _record(self, trial: Trial) -> Optional[Rung]:
        rung = self.rungs.get(trial.iter)
        if rung is None or trial.id in rung:
            return None
        rung.record(trial.id, trial.current_score)
        trial.rung_scores[rung.milestone] = trial.current_score
        return rung

    def _asha_rung_check(self, trial: Trial) -> SchedulerDecision:
        rung = self._record(trial)
        if rung is not None:
            k = top_k_count(len(rung), self.eta, speculative=False)
            if rung.rank_of(trial.id) >= k:
                return PAUSE
        return CONTINUE

    def select(self, sim) -> Optional[Tuple[str, Optional[Trial]]]:
        return promote_or_launch(
            self.rungs.values(),
            sim.trials,
            self.entrance_policy(sim),
            self.eta,
            eligible=self.promotable,
        )


def asha_entrance(n_live: int, atoms_N: int) -> bool:
    return n_live < atoms_N


class ASHAScheduler(Scheduler):
    name = "asha"

    def entrance_policy(self, sim) -> bool:
        return asha_entrance(len(sim.live_trials()), self.config.atoms_N)

    def schedule(self, trial: Trial, sim) -> SchedulerDecision:
        if trial.iter >= self.R:
            return STOP
        return self._asha_rung_check(trial)


def hypersched_entrance(
    allocated: int,
    atoms_N: int,
    R: int,
    t_a: float,
    t_f: float,
    eta: int,
    remaining: float,
) -> bool:
    if allocated >= atoms_N:
        return False
    return min(R * t_a, t_f * eta) < remaining


def fixed_fraction_entrance(
    fraction: float, now: float, deadline_T: float, n_live: int, atoms_N: int
) -> bool:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"exploration fraction must be in [0, 1], got {fraction}")
    return now < fraction * deadline_T and n_live < atoms_N


class HyperSchedScheduler(Scheduler):
    """Deadline-aware ASHA with speculative evaluation and elastic allocation.

    Every mechanism can be switched off for ablations: ``speculative``
    (first arrivals run, later arrivals may retroactively pause them),
    ``entrance`` ("deadline" or "asha"), ``resize`` and ``cooldown=None``
    (no reallocation), and ``profile`` (False forces a LINEAR internal model
    with zero overhead).
    """

    name = "hypersched"

    def __init__(self, config: ExperimentConfig):
        super().__init__(config)
        self.speculative = config.speculative
        self.entrance = config.entrance
        self.cooldown = config.cooldown if config.resize else None
        if config.profile:
            model = config.model_scaling or config.scaling
            prior_overhead = config.startup_delay
        else:
            model = ScalingKind.LINEAR
            prior_overhead = 0.0
        self.model = ScalingFunction.from_step_time(model, config.base_step_time)
        self.profiler = Profiler(
            model,
            prior_step_time=config.base_step_time,
            prior_overhead=prior_overhead,
            track_overhead=config.profile,
        )

    # timings ----------------------------------------------------------------
    def on_trial_event(self, trial: Trial, event: str, sim, **info) -> None:
        super().on_trial_event(trial, event, sim, **info)
        if event == "startup":
            self.profiler.observe_overhead(info["overhead"], sim.now)
        elif event == "step":
            self.profiler.observe_step(info["duration"], info["atoms"], sim.now)

    def furthest_time(self, sim) -> float:
        return max((t.total_running_time for t in sim.live_trials()), default=0.0)

    # entrance -----------------------------------------------------------------
    def entrance_policy(self, sim) -> bool:
        live = sim.live_trials()
        if self.entrance == "asha":
            return asha_entrance(len(live), self.config.atoms_N)
        return hypersched_entrance(
            allocated=sum(t.atoms for t in live),
            atoms_N=self.config.atoms_N,
            R=self.R,
            t_a=self.profiler.t_a,
            t_f=self.furthest_time(sim),
            eta=self.eta,
            remaining=self.config.deadline_T - sim.now,
        )

    # rung logic -------------------------------------------------------------
    def cutoff(self, rung: Rung) -> Optional[float]:
        return rung.kth_best(top_k_count(len(rung), self.eta, speculative=True))

    def passes_cutoffs(self, trial: Trial) -> bool:
        for m, s in trial.rung_scores.items():
            cut = self.cutoff(self.rungs[m])
            if cut is not None and s < cut:
                return False
        return True

    def promotable(self, trial: Trial) -> bool:
        if not self.speculative:
            return True
        return self.passes_cutoffs(trial)

    def resize_allowed(self, sim) -> bool:
        return self.cooldown is not None

    def schedule(self, trial: Trial, sim) -> SchedulerDecision:
        # profiler timings were updated by on_trial_event for this step
        if trial.iter >= self.R:
            return STOP
        if self.speculative:
            self._record(trial)
            if not self.passes_cutoffs(trial):
                return PAUSE
        else:
            if self._asha_rung_check(trial) is PAUSE:
                return PAUSE
        return self._maybe_resize(trial, sim)

    def proposed_atoms(self, trial: Trial, sim) -> int:
        targets = uniform_allocation(live_ranking(sim.live_trials()), self.config.atoms_N)
        return targets[trial.id]

    def _maybe_resize(self, trial: Trial, sim) -> SchedulerDecision:
        if not self.resize_allowed(sim):
            return CONTINUE
        if trial.iters_since_resize <= self.cooldown:
            return CONTINUE
        target = self.proposed_atoms(trial, sim)
        if target <= trial.atoms:
            return CONTINUE
        ok = resize_gain_check(
            trial.atoms,
            target,
            remaining_time=self.config.deadline_T - sim.now,
            overhead=self.profiler.t_o,
            scaling=self.model,
        )
        if not ok:
            return CONTINUE
        return SchedulerDecision(CONTINUE.verdict, resize_to=target)


class FixedFractionScheduler(HyperSchedScheduler):
    """Explore only during the first ``fraction * T`` time, then exploit.

    Pausing follows ASHA; uniform reallocation starts once the exploration
    window has closed.
    """

    name = "fixed_fraction"

    def __init__(self, config: ExperimentConfig):
        super().__init__(config)
        self.fraction = config.exploration_fraction
        self.speculative = False

    def entrance_policy(self, sim) -> bool:
        return fixed_fraction_entrance(
            self.fraction,
            sim.now,
            self.config.deadline_T,
            len(sim.live_trials()),
            self.config.atoms_N,
        )

    def resize_allowed(self, sim) -> bool:
        return self.cooldown is not None and sim.now >= self.fraction * self.config.deadline_T


SCHEDULERS = {
    "asha": ASHAScheduler,
    "hypersched": HyperSchedScheduler,
    "fixed_fraction": FixedFractionScheduler,
}


def make_scheduler(config: ExperimentConfig) -> Scheduler:
    return SCHEDULERS[config.scheduler](config)
