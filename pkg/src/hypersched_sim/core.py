"""Domain types shared by the schedulers, the allocator and the simulator."""
from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple


class ConfigError(ValueError):
    """Raised for an invalid experiment configuration."""


class TrialState(str, enum.Enum):
    PENDING_START = "PENDING_START"
    RUNNING = "RUNNING"
    PAUSED = "PAUSED"
    STOPPED = "STOPPED"
    TERMINATED_AT_DEADLINE = "TERMINATED_AT_DEADLINE"

    @property
    def is_live(self) -> bool:
        return self in (TrialState.RUNNING, TrialState.PENDING_START)

    @property
    def is_terminal(self) -> bool:
        return self in (TrialState.STOPPED, TrialState.TERMINATED_AT_DEADLINE)


LEGAL_TRANSITIONS: Dict[Optional[TrialState], frozenset] = {
    # None is the "not yet launched" pseudo-state.
    None: frozenset({TrialState.PENDING_START}),
    TrialState.PENDING_START: frozenset(
        {TrialState.RUNNING, TrialState.TERMINATED_AT_DEADLINE}
    ),
    TrialState.RUNNING: frozenset(
        {
            TrialState.PAUSED,
            TrialState.STOPPED,
            TrialState.PENDING_START,
            TrialState.TERMINATED_AT_DEADLINE,
        }
    ),
    TrialState.PAUSED: frozenset(
        {TrialState.PENDING_START, TrialState.TERMINATED_AT_DEADLINE}
    ),
    TrialState.STOPPED: frozenset(),
    TrialState.TERMINATED_AT_DEADLINE: frozenset(),
}


def is_legal_transition(src: Optional[TrialState], dst: TrialState) -> bool:
    return dst in LEGAL_TRANSITIONS[src]


class ScalingKind(str, enum.Enum):
    LINEAR = "LINEAR"
    SQRT = "SQRT"
    NONE = "NONE"


class Verdict(str, enum.Enum):
    CONTINUE = "CONTINUE"
    PAUSE = "PAUSE"
    STOP = "STOP"


@dataclass(frozen=True)
class HyperparamSample:
    """Parameters of one synthetic learning curve."""

    b0: float
    b1: float
    b2: float

    def __post_init__(self):
        for name in ("b0", "b1", "b2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.b0 < 0:
            raise ValueError(f"b0 must be >= 0, got {self.b0}")
        if not 0.0 <= self.b1 <= 1.0:
            raise ValueError(f"b1 must be in [0, 1], got {self.b1}")
        if not 0.0 <= self.b2 <= 1.0:
            raise ValueError(f"b2 must be in [0, 1], got {self.b2}")


@dataclass(frozen=True)
class SchedulerDecision:
    verdict: Verdict
    resize_to: Optional[int] = None

    def __post_init__(self):
        if self.resize_to is not None:
            if self.verdict is not Verdict.CONTINUE:
                raise ValueError("resize_to requires a CONTINUE verdict")
            if self.resize_to < 1:
                raise ValueError("resize_to must be positive")


CONTINUE = SchedulerDecision(Verdict.CONTINUE)
PAUSE = SchedulerDecision(Verdict.PAUSE)
STOP = SchedulerDecision(Verdict.STOP)


@dataclass
class Trial:
    id: int
    sample: HyperparamSample
    iter: int = 0
    atoms: int = 0
    state: Optional[TrialState] = None
    rung_scores: Dict[int, float] = field(default_factory=dict)
    current_score: float = 0.0
    start_time: Optional[float] = None
    total_running_time: float = 0.0
    iters_since_resize: int = 0

    def set_state(self, new: TrialState) -> None:
        if not is_legal_transition(self.state, new):
            raise RuntimeError(
                f"trial {self.id}: illegal transition {self.state} -> {new}"
            )
        self.state = new

    @property
    def is_live(self) -> bool:
        return self.state is not None and self.state.is_live

    @property
    def highest_rung(self) -> Optional[int]:
        return max(self.rung_scores) if self.rung_scores else None


class Rung:
    """Scores recorded at one milestone iteration.

    Entries are kept sorted best-first; ties go to the earlier arrival and
    then to the lower trial id. The rung also indexes which of its trials are
    currently paused here, so promotion does not rescan every entry.
    """

    def __init__(self, milestone: int):
        if milestone < 1:
            raise ValueError("milestone must be positive")
        self.milestone = milestone
        self._keys: List[Tuple[float, int, int]] = []  # (-score, arrival, trial_id)
        self._by_id: Dict[int, Tuple[float, int, int]] = {}
        self._paused: List[Tuple[float, int, int]] = []

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, trial_id: int) -> bool:
        return trial_id in self._by_id

    def record(self, trial_id: int, score: float) -> None:
        if not math.isfinite(score):
            raise ValueError(f"non-finite score {score!r} for trial {trial_id}")
        if trial_id in self._by_id:
            raise ValueError(
                f"trial {trial_id} already recorded at rung {self.milestone}"
            )
        key = (-score, len(self._keys), trial_id)
        self._by_id[trial_id] = key
        bisect.insort(self._keys, key)

    def score_of(self, trial_id: int) -> float:
        return -self._by_id[trial_id][0]

    def rank_of(self, trial_id: int) -> int:
        """0-based position of the trial in best-first order."""
        return bisect.bisect_left(self._keys, self._by_id[trial_id])

    def ranked(self) -> List[Tuple[float, int, int]]:
        """(score, trial_id, arrival) best-first."""
        return [(-s, tid, a) for s, a, tid in self._keys]

    def ranked_ids(self) -> List[int]:
        return [k[2] for k in self._keys]

    def top_ids(self, k: int) -> List[int]:
        return [key[2] for key in self._keys[:max(k, 0)]]

    def kth_best(self, k: int) -> Optional[float]:
        """Score of the k-th best entry (1-based), or None when k is out of range."""
        if k < 1 or k > len(self._keys):
            return None
        return -self._keys[k - 1][0]

    def mark_paused(self, trial_id: int) -> None:
        bisect.insort(self._paused, self._by_id[trial_id])

    def unmark_paused(self, trial_id: int) -> None:
        key = self._by_id[trial_id]
        i = bisect.bisect_left(self._paused, key)
        if i < len(self._paused) and self._paused[i] == key:
            del self._paused[i]

    def paused_within(self, k: int):
        """Ids of trials paused at this rung ranked within the top ``k``, best first."""
        for key in list(self._paused):
            if bisect.bisect_left(self._keys, key) >= k:
                return
            yield key[2]


def rung_milestones(r: int, eta: int, R: int) -> List[int]:
    """Rung ladder r, r*eta, r*eta**2, ... strictly below R."""
    out = []
    m = r
    while m < R:
        out.append(m)
        m *= eta
    return out


def top_k_count(n_scores: int, eta: int, speculative: bool = False) -> int:
    k = n_scores // eta
    if speculative:
        return max(1, k)
    return k


@dataclass
class ExperimentConfig:
    """Everything needed to run one simulated experiment.

    ``cooldown=None`` disables resizing entirely. ``model_scaling`` is the
    scaling model the scheduler believes in; ``None`` means it matches the
    true workload ``scaling``.
    """

    deadline_T: float = 15.0
    atoms_N: int = 4
    min_epochs_r: int = 1
    max_epochs_R: int = 500
    eta: int = 3
    scaling: ScalingKind = ScalingKind.LINEAR
    base_step_time: float = 0.1
    startup_delay: float = 0.0
    cooldown: Optional[int] = 10
    seed: int = 0
    scheduler: str = "hypersched"
    exp_scale: float = 0.1
    # scheduler parameters
    speculative: bool = True
    entrance: str = "deadline"
    resize: bool = True
    profile: bool = True
    model_scaling: Optional[ScalingKind] = None
    exploration_fraction: float = 1.0

    SCHEDULERS = ("asha", "hypersched", "fixed_fraction")
    ENTRANCES = ("deadline", "asha")

    def __post_init__(self):
        self.scaling = ScalingKind(self.scaling)
        if self.model_scaling is not None:
            self.model_scaling = ScalingKind(self.model_scaling)
        self.validate()

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigError(f"{name}: {why}")

        if not self.deadline_T > 0:
            bad("deadline_T", f"must be > 0, got {self.deadline_T}")
        if int(self.atoms_N) != self.atoms_N or self.atoms_N < 1:
            bad("atoms_N", f"must be an integer >= 1, got {self.atoms_N}")
        if self.min_epochs_r < 1:
            bad("min_epochs_r", f"must be >= 1, got {self.min_epochs_r}")
        if self.max_epochs_R < self.min_epochs_r:
            bad("max_epochs_R", f"must be >= min_epochs_r, got {self.max_epochs_R}")
        if int(self.eta) != self.eta or self.eta < 2:
            bad("eta", f"must be an integer >= 2, got {self.eta}")
        if not self.base_step_time > 0:
            bad("base_step_time", f"must be > 0, got {self.base_step_time}")
        if not self.startup_delay >= 0:
            bad("startup_delay", f"must be >= 0, got {self.startup_delay}")
        if self.cooldown is not None and self.cooldown < 0:
            bad("cooldown", f"must be >= 0 or null, got {self.cooldown}")
        if not self.exp_scale > 0:
            bad("exp_scale", f"must be > 0, got {self.exp_scale}")
        if self.scheduler not in self.SCHEDULERS:
            bad("scheduler", f"unknown scheduler {self.scheduler!r}; "
                f"expected one of {', '.join(self.SCHEDULERS)}")
        if self.entrance not in self.ENTRANCES:
            bad("entrance", f"unknown entrance policy {self.entrance!r}")
        if not 0.0 <= self.exploration_fraction <= 1.0:
            bad("exploration_fraction",
                f"must be in [0, 1], got {self.exploration_fraction}")

    @property
    def rungs(self) -> List[int]:
        return rung_milestones(self.min_epochs_r, self.eta, self.max_epochs_R)

    def to_dict(self) -> dict:
        return {
            "deadline_T": self.deadline_T,
            "atoms_N": self.atoms_N,
            "min_epochs_r": self.min_epochs_r,
            "max_epochs_R": self.max_epochs_R,
            "eta": self.eta,
            "scaling": self.scaling.value,
            "base_step_time": self.base_step_time,
            "startup_delay": self.startup_delay,
            "cooldown": self.cooldown,
            "seed": self.seed,
            "scheduler": self.scheduler,
            "exp_scale": self.exp_scale,
            "speculative": self.speculative,
            "entrance": self.entrance,
            "resize": self.resize,
            "profile": self.profile,
            "model_scaling": None if self.model_scaling is None else self.model_scaling.value,
            "exploration_fraction": self.exploration_fraction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        kwargs = dict(data)
        try:
            if "scaling" in kwargs:
                kwargs["scaling"] = ScalingKind(str(kwargs["scaling"]).upper())
            if kwargs.get("model_scaling") is not None:
                kwargs["model_scaling"] = ScalingKind(str(kwargs["model_scaling"]).upper())
        except ValueError as exc:
            raise ConfigError(f"scaling: {exc}") from None
        return cls(**kwargs)
