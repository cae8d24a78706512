"""Independent replays of event traces.

These checkers only read trace records and the config. They never call the
scheduler or the rung classes, so they can audit them.
"""
from __future__ import annotations

import bisect
import math
import statistics
from collections import defaultdict

from hypersched_sim.core import LEGAL_TRANSITIONS, TrialState

SPEEDUP = {
    "LINEAR": lambda a: float(a),
    "SQRT": lambda a: math.sqrt(a),
    "NONE": lambda a: 1.0,
}

_STATE_OF_EVENT = {
    "launch": "PENDING_START",
    "resume": "PENDING_START",
    "resize": "PENDING_START",
    "startup_complete": "RUNNING",
    "terminate": "TERMINATED_AT_DEADLINE",
}


def milestones(r, eta, R):
    out, m = [], r
    while m < R:
        out.append(m)
        m *= eta
    return out


def check_transitions(trace):
    """Every per-trial state change is a legal one; returns the number checked."""
    state = {}
    n = 0
    for rec in trace:
        if rec.trial is None:
            continue
        new = TrialState(rec.state)
        old = state.get(rec.trial)
        if rec.event in _STATE_OF_EVENT:
            assert rec.state == _STATE_OF_EVENT[rec.event], rec
        if old is new and rec.event == "step":
            continue
        assert new in LEGAL_TRANSITIONS[old], f"illegal {old} -> {new} at {rec}"
        state[rec.trial] = new
        n += 1
    return n


def check_conservation(trace, config):
    """Replays per-trial holdings; sum <= N at every record and matches ``used_atoms``."""
    held = {}
    for rec in trace:
        if rec.trial is not None and rec.atoms_after is not None:
            if rec.atoms_after:
                held[rec.trial] = rec.atoms_after
            else:
                held.pop(rec.trial, None)
        total = sum(held.values())
        assert total <= config.atoms_N, f"{total} atoms in use at {rec}"
        assert total == rec.used_atoms, f"replayed {total} != recorded {rec.used_atoms} at {rec}"


def check_clock(trace, config):
    prev = -math.inf
    for rec in trace:
        assert rec.time >= prev, f"clock went backwards at {rec}"
        prev = rec.time
    assert prev <= config.deadline_T


def check_no_ghost_work(trace, config):
    """Steps only complete for RUNNING trials, each taking the scaled step time."""
    running_since = {}
    speed = SPEEDUP[config.scaling.value]
    last_iter = defaultdict(int)
    for rec in trace:
        if rec.event == "startup_complete":
            running_since[rec.trial] = rec.time
        elif rec.event == "step":
            assert rec.trial in running_since, f"step for non-running trial {rec}"
            expected = config.base_step_time / speed(rec.atoms_before)
            assert math.isclose(rec.duration, expected, rel_tol=1e-9, abs_tol=1e-9), rec
            assert rec.iter == last_iter[rec.trial] + 1
            last_iter[rec.trial] = rec.iter
            if rec.decision in ("PAUSE", "STOP"):
                del running_since[rec.trial]
            else:
                running_since[rec.trial] = rec.time
        elif rec.event == "resize":
            running_since.pop(rec.trial, None)
        elif rec.event in ("launch", "resume"):
            assert rec.trial not in running_since


def check_all_basic(trace, config):
    check_transitions(trace)
    check_conservation(trace, config)
    check_clock(trace, config)
    check_no_ghost_work(trace, config)


class _RungReplay:
    def __init__(self):
        self.keys = []  # sorted (-score, arrival, tid)
        self.key_of = {}

    def add(self, score, tid):
        key = (-score, len(self.keys), tid)
        self.key_of[tid] = key
        bisect.insort(self.keys, key)

    def rank(self, tid):
        return bisect.bisect_left(self.keys, self.key_of[tid])

    def __len__(self):
        return len(self.keys)


def check_asha_rungs(trace, config, literal_check=False):
    """Every pass through a rung happens while ranked in the top floor(n/eta).

    A trial passes rung m either by continuing from its decision at iter m or
    by being resumed from iter m. Each step to iter m+1 must be backed by such
    a pass. Returns (passes_checked, literal_violations). With
    ``literal_check`` the second number counts records after which some live
    trial past a rung sits outside that rung's current top floor(n/eta);
    otherwise it is 0.
    """
    ms = set(milestones(config.min_epochs_r, config.eta, config.max_epochs_R))
    rungs = defaultdict(_RungReplay)
    certified = set()
    live_iter = {}
    passes = 0
    literal = 0
    for rec in trace:
        if rec.event == "step":
            if rec.iter - 1 in ms:
                assert (rec.trial, rec.iter - 1) in certified, f"uncertified pass: {rec}"
            if rec.iter in ms:
                rung = rungs[rec.iter]
                rung.add(rec.score, rec.trial)
                assert rec.rung == rec.iter
                if rec.decision.startswith("CONTINUE"):
                    k = len(rung) // config.eta
                    assert rung.rank(rec.trial) < k, f"passed outside top-k: {rec}"
                    certified.add((rec.trial, rec.iter))
                    passes += 1
            if rec.decision in ("PAUSE", "STOP"):
                live_iter.pop(rec.trial, None)
            else:
                live_iter[rec.trial] = rec.iter
        elif rec.event == "resume":
            if rec.iter in ms:
                rung = rungs[rec.iter]
                assert rung.rank(rec.trial) < len(rung) // config.eta, f"resumed outside top-k: {rec}"
                certified.add((rec.trial, rec.iter))
                passes += 1
            live_iter[rec.trial] = rec.iter
        elif rec.event == "launch":
            live_iter[rec.trial] = 0
        elif rec.event == "terminate":
            live_iter.pop(rec.trial, None)
        else:
            continue
        # literal "at every event" reading, reported only
        if literal_check and any(
            rungs[m].rank(tid) >= len(rungs[m]) // config.eta
            for tid, it in live_iter.items()
            for m in ms
            if it > m
        ):
            literal += 1
    return passes, literal


class EntranceReplay:
    """Rebuilds the deadline-aware entrance inputs at every launch."""

    def __init__(self, config):
        self.config = config
        model = config.scaling.value if config.profile else "LINEAR"
        if config.profile and config.model_scaling is not None:
            model = config.model_scaling.value
        self.speed = SPEEDUP[model]

    def launches(self, trace):
        """Yields (time, t_a, t_f, remaining) for every launch after the first."""
        cfg = self.config
        samples = []
        running_time = defaultdict(float)
        live = set()
        first = True
        for rec in trace:
            if rec.event == "launch":
                if not first:
                    t_a = statistics.median(samples) if samples else cfg.base_step_time
                    t_f = max((running_time[t] for t in live), default=0.0)
                    yield rec.time, t_a, t_f, cfg.deadline_T - rec.time
                first = False
                live.add(rec.trial)
            elif rec.event == "resume":
                live.add(rec.trial)
            elif rec.event == "step":
                samples.append(rec.duration * self.speed(rec.atoms_before))
                running_time[rec.trial] += rec.duration
                if rec.decision in ("PAUSE", "STOP"):
                    live.discard(rec.trial)
            elif rec.event == "terminate":
                live.discard(rec.trial)

    def violations(self, trace):
        cfg = self.config
        out = []
        for t, t_a, t_f, remaining in self.launches(trace):
            if min(cfg.max_epochs_R * t_a, cfg.eta * t_f) >= remaining:
                out.append((t, t_a, t_f, remaining))
        return out
