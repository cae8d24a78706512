"""Atom bookkeeping, uniform round-robin allocation and the resize-gain check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

from .trial_model import ScalingFunction


class AllocationError(RuntimeError):
    pass


@dataclass
class ClusterState:
    atoms_N: int
    allocations: Dict[int, int] = field(default_factory=dict)
    used: int = 0

    @property
    def free(self) -> int:
        return self.atoms_N - self.used

    def atoms_of(self, trial_id: int) -> int:
        return self.allocations.get(trial_id, 0)

    def acquire(self, trial_id: int, atoms: int) -> None:
        if atoms < 1:
            raise AllocationError(f"cannot allocate {atoms} atoms")
        if trial_id in self.allocations:
            raise AllocationError(f"trial {trial_id} already holds atoms")
        if atoms > self.free:
            raise AllocationError(
                f"trial {trial_id} wants {atoms} atoms, only {self.free} free"
            )
        self.allocations[trial_id] = atoms
        self.used += atoms

    def release(self, trial_id: int) -> int:
        held = self.allocations.pop(trial_id, 0)
        self.used -= held
        return held

    def resize(self, trial_id: int, atoms: int) -> None:
        held = self.allocations[trial_id]
        if atoms < 1:
            raise AllocationError(f"cannot resize to {atoms} atoms")
        if atoms - held > self.free:
            raise AllocationError(
                f"trial {trial_id}: resize {held}->{atoms} needs "
                f"{atoms - held} atoms, only {self.free} free"
            )
        self.allocations[trial_id] = atoms
        self.used += atoms - held

    def check(self) -> None:
        if self.free < 0 or self.used > self.atoms_N:
            raise AllocationError(f"inconsistent allocation {self.allocations}")


def uniform_allocation(ranked_trial_ids: Sequence[int], atoms_N: int) -> Dict[int, int]:
    """Deal ``atoms_N`` atoms one at a time over trials ordered best-first.

    Earlier (better) trials receive the leftover atoms.
    """
    n = len(ranked_trial_ids)
    if n == 0:
        return {}
    if n > atoms_N:
        raise AllocationError(f"{n} trials cannot share {atoms_N} atoms")
    base, extra = divmod(atoms_N, n)
    return {tid: base + (1 if i < extra else 0) for i, tid in enumerate(ranked_trial_ids)}


def resize_gain_check(
    current_atoms: int,
    proposed_atoms: int,
    remaining_time: float,
    overhead: float,
    scaling: ScalingFunction,
) -> bool:
    """True when resizing yields more steps before the deadline despite the restart cost."""
    if proposed_atoms < 1 or proposed_atoms == current_atoms:
        return False
    if remaining_time <= overhead:
        return False
    return (remaining_time - overhead) * scaling.rate(proposed_atoms) > (
        remaining_time * scaling.rate(current_atoms)
    )


def live_ranking(trials: Iterable) -> List[int]:
    """Trial ids sorted by descending current score, ties to the lower id."""
    return [t.id for t in sorted(trials, key=lambda t: (-t.current_score, t.id))]
