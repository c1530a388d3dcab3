"""Shared problem-formulation abstractions: worlds, transitions, plans.

A world bundles a deterministic transition function, per-transition rewards,
an allowed-action oracle, a goal predicate and a state-identity test. All
planners, learners and environments in this package speak this interface.

States are stored exactly as the transition function produced them. For
discrete worlds, identity is byte-equality of a canonical encoding; for
continuous worlds, identity is the world's ``equals`` predicate (a minimal
sampling distance) and no snapping or quantizing of stored states is ever
performed, so every path in a search tree replays exactly.
"""

from __future__ import annotations

import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

State = Any
Action = int


class PlanningError(Exception):
    """Base class for planner/toolkit errors."""


class EncodingError(PlanningError):
    """State does not match the declared quantization layout."""


@dataclass(frozen=True)
class Outcome:
    """Result of attempting one primitive transition.

    Either a successor state plus the reward received in it, or Forbidden
    (the move hit an obstacle / violated a world constraint). Forbidden
    carries no next state; the state the move was attempted from is a
    boundary-state candidate.
    """

    state: State | None
    reward: float
    forbidden: bool = False

    @staticmethod
    def next(state: State, reward: float) -> "Outcome":
        return Outcome(state=state, reward=float(reward), forbidden=False)


FORBIDDEN = Outcome(state=None, reward=0.0, forbidden=True)


@dataclass(frozen=True)
class QuantizationSpec:
    """Declared flat layout of a state for canonical byte encoding.

    ``kinds`` is one letter per component: ``i`` for a 64-bit signed integer,
    ``f`` for a 64-bit float. Encoding is little-endian and deterministic, so
    two discrete states are identical iff their encodings are byte-equal.
    """

    kinds: str

    @property
    def width(self) -> int:
        return len(self.kinds)

    @property
    def fmt(self) -> str:
        return "<" + "".join("q" if k == "i" else "d" for k in self.kinds)


def canonical_encode(state: Sequence[float], spec: QuantizationSpec) -> bytes:
    """Encode a flat numeric state deterministically as bytes.

    Integers use 8 bytes each, floats their exact IEEE-754 image, so the
    encoding round-trips discrete states exactly and is stable across calls.
    """
    values = tuple(state)
    if len(values) != spec.width:
        raise EncodingError(
            f"state has {len(values)} components, layout declares {spec.width}"
        )
    try:
        return struct.pack(spec.fmt, *values)
    except struct.error as exc:  # e.g. float passed for an int slot
        raise EncodingError(str(exc)) from None


class WorldModel(ABC):
    """Deterministic world: transition, rewards, allowed actions, goals.

    Implementations must be pure functions of their inputs (safe for
    concurrent read-only use). Actions are small integers indexing the
    world's action table; worlds with binned continuous actions expose the
    bin centers via ``action_values``.
    """

    n_actions: int = 0
    is_continuous: bool = False
    quantization: QuantizationSpec | None = None
    action_values: Sequence[float] | None = None

    @abstractmethod
    def transition(self, action: Action, state: State) -> Outcome:
        """Apply ``action`` in ``state``; deterministic."""

    def actions(self, state: State) -> Sequence[Action]:
        """Actions available in ``state``; default is the full table."""
        return range(self.n_actions)

    def reward(self, action: Action, state: State) -> float:
        out = self.transition(action, state)
        if out.forbidden:
            raise PlanningError("reward undefined for a forbidden transition")
        return out.reward

    def is_goal(self, state: State) -> bool:
        return False

    def state_values(self, state: State) -> Sequence[float]:
        """Flatten a state into the numeric layout used for encoding."""
        return state

    def encode(self, state: State) -> bytes:
        if self.quantization is None:
            raise EncodingError(f"{type(self).__name__} declares no quantization")
        return canonical_encode(self.state_values(state), self.quantization)

    def equals(self, a: State, b: State) -> bool:
        """State identity; byte-equal encodings unless a world overrides."""
        return self.encode(a) == self.encode(b)


class ZeroRewardWorld(WorldModel):
    """Wrapper that zeroes all rewards, for feasible (any-path) planning.

    The wrapped plan can be re-scored under the original rewards by
    replaying it on the base world.
    """

    def __init__(self, base: WorldModel):
        self.base = base
        self.n_actions = base.n_actions
        self.is_continuous = base.is_continuous
        self.quantization = base.quantization
        self.action_values = base.action_values

    def transition(self, action: Action, state: State) -> Outcome:
        out = self.base.transition(action, state)
        if out.forbidden:
            return out
        return Outcome.next(out.state, 0.0)

    def actions(self, state: State) -> Sequence[Action]:
        return self.base.actions(state)

    def is_goal(self, state: State) -> bool:
        return self.base.is_goal(state)

    def state_values(self, state: State) -> Sequence[float]:
        return self.base.state_values(state)

    def equals(self, a: State, b: State) -> bool:
        return self.base.equals(a, b)


@dataclass
class Plan:
    """Linked action-state pairs: ``steps[i] = (u_i, s_i)`` with
    ``s_{i+1} = transition(u_i, s_i)``. ``s_0`` is the initial state."""

    steps: list[tuple[Action, State]] = field(default_factory=list)
    cumulative_reward: float = 0.0

    def __len__(self) -> int:
        return len(self.steps)

    def states(self, world: WorldModel) -> list[State]:
        """All visited states including the final one (by re-simulation)."""
        if not self.steps:
            return []
        out = [s for _, s in self.steps]
        last = world.transition(self.steps[-1][0], self.steps[-1][1])
        out.append(last.state)
        return out


@dataclass(frozen=True)
class ReplayResult:
    valid: bool
    final_state: State | None = None
    cumulative_reward: float = 0.0
    error_index: int | None = None


REWARD_REPLAY_TOL = 1e-9


def replay(plan: Plan, world: WorldModel, s_start: State) -> ReplayResult:
    """Re-simulate a plan and check its linkage and stored reward.

    Valid iff every stored state equals the re-simulated state, no step is
    forbidden, and the recomputed cumulative reward matches the stored one
    within 1e-9. On divergence the result carries the first bad step index
    (reward mismatch reports index ``len(steps)``).
    """
    current = s_start
    total = 0.0
    for i, (action, stored) in enumerate(plan.steps):
        if not world.equals(stored, current):
            return ReplayResult(valid=False, error_index=i)
        out = world.transition(action, stored)
        if out.forbidden:
            return ReplayResult(valid=False, error_index=i)
        total += out.reward
        current = out.state
    if abs(total - plan.cumulative_reward) > REWARD_REPLAY_TOL:
        return ReplayResult(valid=False, error_index=len(plan.steps))
    return ReplayResult(valid=True, final_state=current, cumulative_reward=total)


@dataclass
class ProblemClass:
    """A family of problem examples sharing a world builder and goal notion.

    ``make_example(seed)`` must be reproducible: the same seed yields the
    same world and initial state. The richer planning/learning wiring for a
    class (action stacks, feature maps) lives in :mod:`treeplan.plp`.
    """

    id: str
    make_example: Callable[[int], tuple[WorldModel, State]]

    def examples(self, seeds: Iterable[int]):
        for seed in seeds:
            yield self.make_example(seed)
