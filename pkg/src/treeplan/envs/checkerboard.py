"""Checkerboard grids with seeded per-cell rewards.

The canonical optimality testbed: 4-connected moves on a small board whose
cells carry random strictly-negative rewards (or uniform positive ones for
the loop-guard regime). Moving off the board is forbidden, so board edges
double as boundary-state producers. A full search touches each cell once,
so the tree size equals the number of cells.
"""

from __future__ import annotations

import numpy as np

from ..core import FORBIDDEN, Outcome, QuantizationSpec, WorldModel
from ..flat import ALL_NEGATIVE, MIXED

# action table: right, left, up, down
MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))


class CheckerboardWorld(WorldModel):
    n_actions = 4
    quantization = QuantizationSpec("ii")

    def __init__(
        self,
        rewards: np.ndarray,
        start: tuple[int, int],
        goal: tuple[int, int],
        regime: str,
        goal_reward: float | None = None,
    ):
        self.rewards = rewards  # rewards[x, y] received when entering (x, y)
        self.width, self.height = rewards.shape
        self.start = start
        self.goal = goal
        self.regime = regime
        self.goal_reward = goal_reward

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def transition(self, action, state):
        dx, dy = MOVES[action]
        x, y = state[0] + dx, state[1] + dy
        if not self.in_bounds(x, y):
            return FORBIDDEN
        if (x, y) == self.goal and self.goal_reward is not None:
            return Outcome.next((x, y), self.goal_reward)
        return Outcome.next((x, y), float(self.rewards[x, y]))

    def is_goal(self, state) -> bool:
        return tuple(state) == self.goal

    def cells(self):
        return ((x, y) for x in range(self.width) for y in range(self.height))


def make_checkerboard(
    seed: int,
    size: int = 8,
    regime: str = ALL_NEGATIVE,
    goal_reward: float | None = None,
    goal: tuple[int, int] | None = None,
) -> CheckerboardWorld:
    """Seeded board; same seed, same reward table. All-negative boards draw
    rewards from [-1, -0.05] with the goal in the far corner; the mixed
    regime uses uniform +1 everywhere (the maximal-length-path demo), with
    the goal next to the start so the best simple path snakes the whole
    board."""
    if size < 2:
        raise ValueError("size must be >= 2")
    rng = np.random.default_rng(seed)
    if regime == ALL_NEGATIVE:
        rewards = rng.uniform(-1.0, -0.05, size=(size, size))
        default_goal = (size - 1, size - 1)
    elif regime == MIXED:
        rewards = np.ones((size, size))
        default_goal = (0, 1)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return CheckerboardWorld(
        rewards=rewards,
        start=(0, 0),
        goal=goal or default_goal,
        regime=regime,
        goal_reward=goal_reward,
    )
