"""Terrain-following grid: costs rise with elevation, one prize at the goal.

Crossing the map from the left edge to the right edge, every step pays a
penalty that grows with the height of the cell entered, and reaching the
goal pays +1.0. The optimal path therefore hugs valleys; a feasible
(zero-reward) plan for the same map can be re-scored under these rewards
for comparison by replaying it on this world.
"""

from __future__ import annotations

import numpy as np

from ..core import FORBIDDEN, Outcome, QuantizationSpec, WorldModel

MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))

GOAL_REWARD = 1.0


class TerrainWorld(WorldModel):
    n_actions = 4
    quantization = QuantizationSpec("ii")

    def __init__(
        self,
        heights: np.ndarray,
        start: tuple[int, int],
        goal: tuple[int, int],
        step_cost: float = 0.01,
        elevation_coef: float = 0.2,
    ):
        self.heights = heights  # in [0, 1]
        self.width, self.height = heights.shape
        self.start = start
        self.goal = goal
        self.step_cost = step_cost
        self.elevation_coef = elevation_coef

    def cell_reward(self, x: int, y: int) -> float:
        return -(self.step_cost + self.elevation_coef * float(self.heights[x, y]))

    def transition(self, action, state):
        dx, dy = MOVES[action]
        x, y = state[0] + dx, state[1] + dy
        if not (0 <= x < self.width and 0 <= y < self.height):
            return FORBIDDEN
        if (x, y) == self.goal:
            return Outcome.next((x, y), GOAL_REWARD)
        return Outcome.next((x, y), self.cell_reward(x, y))

    def is_goal(self, state) -> bool:
        return tuple(state) == self.goal


def _smooth_heightfield(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Sum of a few random low-frequency waves, normalized to [0, 1]."""
    xs, ys = np.meshgrid(np.arange(width), np.arange(height), indexing="ij")
    field = np.zeros((width, height))
    for _ in range(6):
        kx = rng.uniform(0.2, 1.2) * 2 * np.pi / width
        ky = rng.uniform(0.2, 1.2) * 2 * np.pi / height
        phase = rng.uniform(0, 2 * np.pi)
        field += rng.uniform(0.3, 1.0) * np.cos(kx * xs + ky * ys + phase)
    field -= field.min()
    if field.max() > 0:
        field /= field.max()
    return field


def make_terrain(
    seed: int,
    width: int = 20,
    height: int = 20,
    ramp: bool = False,
) -> TerrainWorld:
    """Seeded rugged terrain; ``ramp=True`` gives the deterministic monotone
    slope (height grows with y) used to check that optimal paths drop to the
    low edge."""
    if ramp:
        heights = np.tile(np.arange(height) / (height - 1), (width, 1))
        coef = 1.0
    else:
        heights = _smooth_heightfield(np.random.default_rng(seed), width, height)
        coef = 0.2
    return TerrainWorld(
        heights=heights,
        start=(0, height // 2),
        goal=(width - 1, height // 2),
        elevation_coef=coef,
    )
