"""Four-rooms grid with movable goal and a 3-level planning hierarchy.

The state carries both the agent cell and the goal cell, so one world
serves every example of a barrier layout and policies are goal-conditioned
for free. Three barrier layouts share the same room frame; policies learned
on one layout are exercised zero-shot on the others.

Hierarchy: the top level picks a room anchor (doorways and room centers), a
mid level routes between cells of a fixed stride-2 lattice, and the lowest
level walks primitive moves to a lattice cell. Lattice cells that happen to
fall on walls are simply unreachable; their sub-planners fail and the
search moves on, which keeps policy output sizes fixed across layouts.
Every level also terminates at the global goal, so exact goals are reached
without a dedicated refinement stage.
"""

from __future__ import annotations

import numpy as np

from ..core import FORBIDDEN, Outcome, QuantizationSpec, WorldModel
from ..flat import FEASIBLE, OPTIMAL, PlannerConfig
from ..hierarchy import GeneralizedAction
from ..policies import NetworkPolicy

MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))

SIZE = 11
DOORWAYS = ((5, 2), (5, 8), (2, 5), (8, 5))
ROOM_CENTERS = ((3, 3), (7, 3), (3, 7), (7, 7))
GREEN_ANCHORS = DOORWAYS + ROOM_CENTERS
# stride-2 lattice plus the doorways, so every anchor is lattice-reachable;
# lattice points that land on walls just yield failing sub-planners
PURPLE_LATTICE = tuple(
    (x, y) for x in (1, 3, 5, 7, 9) for y in (1, 3, 5, 7, 9)
) + DOORWAYS

BARRIERS = {
    "original": frozenset({(2, 1), (2, 2), (2, 3), (2, 4)}),
    "alt1": frozenset({(8, 6), (8, 7), (8, 8), (8, 9)}),
    "alt2": frozenset({(1, 8), (2, 8), (3, 8)}),
}


def frame_walls() -> frozenset[tuple[int, int]]:
    mid = SIZE // 2
    walls = set()
    for i in range(SIZE):
        if i not in (2, 8):
            walls.add((mid, i))
            walls.add((i, mid))
    return frozenset(walls)


class FourRoomsWorld(WorldModel):
    n_actions = 4
    quantization = QuantizationSpec("iiii")

    def __init__(self, barrier_id: str, negative_rewards: bool = False):
        if barrier_id not in BARRIERS:
            raise ValueError(f"unknown barrier layout {barrier_id!r}")
        self.barrier_id = barrier_id
        self.walls = frame_walls() | BARRIERS[barrier_id]
        self.negative_rewards = negative_rewards
        self.size = SIZE
        self.width = SIZE
        self.height = SIZE

    def free(self, x: int, y: int) -> bool:
        return 0 <= x < SIZE and 0 <= y < SIZE and (x, y) not in self.walls

    def free_cells(self) -> list[tuple[int, int]]:
        return [(x, y) for x in range(SIZE) for y in range(SIZE) if self.free(x, y)]

    def transition(self, action, state):
        ax, ay, gx, gy = state
        dx, dy = MOVES[action]
        nx, ny = ax + dx, ay + dy
        if not self.free(nx, ny):
            return FORBIDDEN
        if (nx, ny) == (gx, gy):
            reward = 1.0 if self.negative_rewards else 0.0
        else:
            reward = -0.1 if self.negative_rewards else 0.0
        return Outcome.next((nx, ny, gx, gy), reward)

    def is_goal(self, state) -> bool:
        return (state[0], state[1]) == (state[2], state[3])

    def sample_example(self, seed: int) -> tuple[int, int, int, int]:
        rng = np.random.default_rng(seed)
        cells = self.free_cells()
        while True:
            a = cells[int(rng.integers(len(cells)))]
            g = cells[int(rng.integers(len(cells)))]
            if a != g:
                return (a[0], a[1], g[0], g[1])


def make_four_rooms(barrier_id: str = "original", negative_rewards: bool = False) -> FourRoomsWorld:
    return FourRoomsWorld(barrier_id, negative_rewards=negative_rewards)


# ---------------------------------------------------------------------------
# hierarchy wiring

FAMILY_SPECS = {
    # family: (feature width, number of outputs); the +1 action at the
    # routing levels targets the example's own goal cell
    "nav": (8, 4),
    "route": (4, len(PURPLE_LATTICE) + 1),
    "steer": (4, len(GREEN_ANCHORS) + 1),
}


def _nav_features(world, target):
    # relative offset for direction, plus the local wall occupancy around
    # the agent (one flag per move) so the greedy argmax can hug walls;
    # local features transfer across barrier layouts. ``target=None`` reads
    # the example's goal cell from the state.
    def features(state):
        ax, ay = state[0], state[1]
        tx, ty = (state[2], state[3]) if target is None else target
        walls = [0.0 if world.free(ax + dx, ay + dy) else 1.0 for dx, dy in MOVES]
        return np.array(
            [ax / 10.0, ay / 10.0, (tx - ax) / 10.0, (ty - ay) / 10.0, *walls],
            dtype=float,
        )

    return features


def _target_features(target):
    def features(state):
        ax, ay = state[0], state[1]
        tx, ty = (state[2], state[3]) if target is None else target
        return np.array([ax, ay, tx - ax, ty - ay], dtype=float) / 10.0

    return features


def _goal_features(state):
    ax, ay, gx, gy = state
    return np.array([ax, ay, gx - ax, gy - ay], dtype=float) / 10.0


def _policy(nets, family, features):
    if nets is None or family not in nets:
        return None
    return NetworkPolicy(nets[family], features=features)


def make_four_rooms_stack(
    world: FourRoomsWorld,
    nets: dict | None = None,
    optimize: bool = False,
    greedy: bool = False,
) -> GeneralizedAction:
    """Build the 3-level action stack for a barrier layout.

    ``nets`` maps family -> trained network; missing families plan with
    uniform scores. ``optimize=True`` switches every level to full-search
    optimal mode for the negative-reward variant; ``greedy=True`` makes
    every level follow its policy argmax with no branching.
    """
    mode = OPTIMAL if optimize else FEASIBLE
    regime = "all_negative" if optimize else "mixed"

    def cfg(tree, depth):
        if greedy:
            depth = max(depth, 40)  # rollouts have no tree; only steps count
        return PlannerConfig(
            mode=mode, reward_regime=regime, max_tree_size=tree, max_depth=depth
        )

    def nav_action(cell):
        feats = _nav_features(world, cell)
        if cell is None:
            sub_goal, label = world.is_goal, "nav[goal]"
        else:
            sub_goal = lambda s, c=cell: (s[0], s[1]) == c
            label = f"nav[{cell[0]},{cell[1]}]"
        return GeneralizedAction(
            id=label,
            family="nav",
            action_set=[0, 1, 2, 3],
            sub_goal=sub_goal,
            policy=_policy(nets, "nav", feats),
            features=feats,
            # a sub-path may end at the global goal rather than this cell;
            # record its steps against where it actually went
            hindsight_features=lambda end: _nav_features(world, (end[0], end[1])),
            # local hops only: a fat nav budget would blanket the whole
            # board breadth-first and hide what the hierarchy contributes
            params=cfg(24, 14),
            greedy_only=greedy,
        )

    # the goal-targeted variant sits first so tie-breaks try it before the
    # fixed lattice cells; searches then label it whenever it applies and
    # greedy rollouts inherit an explicit final approach
    nav_actions = [nav_action(None)]
    nav_actions.extend(nav_action(cell) for cell in PURPLE_LATTICE)

    def route_action(anchor):
        feats = _target_features(anchor)
        if anchor is None:
            sub_goal, label = world.is_goal, "route[goal]"
        else:
            sub_goal = lambda s, c=anchor: (s[0], s[1]) == c
            label = f"route[{anchor[0]},{anchor[1]}]"
        return GeneralizedAction(
            id=label,
            family="route",
            action_set=list(nav_actions),
            sub_goal=sub_goal,
            policy=_policy(nets, "route", feats),
            features=feats,
            hindsight_features=lambda end: _target_features((end[0], end[1])),
            params=cfg(40, 8),
            greedy_only=greedy,
        )

    route_actions = [route_action(None)]
    route_actions.extend(route_action(anchor) for anchor in GREEN_ANCHORS)

    return GeneralizedAction(
        id="rooms-top",
        family="steer",
        action_set=list(route_actions),
        policy=_policy(nets, "steer", _goal_features),
        features=_goal_features,
        params=cfg(20, 10),
        greedy_only=greedy,
    )
