"""Discrete gripper world: grab, carry, place and stack labeled objects.

A claw moves over a W x H grid of cells holding at most one object each.
Closing over an uncovered object grabs it; the held object travels with the
gripper and may only be released where the scenario's constraint flags
allow (inside the box region, or onto support when stacking). Everything
else that could blow up the state count is a forbidden transition: moving a
held object into another object, entering obstacle cells, leaving the grid,
and no-op close/open attempts. Those constraints are what keep desk-scale
search trees small while covering the same phenomena as a physics gripper:
covered targets force unstacking, obstacle rows force detours, and
background-invariant grab/place policies crash into obstacles and recover
through boundary states.

Scenarios: ``place`` (carry the held object to the box), ``place_obstacle``
(same with a wall in the way), ``covered`` (the target is buried under
blockers), ``stack`` (build one contiguous pile), ``avoid`` (get around a
pile sideways).
"""

from __future__ import annotations

import numpy as np

from ..core import FORBIDDEN, Outcome, QuantizationSpec, WorldModel
from ..flat import FEASIBLE, PlannerConfig
from ..hierarchy import GeneralizedAction
from ..policies import NetworkPolicy

LEFT, RIGHT, UP, DOWN, CLOSE, OPEN = range(6)
MOVES = {LEFT: (-1, 0), RIGHT: (1, 0), UP: (0, 1), DOWN: (0, -1)}

NOT_HELD = -1


class GripperGridWorld(WorldModel):
    """State: (gx, gy, held, ((x0, y0), (x1, y1), ...)).

    ``held`` is an object index or -1; a held object's stored cell always
    equals the gripper cell.
    """

    n_actions = 6

    def __init__(
        self,
        width: int,
        height: int,
        n_objects: int,
        box: tuple[int, int, int, int] | None = None,  # x0, x1, y0, y1 inclusive
        obstacles: frozenset[tuple[int, int]] = frozenset(),
        no_touch: bool = True,
        no_drop_outside_box: bool = False,
        drop_on_support: bool = False,
        no_regrab_in_box: bool = False,
        target_objects: tuple[int, ...] = (0,),
    ):
        self.width = width
        self.height = height
        self.n_objects = n_objects
        self.box = box
        self.obstacles = obstacles
        self.no_touch = no_touch
        self.no_drop_outside_box = no_drop_outside_box
        self.drop_on_support = drop_on_support
        self.no_regrab_in_box = no_regrab_in_box
        self.target_objects = target_objects
        self.quantization = QuantizationSpec("i" * (3 + 2 * n_objects))

    # -- helpers -------------------------------------------------------------

    def state_values(self, state):
        gx, gy, held, objs = state
        flat = [gx, gy, held]
        for x, y in objs:
            flat.extend((x, y))
        return flat

    def in_bounds(self, x, y):
        return 0 <= x < self.width and 0 <= y < self.height

    def in_box(self, x, y):
        if self.box is None:
            return False
        x0, x1, y0, y1 = self.box
        return x0 <= x <= x1 and y0 <= y <= y1

    def object_at(self, objs, x, y, ignore=NOT_HELD):
        for i, (ox, oy) in enumerate(objs):
            if i != ignore and (ox, oy) == (x, y):
                return i
        return NOT_HELD

    def covered(self, objs, i):
        x, y = objs[i]
        return self.object_at(objs, x, y + 1) != NOT_HELD

    # -- dynamics -------------------------------------------------------------

    def transition(self, action, state):
        gx, gy, held, objs = state
        if action in MOVES:
            dx, dy = MOVES[action]
            nx, ny = gx + dx, gy + dy
            if not self.in_bounds(nx, ny) or (nx, ny) in self.obstacles:
                return FORBIDDEN
            if held != NOT_HELD:
                # carried object may not collide with loose objects
                if self.no_touch and self.object_at(objs, nx, ny, ignore=held) != NOT_HELD:
                    return FORBIDDEN
                new_objs = list(objs)
                new_objs[held] = (nx, ny)
                return Outcome.next((nx, ny, held, tuple(new_objs)), 0.0)
            return Outcome.next((nx, ny, held, objs), 0.0)
        if action == CLOSE:
            if held != NOT_HELD:
                return FORBIDDEN
            target = self.object_at(objs, gx, gy)
            if target == NOT_HELD or self.covered(objs, target):
                return FORBIDDEN
            # objects parked in the box are done; re-grabbing them only
            # bloats the reachable state set
            if self.no_regrab_in_box and self.in_box(gx, gy):
                return FORBIDDEN
            return Outcome.next((gx, gy, target, objs), 0.0)
        if action == OPEN:
            if held == NOT_HELD:
                return FORBIDDEN
            if self.no_drop_outside_box and not self.in_box(gx, gy):
                return FORBIDDEN
            if self.drop_on_support:
                below = self.object_at(objs, gx, gy - 1, ignore=held)
                if gy > 0 and below == NOT_HELD:
                    return FORBIDDEN
            return Outcome.next((gx, gy, NOT_HELD, objs), 0.0)
        raise IndexError(f"action {action} outside table of size {self.n_actions}")

    def is_goal(self, state):
        gx, gy, held, objs = state
        if held in self.target_objects:
            return False
        if self.box is not None:
            return all(self.in_box(*objs[i]) for i in self.target_objects)
        # stacking goal: all objects in one contiguous column from the floor
        xs = {x for x, _ in objs}
        if len(xs) != 1:
            return False
        return sorted(y for _, y in objs) == list(range(self.n_objects))


# ---------------------------------------------------------------------------
# scenario construction


def _scatter(rng, world, n, ys=(0,)):
    cells = []
    while len(cells) < n:
        c = (int(rng.integers(1, world.width // 2)), int(rng.choice(ys)))
        if c not in cells:
            cells.append(c)
    return cells


def make_gripper_world(
    scenario_id: str,
    n_objects: int = 3,
    obstacles: bool = False,
    seed: int = 0,
    width: int = 20,
    height: int = 10,
):
    """Build (world, initial state) for a named scenario."""
    rng = np.random.default_rng(seed)
    box = (width - 4, width - 1, 0, 3)
    wall = frozenset(
        {(width // 2, y) for y in range(0, height - 3)} if obstacles else ()
    )
    if scenario_id in ("place", "place_obstacle"):
        world = GripperGridWorld(
            width, height, n_objects, box=box,
            obstacles=wall if scenario_id == "place_obstacle" or obstacles else frozenset(),
            no_drop_outside_box=True,
            no_regrab_in_box=True,
        )
        spots = _scatter(rng, world, n_objects)
        gx, gy = spots[0]
        state = (gx, gy, 0, tuple(spots))
        return world, state
    if scenario_id == "covered":
        world = GripperGridWorld(
            width, height, n_objects, box=box, no_drop_outside_box=True,
            no_regrab_in_box=True,
        )
        col = int(rng.integers(1, width // 2))
        objs = tuple((col, k) for k in range(n_objects))  # target 0 at bottom
        gx = int(rng.integers(0, width // 2))
        state = (gx, height - 1, NOT_HELD, objs)
        return world, state
    if scenario_id == "stack":
        world = GripperGridWorld(
            width, height, n_objects, box=None, drop_on_support=True,
            target_objects=tuple(range(n_objects)),  # nothing may stay gripped
        )
        spots = _scatter(rng, world, n_objects)
        state = (int(rng.integers(width)), height - 1, NOT_HELD, tuple(spots))
        return world, state
    if scenario_id == "avoid":
        world = GripperGridWorld(
            width, height, n_objects, box=box, no_drop_outside_box=True,
        )
        col = width // 2
        pile = tuple((col, k) for k in range(n_objects - 1))
        start = (2, 0)
        objs = pile + (start,)
        held = n_objects - 1
        state = (start[0], start[1], held, objs)
        return world, state
    raise ValueError(f"unknown scenario {scenario_id!r}")


# ---------------------------------------------------------------------------
# generalized actions

GRAB_FAMILY = "grab"
PLACE_FAMILY = "place"
PLACE_ON_FAMILY = "place-on"


def grab_features(n: int):
    """Background-filtered inputs: gripper cell plus object n's cell only,
    so the policy is invariant to every other object in the scene."""

    def features(state):
        gx, gy, _, objs = state
        ox, oy = objs[n]
        return np.array([gx, gy, ox, oy], dtype=float) / 20.0

    return features


def place_features(world: GripperGridWorld):
    x0, x1, y0, y1 = world.box
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0

    def features(state):
        gx, gy, _, _ = state
        return np.array([gx, gy, cx, cy], dtype=float) / 20.0

    return features


def place_on_features(m: int):
    def features(state):
        gx, gy, _, objs = state
        ox, oy = objs[m]
        return np.array([gx, gy, ox, oy], dtype=float) / 20.0

    return features


def make_grab(n: int, nets=None, greedy=False, budget=1500) -> GeneralizedAction:
    feats = grab_features(n)
    policy = None
    if nets and GRAB_FAMILY in nets:
        policy = NetworkPolicy(nets[GRAB_FAMILY], features=feats)
    return GeneralizedAction(
        id=f"grab({n})",
        family=GRAB_FAMILY,
        action_set=list(range(6)),
        sub_goal=lambda s, n=n: s[2] == n,
        policy=policy,
        features=feats,
        params=PlannerConfig(mode=FEASIBLE, max_tree_size=budget, max_depth=60),
        greedy_only=greedy,
        # boundary states matter when the rollout is greedy and crashes; a
        # full sub-search returning them all would flood the parent tree
        return_boundary_states=greedy,
        max_boundary_returns=4,
    )


def make_place(world, nets=None, greedy=False, budget=1500) -> GeneralizedAction:
    feats = place_features(world)
    policy = None
    if nets and PLACE_FAMILY in nets:
        policy = NetworkPolicy(nets[PLACE_FAMILY], features=feats)
    return GeneralizedAction(
        id="place()",
        family=PLACE_FAMILY,
        action_set=list(range(6)),
        sub_goal=lambda s: s[2] != NOT_HELD and world.in_box(s[0], s[1]),
        policy=policy,
        features=feats,
        params=PlannerConfig(mode=FEASIBLE, max_tree_size=budget, max_depth=60),
        greedy_only=greedy,
        return_boundary_states=greedy,
        max_boundary_returns=4,
    )


def make_place_on(m: int, nets=None, greedy=False, budget=1500) -> GeneralizedAction:
    feats = place_on_features(m)
    policy = None
    if nets and PLACE_ON_FAMILY in nets:
        policy = NetworkPolicy(nets[PLACE_ON_FAMILY], features=feats)
    return GeneralizedAction(
        id=f"place_on({m})",
        family=PLACE_ON_FAMILY,
        action_set=list(range(6)),
        sub_goal=lambda s, m=m: (
            s[2] != NOT_HELD and s[2] != m
            and (s[0], s[1]) == (s[3][m][0], s[3][m][1] + 1)
        ),
        policy=policy,
        features=feats,
        params=PlannerConfig(mode=FEASIBLE, max_tree_size=budget, max_depth=60),
        greedy_only=greedy,
    )


def make_avoid(side: str, m: int, budget=400) -> GeneralizedAction:
    """Move the gripper around the pile topped by object m, ending one
    column past it on the requested side, near its height."""
    dx = 1 if side == "right" else -1

    def done(s, m=m, dx=dx):
        gx, gy, _, objs = s
        ox, oy = objs[m]
        return gx == ox + dx and gy <= oy + 1

    return GeneralizedAction(
        id=f"avoid_{side}({m})",
        family=f"avoid-{side}",
        action_set=[LEFT, RIGHT, UP, DOWN],
        sub_goal=done,
        params=PlannerConfig(mode=FEASIBLE, max_tree_size=budget, max_depth=40),
        return_boundary_states=True,
    )


def make_pick_place_stack(
    world: GripperGridWorld,
    nets=None,
    greedy_subplanners=False,
    include_primitives=False,
    top_budget=400,
) -> GeneralizedAction:
    """Two-level stack for place/covered scenarios: grab(n) per object,
    place(), and the release primitive. ``include_primitives`` adds every
    primitive to the top level so the planner can refine around obstacles
    that the sub-planners cannot see (paired with greedy sub-planners that
    hand back boundary states)."""
    actions: list = [make_grab(n, nets, greedy_subplanners) for n in range(world.n_objects)]
    actions.append(make_place(world, nets, greedy_subplanners))
    if include_primitives:
        actions.extend(range(6))
    else:
        actions.append(OPEN)
    return GeneralizedAction(
        id="pick-place-top",
        family="pick-place-top",
        action_set=actions,
        params=PlannerConfig(mode=FEASIBLE, max_tree_size=top_budget, max_depth=40),
    )


def make_stacking_stack(
    world: GripperGridWorld,
    nets=None,
    level2_policy=None,
    top_budget=600,
) -> GeneralizedAction:
    """Two-level stack for block stacking: grab(n) and place_on(m) per
    object plus the open primitive to release."""
    actions: list = [make_grab(n, nets) for n in range(world.n_objects)]
    actions.extend(make_place_on(m, nets) for m in range(world.n_objects))
    actions.append(OPEN)
    return GeneralizedAction(
        id="stacking-top",
        family="stacking-top",
        action_set=actions,
        policy=level2_policy,
        params=PlannerConfig(mode=FEASIBLE, max_tree_size=top_budget, max_depth=60),
    )
