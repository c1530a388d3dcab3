"""Torque-limited pendulum swing-up with binned torques, states kept exact.

Explicit-Euler dynamics on (angle from upright, angular velocity). The
torque limit is far below the gravity torque, so reaching upright takes
several swings back and forth; primitive-only search must chain ~150 steps
while the 2-level stack hops between phase-space boxes. States are floats
stored exactly as the integrator produced them; tree density is capped by
the equals test (component differences under 1/150 of the respective
ranges, the default divisor). Angle wrapping to [-pi, pi) happens inside
the dynamics, and the equals test compares plain components, so a pair of
states straddling the seam counts as distinct; that only densifies
sampling near the seam and never breaks path consistency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import FORBIDDEN, Outcome, QuantizationSpec, WorldModel
from ..flat import FEASIBLE, PlannerConfig
from ..hierarchy import GeneralizedAction, bin_actions
from ..policies import NetworkPolicy

TWO_PI = 2.0 * math.pi


@dataclass
class PendulumConfig:
    """Constants: the torque limit (2.5) is a quarter of the peak gravity
    torque (m*g*l = 10), so no direct rise exists and solutions must pump
    energy over several swings. One max-torque step must also move omega
    further than the equals tolerance (dt * max_torque > omega_range /
    equals_divisor), otherwise the sampled tree cannot leave a slow start.
    """

    gravity: float = 10.0
    length: float = 1.0
    mass: float = 1.0
    dt: float = 0.05
    max_torque: float = 2.5
    n_torque_bins: int = 21
    max_speed: float = 8.0
    goal_angle: float = 0.20
    goal_speed: float = 1.0
    equals_divisor: float = 150.0

    def __post_init__(self):
        if not 0.0 < self.dt <= 0.1:
            raise ValueError("dt must be in (0, 0.1]")


class PendulumWorld(WorldModel):
    is_continuous = True
    quantization = QuantizationSpec("ff")

    def __init__(self, config: PendulumConfig | None = None):
        self.config = config or PendulumConfig()
        c = self.config
        self.n_actions = c.n_torque_bins
        self.action_values = bin_actions(-c.max_torque, c.max_torque, c.n_torque_bins)
        self.theta_range = TWO_PI
        self.omega_range = 2.0 * c.max_speed
        self.theta_tol = self.theta_range / c.equals_divisor
        self.omega_tol = self.omega_range / c.equals_divisor

    def transition(self, action, state):
        c = self.config
        theta, omega = state
        torque = float(self.action_values[action])
        accel = (c.gravity / c.length) * math.sin(theta) + torque / (
            c.mass * c.length * c.length
        )
        new_omega = omega + c.dt * accel
        if abs(new_omega) > c.max_speed:
            return FORBIDDEN
        new_theta = theta + c.dt * new_omega
        new_theta = (new_theta + math.pi) % TWO_PI - math.pi
        return Outcome.next((new_theta, new_omega), 0.0)

    def is_goal(self, state):
        theta, omega = state
        return abs(theta) <= self.config.goal_angle and abs(omega) <= self.config.goal_speed

    def equals(self, a, b):
        return (
            abs(a[0] - b[0]) < self.theta_tol and abs(a[1] - b[1]) < self.omega_tol
        )

    def equals_bucket(self, state):
        return (
            int(math.floor(state[0] / self.theta_tol)),
            int(math.floor(state[1] / self.omega_tol)),
        )

    def energy(self, state):
        c = self.config
        theta, omega = state
        kinetic = 0.5 * c.mass * (c.length * omega) ** 2
        potential = c.mass * c.gravity * c.length * math.cos(theta)
        return kinetic + potential

    def hanging_state(self, seed: int) -> tuple[float, float]:
        """Near-hanging start, kept off the exact equilibrium so gravity
        gives the first step a usable kick."""
        rng = np.random.default_rng(seed)
        side = 1.0 if rng.random() < 0.5 else -1.0
        theta = side * (math.pi - 0.15 - 0.3 * rng.random())
        omega = -0.5 + 1.0 * rng.random()
        return (theta, omega)


def make_pendulum(config: PendulumConfig | None = None) -> PendulumWorld:
    return PendulumWorld(config)


# ---------------------------------------------------------------------------
# phase-space lattice and the 2-level stack

N_THETA_BOXES = 8
OMEGA_CENTERS = (-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0)


def lattice_boxes(world: PendulumWorld) -> list[tuple[float, float]]:
    """Box centers tiling the phase plane; half-sizes are half the spacing,
    so membership covers the plane."""
    theta_centers = [-math.pi + k * (TWO_PI / N_THETA_BOXES) for k in range(N_THETA_BOXES)]
    return [(t, w) for t in theta_centers for w in OMEGA_CENTERS]


THETA_HALF = math.pi / N_THETA_BOXES
OMEGA_HALF = 1.0


def in_box(state, box) -> bool:
    return abs(state[0] - box[0]) <= THETA_HALF and abs(state[1] - box[1]) <= OMEGA_HALF


def wrap_angle(delta: float) -> float:
    return (delta + math.pi) % TWO_PI - math.pi


def swing_features(box):
    # sin/cos carry the gravity geometry; the angular offset wraps so the
    # hanging seam does not split nearby targets
    bt, bw = box

    def features(state):
        theta, omega = state
        return np.array(
            [math.sin(theta), math.cos(theta), omega / 8.0,
             wrap_angle(bt - theta) / math.pi, (bw - omega) / 8.0],
            dtype=float,
        )

    return features


def top_features(state):
    theta, omega = state
    return np.array([math.sin(theta), math.cos(theta), omega / 8.0], dtype=float)


SWING_FAMILY = "swing"
TOP_FAMILY = "swing-top"


class NearBoxPolicy:
    """Non-learned initial strategy for the box-choosing level: prefer
    lattice boxes close to the current phase point (its own box least), so
    the search hops along the energy ladder instead of trying far targets.
    """

    def __init__(self, boxes, sharpness: float = 3.0):
        self.boxes = np.asarray(boxes, dtype=float)
        self.sharpness = sharpness
        self.n_actions = len(boxes)

    def scores(self, state):
        d_theta = np.abs(self.boxes[:, 0] - state[0]) / THETA_HALF
        d_omega = np.abs(self.boxes[:, 1] - state[1]) / OMEGA_HALF
        dist = d_theta + d_omega
        dist = np.where(dist < 1.0, 2.5, dist)  # skip the box it is already in
        raw = np.exp(-self.sharpness * dist / self.n_actions * 8.0)
        return raw / raw.sum()


class PumpPolicy:
    """Non-learned initial search strategy: energy-shaping torque scores.

    Torque aligned with the swing direction pumps energy in; once the total
    energy exceeds what upright needs, the preference flips and brakes.
    Crude bang-bang control, but it points the near-greedy search down
    plausible swing trajectories instead of fanning out breadth-first; the
    tree search still has to find the actual capture at the top.
    """

    def __init__(self, world: PendulumWorld, sharpness: float = 3.0):
        self.world = world
        self.sharpness = sharpness
        self.n_actions = world.n_actions
        self._torques = np.asarray(world.action_values) / world.config.max_torque
        c = world.config
        self._target_energy = c.mass * c.gravity * c.length

    def scores(self, state):
        theta, omega = state
        swing = math.copysign(1.0, omega) if abs(omega) > 0.15 else (
            math.copysign(1.0, math.sin(theta)) if abs(math.sin(theta)) > 1e-9 else 1.0
        )
        pump = math.copysign(1.0, self._target_energy - self.world.energy(state))
        raw = np.exp(self.sharpness * pump * swing * self._torques)
        return raw / raw.sum()


def make_pendulum_stack(
    world: PendulumWorld,
    mode: str = "multi",
    nets: dict | None = None,
    greedy: bool = False,
    sub_budget: int = 300,
    sub_depth: int = 40,
    top_budget: int = 60,
) -> GeneralizedAction:
    """Two-level swing-up planner.

    ``mode='single'``: one sub-planner per lattice box, each terminating at
    its own box (one sub-goal per invocation); the top level picks boxes.
    ``mode='multi'``: one sub-planner whose sub-goal set is every box other
    than the one it started in; a single invocation returns them all, so
    shared sub-paths in its tree are searched once instead of per box.
    """
    boxes = lattice_boxes(world)
    prims = list(range(world.n_actions))
    if greedy:
        sub_depth = max(sub_depth, 90)  # room for a full pump swing per hop
    sub_cfg = PlannerConfig(mode=FEASIBLE, max_tree_size=sub_budget, max_depth=sub_depth)

    def swing_policy(feats):
        if nets and SWING_FAMILY in nets:
            return NetworkPolicy(nets[SWING_FAMILY], features=feats)
        return PumpPolicy(world)

    def away_factory(s_start):
        home = [b for b in boxes if in_box(s_start, b)]
        away = [b for b in boxes if b not in home]
        return lambda s: any(in_box(s, b) for b in away)

    if mode == "single":
        subs = []
        for i, box in enumerate(boxes):
            feats = swing_features(box)
            if greedy:
                # a greedy rollout aims at its box but rarely hits it
                # exactly; let the chain continue from the furthest box the
                # swing actually passed through
                sub_kwargs = dict(
                    sub_goal_factory=away_factory,
                    terminate_on_subgoal=False,
                )
            else:
                sub_kwargs = dict(sub_goal=lambda s, b=box: in_box(s, b))
            subs.append(GeneralizedAction(
                id=f"swing[{i}]",
                family=SWING_FAMILY,
                action_set=list(prims),
                sub_goal_states=[box],
                policy=swing_policy(feats),
                features=feats,
                # paths often end at the global goal or a different box
                # than targeted; label them against where they ended
                hindsight_features=lambda end: swing_features(end),
                params=sub_cfg,
                greedy_only=greedy,
                **sub_kwargs,
            ))
        if nets and TOP_FAMILY in nets:
            top_policy = NetworkPolicy(nets[TOP_FAMILY], features=top_features)
        else:
            top_policy = NearBoxPolicy(boxes)
        return GeneralizedAction(
            id="pendulum-top",
            family=TOP_FAMILY,
            action_set=subs,
            policy=top_policy,
            features=top_features,
            params=PlannerConfig(mode=FEASIBLE, max_tree_size=top_budget, max_depth=20),
            greedy_only=greedy,
        )
    if mode == "multi":
        def away_from_start(s_start):
            home = [b for b in boxes if in_box(s_start, b)]
            away = [b for b in boxes if b not in home]
            return lambda s: any(in_box(s, b) for b in away)

        def nearest_box(state):
            return min(
                range(len(boxes)),
                key=lambda i: (
                    abs(state[0] - boxes[i][0]) / THETA_HALF
                    + abs(state[1] - boxes[i][1]) / OMEGA_HALF
                ),
            )

        swing = GeneralizedAction(
            id="swing[*]",
            family=SWING_FAMILY,
            action_set=list(prims),
            sub_goal_factory=away_from_start,
            sub_goal_states=list(boxes),
            policy=PumpPolicy(world),
            params=sub_cfg,
            return_multiple_subgoals=True,
            subgoal_key=nearest_box,
        )
        return GeneralizedAction(
            id="pendulum-top",
            family=TOP_FAMILY,
            action_set=[swing],
            params=PlannerConfig(mode=FEASIBLE, max_tree_size=top_budget, max_depth=20),
        )
    raise ValueError(f"unknown stack mode {mode!r}")


def make_flat_pendulum(world: PendulumWorld, budget: int = 40_000, depth: int = 250) -> GeneralizedAction:
    """Primitive-only search over the continuous state space, for
    hierarchy-vs-flat comparisons."""
    return GeneralizedAction(
        id="pendulum-flat",
        family="pendulum-flat",
        action_set=list(range(world.n_actions)),
        params=PlannerConfig(mode=FEASIBLE, max_tree_size=budget, max_depth=depth),
    )
