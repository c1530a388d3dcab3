"""The plan-learn-plan loop: plan a batch of examples, imitate the solved
plans, plan again with the improved policies, and transfer them zero-shot.

Each registered problem class supplies seeded example generation, an
action-stack builder (which wires trained networks into per-instance
policies), and the per-family network shapes. One iteration plans every
training example with the current policies, folds the solved plans into
cumulative per-family batches, and retrains each family starting from its
previous weights. Runs are bit-reproducible: all randomness is seeded, and
examples are planned serially in seed order.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from .core import PlanningError, State, WorldModel, replay
from .hierarchy import GeneralizedAction, GaResult, RunContext, rtp_plan
from .learning import PlanBatch, TrainConfig, extract_batches, save_batch, train_cross_entropy
from .nn import Mlp, MlpSpec
from .policies import save_policy_weights

log = logging.getLogger(__name__)

EVAL_SEED_BASE = 100_000  # held-out examples live in their own seed range


class PlpError(PlanningError):
    pass


@dataclass
class FamilySpec:
    feature_width: int
    n_actions: int
    hidden: tuple[int, ...] = (32,)
    train: TrainConfig = field(default_factory=TrainConfig)

    def fresh_net(self, family: str) -> Mlp:
        seed = zlib.crc32(family.encode("utf-8")) % (2**31)
        sizes = [self.feature_width, *self.hidden, self.n_actions]
        return Mlp(MlpSpec(sizes, seed=seed))


@dataclass
class PlpClass:
    """Planning + learning wiring for one problem class."""

    id: str
    families: dict[str, FamilySpec]
    make_example: Callable[[int], tuple[WorldModel, State]]
    # (world, nets or None, mechanism) -> top-level generalized action
    build_stack: Callable[[WorldModel, dict | None, str], GeneralizedAction]
    greedy_step_cap: int = 400


@dataclass
class ExampleOutcome:
    seed: int
    solved: bool
    nodes_expanded: int
    transition_calls: int
    subplanner_calls: int
    tree_size: int
    plan_length: int | None = None
    reward: float | None = None


@dataclass
class PlpIterationReport:
    iteration: int
    class_id: str
    outcomes: list[ExampleOutcome]
    accuracy: float
    checksums_before: dict[str, str] = field(default_factory=dict)
    checksums_after: dict[str, str] = field(default_factory=dict)
    batch_sizes: dict[str, int] = field(default_factory=dict)
    eval_accuracy: float | None = None
    diagnostic: str | None = None

    def median_nodes_expanded(self) -> float:
        return float(np.median([o.nodes_expanded for o in self.outcomes]))


@dataclass
class TransferSpec:
    source_class: str
    target_class: str
    nets: dict | None = None
    policy_dir: str | Path | None = None
    carry_families: list[str] | None = None
    retrain: bool = False
    mechanism: str = "near_greedy"  # or "greedy_boundary" for the ablation
    n_examples: int = 10
    seed_base: int = 0


# ---------------------------------------------------------------------------


def plan_example(
    pc: PlpClass, seed: int, nets: dict | None, mechanism: str = "near_greedy"
) -> tuple[ExampleOutcome, GaResult, WorldModel, State]:
    world, s_start = pc.make_example(seed)
    stack = pc.build_stack(world, nets, mechanism)
    ctx = RunContext(world=world)
    result = rtp_plan(stack, s_start, ctx)
    goals = result.by_tag("goal")
    outcome = ExampleOutcome(
        seed=seed,
        solved=bool(goals),
        nodes_expanded=ctx.nodes_expanded,
        transition_calls=ctx.transition_calls,
        subplanner_calls=ctx.subplanner_calls,
        tree_size=result.stats.tree_size,
    )
    if goals:
        best = result.best()
        outcome.plan_length = len(best.plan)
        outcome.reward = best.reward
    return outcome, result, world, s_start


def _solved_plans(result: GaResult, world: WorldModel, s_start: State):
    """Hierarchical plans of goal-reaching states that replay Valid; plans
    that fail replay never enter a training batch."""
    plans = []
    for rs in result.by_tag("goal"):
        if replay(rs.plan, world, s_start).valid:
            plans.append(rs.hier)
        else:
            log.warning("dropping non-replaying plan from batch")
    return plans


def _train_family(pc, family, batch, net):
    spec = pc.families[family]
    return train_cross_entropy(batch, config=spec.train, init_net=net)


def run_plp(
    pc: PlpClass,
    n_examples: int,
    iterations: int,
    seed_base: int = 0,
    nets: dict | None = None,
    eval_examples: int = 0,
    cumulative: bool = True,
    out_dir: str | Path | None = None,
) -> list[PlpIterationReport]:
    """Iterate plan -> learn; returns one report per iteration.

    Iteration k plans the n training examples with the policies P(k)
    (uniform / built-in strategies when nets is None) and trains P(k+1)
    from the batch of all solved plans so far (``cumulative=False`` uses
    only the latest iteration's plans). ``iterations=0`` reports the pure
    planning baseline without learning. Evaluation examples come from a
    disjoint seed range; training stops with a diagnostic if an iteration
    solves nothing. A ``nets`` dict passed in is updated in place, so the
    trained policies remain available to the caller.
    """
    train_seeds = list(range(seed_base, seed_base + n_examples))
    eval_seeds = [EVAL_SEED_BASE + s for s in range(eval_examples)]
    if set(train_seeds) & set(eval_seeds):
        raise PlpError("training and evaluation seed ranges overlap")
    run_root = _prepare_run_dir(out_dir, pc, n_examples, iterations, seed_base)

    nets = nets if nets is not None else {}
    totals: dict[str, PlanBatch] = {}
    reports: list[PlpIterationReport] = []

    for k in range(max(iterations, 1)):
        outcomes = []
        fresh_plans = []
        for seed in train_seeds:
            outcome, result, world, s_start = plan_example(pc, seed, nets or None)
            outcomes.append(outcome)
            if outcome.solved:
                fresh_plans.extend(_solved_plans(result, world, s_start))
        accuracy = sum(o.solved for o in outcomes) / len(outcomes)
        report = PlpIterationReport(
            iteration=k,
            class_id=pc.id,
            outcomes=outcomes,
            accuracy=accuracy,
            checksums_before={f: n.checksum() for f, n in nets.items()},
        )

        if iterations > 0:
            if not fresh_plans:
                report.diagnostic = "no solved examples; cannot learn"
                reports.append(report)
                log.warning("plp halted at iteration %d: %s", k, report.diagnostic)
                break
            fresh = extract_batches(
                fresh_plans, run_ids=[f"it{k}"] * len(fresh_plans)
            )
            if cumulative:
                for family, batch in fresh.items():
                    if family in totals:
                        totals[family].extend(batch)
                    else:
                        totals[family] = batch
            else:
                totals = fresh
            for family, batch in totals.items():
                if family not in pc.families:
                    continue
                report.batch_sizes[family] = len(batch)
                prev = nets.get(family) or pc.families[family].fresh_net(family)
                nets[family] = _train_family(pc, family, batch, prev)
            report.checksums_after = {f: n.checksum() for f, n in nets.items()}

        if eval_seeds:
            eval_outcomes = [
                plan_example(pc, s, nets or None)[0] for s in eval_seeds
            ]
            report.eval_accuracy = sum(o.solved for o in eval_outcomes) / len(eval_outcomes)
        reports.append(report)
        _write_iteration(run_root, k, report, totals, nets)
    return reports


def evaluate_planner(
    pc: PlpClass, nets: dict | None, seeds, mechanism: str = "near_greedy"
) -> list[ExampleOutcome]:
    return [plan_example(pc, s, nets, mechanism)[0] for s in seeds]


def evaluate_greedy(pc: PlpClass, nets: dict, seeds) -> float:
    """Accuracy of pure policy-argmax rollouts (no branching, step-capped);
    hitting the cap counts as failure."""
    solved = 0
    for seed in seeds:
        world, s_start = pc.make_example(seed)
        stack = pc.build_stack(world, nets, "greedy")
        ctx = RunContext(world=world)
        stack.params.max_depth = min(stack.params.max_depth, pc.greedy_step_cap)
        result = rtp_plan(stack, s_start, ctx)
        solved += bool(result.by_tag("goal"))
    return solved / max(len(list(seeds)), 1)


def run_transfer(spec: TransferSpec, registry: dict[str, PlpClass]) -> PlpIterationReport:
    """Evaluate source-class policies on a target class without retraining
    (unless asked); records which transfer mechanism was enabled."""
    if spec.source_class not in registry or spec.target_class not in registry:
        raise PlpError("unknown class in transfer spec")
    nets = spec.nets
    if nets is None and spec.policy_dir is not None:
        nets = load_policy_dir(spec.policy_dir)
    if not nets:
        raise PlpError("transfer requires trained source policies")
    if spec.carry_families is not None:
        nets = {f: n for f, n in nets.items() if f in spec.carry_families}
    target = registry[spec.target_class]
    seeds = range(spec.seed_base, spec.seed_base + spec.n_examples)
    outcomes = evaluate_planner(target, nets, seeds, mechanism=spec.mechanism)
    report = PlpIterationReport(
        iteration=0,
        class_id=f"{spec.source_class}->{spec.target_class}[{spec.mechanism}]",
        outcomes=outcomes,
        accuracy=sum(o.solved for o in outcomes) / len(outcomes),
        checksums_before={f: n.checksum() for f, n in nets.items()},
    )
    if spec.retrain:
        raise PlpError("retrain-on-target is driven through run_plp(nets=...)")
    return report


# ---------------------------------------------------------------------------
# run directory layout


def _prepare_run_dir(out_dir, pc, n_examples, iterations, seed_base):
    if out_dir is None:
        return None
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "class": pc.id,
        "examples": n_examples,
        "iterations": iterations,
        "seed_base": seed_base,
        "families": {
            f: {"feature_width": s.feature_width, "n_actions": s.n_actions,
                "hidden": list(s.hidden)}
            for f, s in pc.families.items()
        },
    }
    (root / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True))
    return root


def _write_iteration(root, k, report, batches, nets):
    if root is None:
        return
    it_dir = root / f"iteration_{k:03d}"
    it_dir.mkdir(exist_ok=True)
    payload = asdict(report)
    (it_dir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    for family, batch in batches.items():
        save_batch(it_dir / f"batch_{family}.bin", batch)
    for family, net in nets.items():
        save_policy_weights(
            it_dir / f"policy_{family}.bin", net, metadata={"family": family}
        )


def load_policy_dir(path) -> dict[str, Mlp]:
    from .policies import load_policy_weights

    nets = {}
    for f in sorted(Path(path).glob("policy_*.bin")):
        net, meta = load_policy_weights(f)
        nets[meta["family"]] = net
    return nets


# ---------------------------------------------------------------------------
# class registry


def _four_rooms_class(barrier_id: str = "original") -> PlpClass:
    from .envs.four_rooms import FAMILY_SPECS, make_four_rooms, make_four_rooms_stack

    train_cfgs = {
        "nav": TrainConfig(learning_rate=0.4, epochs=1200, minibatch_size=128),
        "route": TrainConfig(learning_rate=0.4, epochs=800, minibatch_size=64),
        "steer": TrainConfig(learning_rate=0.4, epochs=800, minibatch_size=64),
    }
    hidden = {"nav": (48, 48), "route": (48,), "steer": (32,)}
    families = {
        f: FamilySpec(w, n, hidden=hidden[f], train=train_cfgs[f])
        for f, (w, n) in FAMILY_SPECS.items()
    }

    def make_example(seed):
        world = make_four_rooms(barrier_id)
        return world, world.sample_example(seed)

    def build(world, nets, mechanism):
        return make_four_rooms_stack(world, nets, greedy=(mechanism == "greedy"))

    return PlpClass(
        id=f"four-rooms:{barrier_id}",
        families=families,
        make_example=make_example,
        build_stack=build,
        greedy_step_cap=200,
    )


def _pendulum_class() -> PlpClass:
    from .envs.pendulum import (
        SWING_FAMILY, TOP_FAMILY, lattice_boxes, make_pendulum, make_pendulum_stack,
    )

    world0 = make_pendulum()
    n_boxes = len(lattice_boxes(world0))
    families = {
        SWING_FAMILY: FamilySpec(
            5, world0.n_actions, hidden=(48, 48),
            train=TrainConfig(learning_rate=0.3, epochs=400, minibatch_size=128),
        ),
        TOP_FAMILY: FamilySpec(
            3, n_boxes, hidden=(48, 48),
            train=TrainConfig(learning_rate=0.25, epochs=600, minibatch_size=64),
        ),
    }

    def make_example(seed):
        world = make_pendulum()
        return world, world.hanging_state(seed)

    def build(world, nets, mechanism):
        return make_pendulum_stack(
            world, mode="single", nets=nets, greedy=(mechanism == "greedy")
        )

    return PlpClass(
        id="pendulum",
        families=families,
        make_example=make_example,
        build_stack=build,
        greedy_step_cap=300,
    )


def _gripper_place_class(n_objects: int = 3, obstacles: bool = False) -> PlpClass:
    from .envs.gripper import (
        GRAB_FAMILY, PLACE_FAMILY, make_gripper_world, make_pick_place_stack,
    )

    families = {
        GRAB_FAMILY: FamilySpec(
            4, 6, train=TrainConfig(learning_rate=0.4, epochs=250, minibatch_size=64)
        ),
        PLACE_FAMILY: FamilySpec(
            4, 6, train=TrainConfig(learning_rate=0.4, epochs=250, minibatch_size=64)
        ),
    }
    scenario = "place_obstacle" if obstacles else "place"

    def make_example(seed):
        return make_gripper_world(scenario, n_objects=n_objects, seed=seed)

    def build(world, nets, mechanism):
        return make_pick_place_stack(
            world, nets,
            greedy_subplanners=(mechanism == "greedy_boundary"),
            include_primitives=(mechanism == "greedy_boundary"),
        )

    suffix = f"{n_objects}obj" + ("-obstacles" if obstacles else "")
    return PlpClass(
        id=f"gripper-place:{suffix}",
        families=families,
        make_example=make_example,
        build_stack=build,
        greedy_step_cap=200,
    )


def default_registry() -> dict[str, PlpClass]:
    classes = [
        _four_rooms_class("original"),
        _four_rooms_class("alt1"),
        _four_rooms_class("alt2"),
        _pendulum_class(),
        _gripper_place_class(3, obstacles=False),
        _gripper_place_class(9, obstacles=True),
    ]
    return {pc.id: pc for pc in classes}
