"""Command-line harness: plan, learn, transfer, oracle-check and render.

Exit codes are a stable contract: 0 success, 1 planner failure (no
solution or budget exhausted), 2 usage or configuration errors. Errors
print a machine-readable JSON record to stderr. Every artifact lands under
the run directory (flag, then config file, then $TREEPLAN_OUT, then ./runs)
and carries the seed in its header.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .core import ZeroRewardWorld, replay
from .flat import ALL_NEGATIVE, MIXED, PlannerConfig, tp_plan
from .hierarchy import RunContext, rtp_plan
from .oracle import exhaustive_oracle
from .policies import RandomPolicy, UniformPolicy
from .render import ascii_grid, render_grid_svg, render_phase_svg
from .trace import TraceWriter, read_trace

EXIT_OK = 0
EXIT_PLANNER = 1
EXIT_USAGE = 2


def _error(message: str, **fields) -> int:
    sys.stderr.write(json.dumps({"error": message, **fields}) + "\n")
    return EXIT_USAGE


def _out_root(args) -> Path:
    root = args.out or os.environ.get("TREEPLAN_OUT") or "runs"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# scenario registry: name -> (world, initial state, optional stack builder)


def _load_scenario(name: str, seed: int):
    from .envs import checkerboard, four_rooms, gripper, pendulum, terrain

    if name.startswith("checkerboard"):
        parts = name.split("-")  # checkerboard-8x8-neg | checkerboard-4x4-pos
        size = int(parts[1].split("x")[0]) if len(parts) > 1 else 8
        regime = MIXED if (len(parts) > 2 and parts[2] == "pos") else ALL_NEGATIVE
        world = checkerboard.make_checkerboard(seed, size=size, regime=regime)
        return world, world.start, None
    if name.startswith("four-rooms"):
        barrier = name.split(":", 1)[1] if ":" in name else "original"
        world = four_rooms.make_four_rooms(barrier)
        return world, world.sample_example(seed), four_rooms.make_four_rooms_stack
    if name.startswith("gripper"):
        scenario = name.split(":", 1)[1] if ":" in name else "place"
        world, state = gripper.make_gripper_world(scenario, seed=seed)
        if scenario == "stack":
            builder = lambda w, nets=None, **kw: gripper.make_stacking_stack(w, nets)
        else:
            builder = lambda w, nets=None, **kw: gripper.make_pick_place_stack(w, nets)
        return world, state, builder
    if name.startswith("pendulum"):
        mode = name.split(":", 1)[1] if ":" in name else "multi"
        world = pendulum.make_pendulum()
        builder = lambda w, nets=None, m=mode, **kw: pendulum.make_pendulum_stack(w, mode=m, nets=nets)
        return world, world.hanging_state(seed), builder
    if name.startswith("terrain"):
        world = terrain.make_terrain(seed)
        return world, world.start, None
    raise KeyError(name)


def _scenario_or_exit(name: str, seed: int):
    try:
        return _load_scenario(name, seed)
    except KeyError:
        raise SystemExit(_error("scenario not found", scenario=name))


def _render_world(world, states, out_path):
    if hasattr(world, "config"):  # pendulum-style phase space
        render_phase_svg(states, world, out=out_path)
    elif hasattr(world, "heights"):
        hmax = float(world.heights.max()) or 1.0
        render_grid_svg(world, states, out=out_path,
                        cell_value=lambda x, y: world.heights[x, y] / hmax)
    elif hasattr(world, "rewards"):
        lo, hi = float(world.rewards.min()), float(world.rewards.max())
        span = (hi - lo) or 1.0
        render_grid_svg(world, states, out=out_path,
                        cell_value=lambda x, y: (world.rewards[x, y] - lo) / span)
    else:
        render_grid_svg(world, states, out=out_path)


# ---------------------------------------------------------------------------
# commands


def cmd_plan(args) -> int:
    world, s_start, builder = _scenario_or_exit(args.scenario, args.seed)
    out = _out_root(args)
    trace = TraceWriter(out / "trace.jsonl", header={
        "command": "plan", "scenario": args.scenario, "seed": args.seed,
        "mode": args.mode, "levels": args.levels,
    })
    hierarchical = builder is not None and args.levels != 1
    if hierarchical:
        nets = None
        if args.policies:
            from .plp import load_policy_dir
            nets = load_policy_dir(args.policies)
        stack = builder(world, nets=nets)
        ctx = RunContext(world=world, trace=trace)
        result = rtp_plan(stack, s_start, ctx)
        goals = result.by_tag("goal")
        solved = bool(goals)
        stats = {
            "tree_size": result.stats.tree_size,
            "nodes_expanded": ctx.nodes_expanded,
            "transition_calls": ctx.transition_calls,
            "subplanner_calls": ctx.subplanner_calls,
            "status": result.status,
        }
        plan = result.best().plan if solved else None
    else:
        mode = args.mode
        regime = MIXED if getattr(world, "regime", ALL_NEGATIVE) == MIXED else ALL_NEGATIVE
        cfg = PlannerConfig(mode=mode, reward_regime=regime)
        if args.random_order:
            policy = RandomPolicy(world.n_actions, args.seed, world.encode)
        else:
            policy = UniformPolicy(world.n_actions)
        result = tp_plan(world, s_start, policy, cfg, trace=trace)
        solved = result.success
        stats = {
            "tree_size": result.stats.tree_size,
            "nodes_expanded": result.stats.nodes_expanded,
            "transition_calls": result.stats.transition_calls,
            "reattachments": result.stats.reattachments,
            "status": result.status,
        }
        plan = result.best_plan if solved else None

    stats["solved"] = solved
    (Path(out) / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True))
    if plan is not None:
        rep = replay(plan, world, s_start)
        record = {
            "seed": args.seed,
            "scenario": args.scenario,
            "reward": plan.cumulative_reward,
            "length": len(plan),
            "replay_valid": rep.valid,
            "steps": [[int(a), _flatten_state(s)] for a, s in plan.steps],
        }
        (out / "plan.json").write_text(json.dumps(record, indent=2))
        if args.render:
            states = plan.states(world)
            _render_world(world, states, out / "plan.svg")
            trace.write({"type": "render", "path": str(out / "plan.svg")})
    trace.write({"type": "result", **stats})
    trace.close()
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK if solved else EXIT_PLANNER


def _flatten_state(s):
    flat = []
    for part in s:
        if isinstance(part, tuple):
            flat.extend(_flatten_state(part))
        else:
            flat.append(int(part) if isinstance(part, (int, np.integer)) else float(part))
    return flat


def cmd_oracle(args) -> int:
    lo, hi = (int(x) for x in args.seeds.split("..")) if ".." in args.seeds else (int(args.seeds), int(args.seeds))
    matches = 0
    total = 0
    for seed in range(lo, hi + 1):
        world, s_start, _ = _scenario_or_exit(args.scenario, seed)
        regime = MIXED if getattr(world, "regime", ALL_NEGATIVE) == MIXED else ALL_NEGATIVE
        cfg = PlannerConfig(reward_regime=regime, max_depth=args.max_depth)
        policy = RandomPolicy(world.n_actions, seed, world.encode)
        result = tp_plan(world, s_start, policy, cfg)
        oracle = exhaustive_oracle(
            world, s_start, regime=regime,
            max_depth=args.max_depth if regime == MIXED else None,
        )
        mine = result.state_rewards()
        ok = set(mine) == set(oracle) and all(mine[k] == oracle[k] for k in oracle)
        matches += ok
        total += 1
    print(f"{matches}/{total} match")
    return EXIT_OK if matches == total else EXIT_PLANNER


def cmd_plp(args) -> int:
    from .plp import default_registry, run_plp

    registry = default_registry()
    if args.klass not in registry:
        return _error("unknown class", **{"class": args.klass, "known": sorted(registry)})
    pc = registry[args.klass]
    out = _out_root(args)
    reports = run_plp(
        pc, n_examples=args.examples, iterations=args.iterations,
        seed_base=args.seed, eval_examples=args.eval_examples, out_dir=out,
    )
    last = reports[-1]
    summary = {
        "class": pc.id,
        "iterations": len(reports),
        "accuracy": last.accuracy,
        "eval_accuracy": last.eval_accuracy,
        "batch_sizes": last.batch_sizes,
        "diagnostic": last.diagnostic,
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if last.accuracy > 0 else EXIT_PLANNER


def cmd_transfer(args) -> int:
    from .plp import TransferSpec, default_registry, run_transfer

    registry = default_registry()
    spec = TransferSpec(
        source_class=args.source,
        target_class=args.target,
        policy_dir=args.policies,
        mechanism=args.mechanism,
        n_examples=args.examples,
        seed_base=args.seed,
    )
    try:
        report = run_transfer(spec, registry)
    except Exception as exc:
        return _error(str(exc))
    print(json.dumps({
        "transfer": report.class_id,
        "accuracy": report.accuracy,
        "examples": len(report.outcomes),
    }, sort_keys=True))
    return EXIT_OK if report.accuracy > 0 else EXIT_PLANNER


def cmd_render(args) -> int:
    records = read_trace(args.trace)
    header = next((r for r in records if r.get("type") == "header"), {})
    scenario = args.scenario or header.get("scenario")
    if scenario is None:
        return _error("trace has no scenario header; pass --scenario")
    seed = int(header.get("seed", 0))
    world, s_start, _ = _scenario_or_exit(scenario, seed)
    plan_path = Path(args.trace).parent / "plan.json"
    states = [s_start]
    if plan_path.exists():
        plan = json.loads(plan_path.read_text())
        states = [step[1] for step in plan["steps"]] or [s_start]
    _render_world(world, states, args.out)
    print(json.dumps({"rendered": str(args.out), "states": len(states)}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def _apply_config_file(parser, argv):
    """Config file values sit between defaults and explicit flags."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = Path(argv[idx + 1])
    if not path.exists():
        raise SystemExit(_error("config file not found", path=str(path)))
    pairs = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        pairs.extend([f"--{key.strip()}", value.strip()])
    rest = argv[:idx] + argv[idx + 2:]
    return pairs + rest  # later (explicit) flags win in argparse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treeplan",
        description="Hierarchical tree-search planning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one scenario example")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["optimal", "feasible"], default="optimal")
    p.add_argument("--levels", type=int, default=0, help="1 forces the flat planner")
    p.add_argument("--policies", help="directory of trained policy files")
    p.add_argument("--random-order", action="store_true")
    p.add_argument("--render", action="store_true")
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("oracle", help="compare the planner against brute force")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", default="0..19")
    p.add_argument("--max-depth", type=int, default=16)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plp", help="run the plan-learn-plan loop")
    p.add_argument("--class", dest="klass", required=True)
    p.add_argument("--examples", type=int, default=10)
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--eval-examples", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_plp)

    p = sub.add_parser("transfer", help="evaluate source policies on a target class")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--mechanism", choices=["near_greedy", "greedy_boundary"],
                   default="near_greedy")
    p.add_argument("--examples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("render", help="render a trace to SVG")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
