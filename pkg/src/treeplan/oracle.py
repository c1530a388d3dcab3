"""Ground-truth optimal rewards by brute force, for checking planners.

Two regimes, matching the planner's:

- all-negative rewards: enumerate the reachable state graph (goals
  absorbing) and run Bellman-Ford-style relaxation sweeps until fixpoint.
  Optimal values exist because every cycle has negative total reward.
- mixed/positive rewards: enumerate every simple path up to a depth bound
  and keep the best cumulative reward per visited state. Exponential; only
  for small instances.

Both accumulate rewards left-to-right along paths, the same order the
planner uses, so agreement can be asserted exactly in floating point.
"""

from __future__ import annotations

from collections import deque

from .core import PlanningError, State, WorldModel
from .flat import ALL_NEGATIVE, MIXED


class OracleBudgetExceeded(PlanningError):
    pass


def enumerate_states(
    world: WorldModel, s_start: State, max_states: int = 100_000
) -> tuple[dict[bytes, State], dict[bytes, list[tuple[int, bytes, float]]]]:
    """Reachable states and their outgoing (action, target, reward) edges.

    Goal states are absorbing: they get no outgoing edges, matching the
    planner's treatment of goals as terminal.
    """
    start_key = world.encode(s_start)
    states: dict[bytes, State] = {start_key: s_start}
    edges: dict[bytes, list[tuple[int, bytes, float]]] = {}
    queue = deque([start_key])
    while queue:
        key = queue.popleft()
        state = states[key]
        edges[key] = []
        if world.is_goal(state):
            continue
        for action in world.actions(state):
            out = world.transition(action, state)
            if out.forbidden:
                continue
            child_key = world.encode(out.state)
            edges[key].append((action, child_key, out.reward))
            if child_key not in states:
                if len(states) >= max_states:
                    raise OracleBudgetExceeded(
                        f"more than {max_states} reachable states"
                    )
                states[child_key] = out.state
                queue.append(child_key)
    return states, edges


def exhaustive_oracle(
    world: WorldModel,
    s_start: State,
    regime: str = ALL_NEGATIVE,
    max_depth: int | None = None,
    max_states: int = 100_000,
) -> dict[bytes, float]:
    """Optimal cumulative reward from ``s_start`` for every reachable state."""
    if regime == ALL_NEGATIVE:
        return _relaxation_oracle(world, s_start, max_states)
    if regime == MIXED:
        if max_depth is None:
            raise ValueError("mixed-regime enumeration needs a depth bound")
        return _enumeration_oracle(world, s_start, max_depth, max_states)
    raise ValueError(f"unknown regime {regime!r}")


def _relaxation_oracle(
    world: WorldModel, s_start: State, max_states: int
) -> dict[bytes, float]:
    states, edges = enumerate_states(world, s_start, max_states)
    best: dict[bytes, float] = {key: float("-inf") for key in states}
    best[world.encode(s_start)] = 0.0
    for _ in range(len(states)):
        changed = False
        for key, outgoing in edges.items():
            r_here = best[key]
            if r_here == float("-inf"):
                continue
            for _, child_key, reward in outgoing:
                candidate = r_here + reward
                if candidate > best[child_key]:
                    best[child_key] = candidate
                    changed = True
        if not changed:
            break
    else:
        raise PlanningError("relaxation did not converge: positive cycle?")
    return {key: value for key, value in best.items() if value > float("-inf") or key == world.encode(s_start)}


def _enumeration_oracle(
    world: WorldModel, s_start: State, max_depth: int, max_states: int
) -> dict[bytes, float]:
    states, edges = enumerate_states(world, s_start, max_states)
    del states
    start_key = world.encode(s_start)
    best: dict[bytes, float] = {start_key: 0.0}
    on_path: set[bytes] = {start_key}

    def visit(key: bytes, depth: int, reward: float) -> None:
        if depth >= max_depth:
            return
        for _, child_key, r in edges[key]:
            if child_key in on_path:
                continue
            candidate = reward + r
            if candidate > best.get(child_key, float("-inf")):
                best[child_key] = candidate
            on_path.add(child_key)
            visit(child_key, depth + 1, candidate)
            on_path.remove(child_key)

    visit(start_key, 0, 0.0)
    return best
