"""Flat forward-search tree planner over discrete states.

The search keeps one tree node per state (generalized Dijkstra) and expands
the (node, action) pair with the highest stochastic-policy score, so a
policy that is peaked along a good trajectory makes the search near-greedy:
the greedy rollout is tried first, then the closest deviations, and so on.
With a uniform policy the deterministic tie-break (insertion order, then
action index) degenerates to breadth-like FIFO expansion.

Whenever a popped transition rediscovers an in-tree state via a strictly
better path, the existing node and its whole subtree are re-parented onto
the new path; cumulative rewards in the moved subtree are recomputed
top-down and every non-edge action of the moved nodes is made available
again, because comparisons those actions lost before may now win.

With strictly negative rewards everywhere except into goal states, the full
search is provably loop-free and returns optimal cumulative rewards for
every in-tree state, in any expansion order. With mixed/positive rewards an
ancestor guard must be enabled; the search then improves monotonically but
optimality is no longer guaranteed.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from .core import Action, Plan, PlanningError, State, WorldModel

OPTIMAL = "optimal"
FEASIBLE = "feasible"
ALL_NEGATIVE = "all_negative"
MIXED = "mixed"

# result statuses
COMPLETE = "complete"       # frontier exhausted
GOAL_FOUND = "goal_found"   # stopped early on first goal
BUDGET = "budget"           # max_tree_size reached; best-so-far attached


@dataclass
class PlannerConfig:
    max_tree_size: int = 1_000_000
    max_depth: int = 100_000
    mode: str = OPTIMAL
    reward_regime: str = ALL_NEGATIVE
    stop_on_first_goal: bool | None = None  # default: True in feasible mode
    # Feasible planning skips subtree re-parenting (any path to a state is as
    # good as any other when path rewards are zero); set True to force it.
    reattach_in_feasible: bool = False
    boundary_predecessors: int = 0
    # Verify frontier/tree bookkeeping after every iteration. O(tree) per
    # step; only for small instances and tests.
    debug_invariants: bool = False

    def __post_init__(self):
        if self.max_tree_size < 1 or self.max_depth < 1:
            raise ValueError("max_tree_size and max_depth must be >= 1")
        if self.mode not in (OPTIMAL, FEASIBLE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.reward_regime not in (ALL_NEGATIVE, MIXED):
            raise ValueError(f"unknown reward regime {self.reward_regime!r}")

    @property
    def stop_early(self) -> bool:
        if self.stop_on_first_goal is None:
            return self.mode == FEASIBLE
        return self.stop_on_first_goal

    @property
    def reattach_enabled(self) -> bool:
        return self.mode == OPTIMAL or self.reattach_in_feasible

    @property
    def ancestor_guard(self) -> bool:
        return self.reward_regime == MIXED


@dataclass
class SearchStats:
    nodes_expanded: int = 0      # frontier pops that ran a transition
    tree_size: int = 1
    reattachments: int = 0
    frontier_pops: int = 0
    transition_calls: int = 0
    loop_skips: int = 0
    depth_pruned: int = 0
    forbidden_hits: int = 0
    # (encoded state, old R, new R) for every cumulative-reward update
    r_updates: list[tuple[bytes, float, float]] = field(default_factory=list)


class Node:
    """Search-tree node: a state, its best-known path, and bookkeeping.

    ``available`` holds actions not yet tried from here; ``edges`` maps
    tried-and-kept actions to child nodes. The two never overlap. Actions
    that were tried and lost their reward comparison are in neither set
    until a re-parenting of this node revives them.
    """

    __slots__ = (
        "state", "key", "uid", "parent", "action", "incoming_reward",
        "R", "depth", "available", "edges", "scores", "is_goal_node",
    )

    def __init__(self, state: State, key: bytes, uid: int):
        self.state = state
        self.key = key
        self.uid = uid
        self.parent: Node | None = None
        self.action: Action | None = None
        self.incoming_reward = 0.0
        self.R = 0.0
        self.depth = 0
        self.available: set[Action] = set()
        self.edges: dict[Action, Node] = {}
        self.scores = None  # cached policy vector for this state
        self.is_goal_node = False

    def ancestors(self) -> Iterator["Node"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    def subtree(self) -> Iterator["Node"]:
        """This node and all descendants, parents before children."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.edges.values())


class Frontier:
    """Priority structure over (node, action) pairs, max policy score first.

    Ties break by insertion sequence then action index, which makes runs
    reproducible and gives FIFO (breadth-like) order under uniform scores.
    Removal is lazy: a live-set keeps the heap honest, and ``__len__`` /
    ``pairs`` reflect exactly the live entries.
    """

    def __init__(self):
        self._heap: list[tuple[float, int, Action, Node]] = []
        self._live: set[tuple[int, Action]] = set()
        self._counter = itertools.count()

    def __len__(self) -> int:
        return len(self._live)

    def push(self, node: Node, action: Action, score: float) -> None:
        tag = (node.uid, action)
        if tag in self._live:
            return
        self._live.add(tag)
        heapq.heappush(self._heap, (-score, next(self._counter), action, node))

    def pop(self) -> tuple[Node, Action]:
        while self._heap:
            _, _, action, node = heapq.heappop(self._heap)
            tag = (node.uid, action)
            if tag in self._live:
                self._live.remove(tag)
                return node, action
        raise PlanningError("pop from empty frontier")

    def discard(self, node: Node, action: Action) -> None:
        self._live.discard((node.uid, action))

    def purge_node(self, node: Node) -> None:
        self._live = {tag for tag in self._live if tag[0] != node.uid}

    def pairs(self) -> set[tuple[int, Action]]:
        return set(self._live)


@dataclass
class TpResult:
    status: str
    goal_leaves: list[tuple[State, float]]
    plans: list[Plan]
    boundary_states: list[State]
    stats: SearchStats
    root: Node
    nodes: dict[bytes, Node]

    @property
    def success(self) -> bool:
        return bool(self.goal_leaves)

    @property
    def best_reward(self) -> float:
        if not self.goal_leaves:
            raise PlanningError("no goal reached")
        return max(r for _, r in self.goal_leaves)

    @property
    def best_plan(self) -> Plan:
        if not self.plans:
            raise PlanningError("no goal reached")
        return max(self.plans, key=lambda p: p.cumulative_reward)

    def state_rewards(self) -> dict[bytes, float]:
        """Best-known cumulative reward per in-tree state."""
        return {key: node.R for key, node in self.nodes.items()}


def backtrack_plan(node: Node) -> Plan:
    """Root-to-node plan as (action, state-acted-from) pairs."""
    chain: list[Node] = []
    cur: Node | None = node
    while cur is not None:
        chain.append(cur)
        cur = cur.parent
    chain.reverse()
    steps = [(n.action, n.parent.state) for n in chain[1:]]
    return Plan(steps=steps, cumulative_reward=node.R)


def reattach_subtree(
    node: Node,
    new_parent: Node,
    action: Action,
    reward: float,
    world: WorldModel,
    frontier: Frontier,
    stats: SearchStats,
    guard: bool,
) -> bool:
    """Move ``node`` (and its subtree) under ``new_parent`` via ``action``.

    Caller guarantees new_parent.R + reward > node.R. Returns False without
    touching the tree when the guard is on and the move would form a loop
    (``node`` is ``new_parent`` or one of its ancestors). On success the old
    parent gets its edge action back as available, subtree rewards and
    depths are recomputed top-down from the new attachment point, and every
    non-edge action of every moved node is revived so that comparisons it
    lost earlier can be retried at the higher cumulative reward.
    """
    if node is new_parent:
        stats.loop_skips += 1
        return False
    if guard and any(anc is node for anc in new_parent.ancestors()):
        stats.loop_skips += 1
        return False

    old_parent = node.parent
    if old_parent is not None:
        del old_parent.edges[node.action]
        if not old_parent.is_goal_node:
            old_parent.available.add(node.action)
            frontier.push(old_parent, node.action, old_parent.scores[node.action])

    new_parent.available.discard(action)
    frontier.discard(new_parent, action)
    new_parent.edges[action] = node
    node.parent = new_parent
    node.action = action
    node.incoming_reward = reward

    # Recompute (not delta-shift) so every R stays an exact left-to-right
    # path sum, bit-identical to what a relaxation oracle computes.
    for moved in node.subtree():
        old_r = moved.R
        moved.R = moved.parent.R + moved.incoming_reward
        moved.depth = moved.parent.depth + 1
        stats.r_updates.append((moved.key, old_r, moved.R))
        if moved.is_goal_node:
            continue
        revived = set(world.actions(moved.state)) - set(moved.edges)
        for u in revived - moved.available:
            frontier.push(moved, u, moved.scores[u])
        moved.available = revived
    stats.reattachments += 1
    return True


def check_search_invariants(nodes: dict[bytes, Node], frontier: Frontier) -> None:
    """Frontier pairs must be exactly the union of available sets, and no
    node may hold an action as both available and an edge."""
    expected: set[tuple[int, Action]] = set()
    for node in nodes.values():
        overlap = node.available & set(node.edges)
        if overlap:
            raise AssertionError(f"available/edge overlap {overlap} at {node.state}")
        expected.update((node.uid, u) for u in node.available)
    live = frontier.pairs()
    if live != expected:
        raise AssertionError(
            f"frontier out of sync: {len(live)} live vs {len(expected)} available"
        )


def tp_plan(
    world: WorldModel,
    s_start: State,
    policy,
    config: PlannerConfig | None = None,
    trace: Callable[[dict], None] | None = None,
) -> TpResult:
    """Plan from ``s_start`` on a discrete world, guided by ``policy``.

    ``policy.scores(state)`` must give a probability vector over the world's
    action table; expansion order follows those scores (greedy first). In
    optimal mode the search runs until the frontier empties or the tree-size
    budget is hit; in feasible mode it stops at the first goal by default.
    Goal states are terminal: they are never expanded, but their paths keep
    improving while the search runs.
    """
    if world.is_continuous:
        raise PlanningError("flat planner handles discrete worlds only")
    cfg = config or PlannerConfig()
    stats = SearchStats()
    uid = itertools.count()

    root = Node(s_start, world.encode(s_start), next(uid))
    nodes: dict[bytes, Node] = {root.key: root}
    frontier = Frontier()
    goal_nodes: list[Node] = []
    boundary: dict[bytes, State] = {}
    status = COMPLETE

    def emit(kind: str, **fields) -> None:
        if trace is not None:
            trace({"type": kind, **fields})

    def record_boundary(node: Node) -> None:
        boundary.setdefault(node.key, node.state)
        cur = node.parent
        for _ in range(cfg.boundary_predecessors):
            if cur is None:
                break
            boundary.setdefault(cur.key, cur.state)
            cur = cur.parent

    def open_node(node: Node) -> None:
        node.scores = policy.scores(node.state)
        node.available = set(world.actions(node.state))
        for u in sorted(node.available):
            frontier.push(node, u, node.scores[u])

    if world.is_goal(s_start):
        root.is_goal_node = True
        return TpResult(COMPLETE, [(s_start, 0.0)], [Plan()], [], stats, root, nodes)

    open_node(root)

    while len(frontier):
        node, action = frontier.pop()
        stats.frontier_pops += 1
        node.available.discard(action)
        if node.depth >= cfg.max_depth:
            stats.depth_pruned += 1
            continue

        out = world.transition(action, node.state)
        stats.transition_calls += 1
        stats.nodes_expanded += 1
        if out.forbidden:
            stats.forbidden_hits += 1
            record_boundary(node)
            emit("forbidden", state=node.state, action=action)
            continue

        key = world.encode(out.state)
        existing = nodes.get(key)
        if existing is None:
            child = Node(out.state, key, next(uid))
            child.parent = node
            child.action = action
            child.incoming_reward = out.reward
            child.R = node.R + out.reward
            child.depth = node.depth + 1
            node.edges[action] = child
            nodes[key] = child
            stats.tree_size += 1
            stats.r_updates.append((key, float("-inf"), child.R))
            emit("expand", state=out.state, R=child.R, tree_size=stats.tree_size)
            if world.is_goal(out.state):
                child.is_goal_node = True
                goal_nodes.append(child)
                if cfg.stop_early:
                    status = GOAL_FOUND
                    break
            else:
                open_node(child)
            if stats.tree_size >= cfg.max_tree_size:
                status = BUDGET
                break
        else:
            new_r = node.R + out.reward
            if new_r > existing.R and cfg.reattach_enabled:
                moved = reattach_subtree(
                    existing, node, action, out.reward,
                    world=world, frontier=frontier, stats=stats,
                    guard=cfg.ancestor_guard,
                )
                if moved:
                    emit("reattach", state=out.state, R=existing.R)
        if cfg.debug_invariants:
            check_search_invariants(nodes, frontier)

    goal_nodes = [g for g in goal_nodes if g.depth <= cfg.max_depth]
    goal_nodes.sort(key=lambda n: (-n.R, n.uid))
    plans = [backtrack_plan(g) for g in goal_nodes]
    return TpResult(
        status=status,
        goal_leaves=[(g.state, g.R) for g in goal_nodes],
        plans=plans,
        boundary_states=list(boundary.values()),
        stats=stats,
        root=root,
        nodes=nodes,
    )


def select_expansion(frontier: Frontier) -> tuple[Node, Action]:
    """Pop the frontier pair with the maximal policy score (ties broken by
    insertion order then action index). Scores were cached at insertion;
    policies are pure so they cannot go stale."""
    return frontier.pop()
