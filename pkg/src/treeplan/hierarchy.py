"""Recursive tree planner: search trees whose edges may be sub-planners.

A generalized action bundles everything a sub-planner needs (its own action
set, sub-goal predicate, policy, optional initializer and planner budget),
so a parent search can treat a whole sub-search as one macro-step. One
invocation can hand back several states at once: reached sub-goals, global
goals, and boundary states recorded just before forbidden transitions. All
of them become children of the invoking node, keyed by (action, child), and
each carries the flattened primitive plan that reaches it, so every path in
the hierarchy replays exactly on the world model.

Discrete duplicate states re-parent subtrees exactly like the flat planner.
Continuous worlds instead use the world's equals() predicate as a minimal
sampling distance: a new state that equals an in-tree one either gets
dropped (feasible mode) or, when its path pays strictly more, the matched
node and its entire subtree are deleted and the newcomer is inserted as a
fresh leaf. The subtree cannot be kept because its dynamics were rolled out
from a state that is only approximately equal; rewards still improve
monotonically at each replacement, but global optimality is not guaranteed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .core import Plan, PlanningError, State, WorldModel
from .flat import (
    BUDGET,
    COMPLETE,
    GOAL_FOUND,
    Frontier,
    PlannerConfig,
    SearchStats,
)

GOAL = "goal"
SUBGOAL = "subgoal"
BOUNDARY = "boundary"


class RecursionGuardError(PlanningError):
    """A generalized action appeared in its own call chain."""


class HierarchyDepthError(PlanningError):
    """Call nesting exceeded the configured safety limit."""


@dataclass
class GeneralizedAction:
    """Sub-planner descriptor treated as a single action by a parent search.

    ``action_set`` mixes primitive action indices (ints) and other
    generalized actions; it must never contain this action itself or any
    ancestor in the current call chain. ``family`` groups instances that
    share one learned policy (e.g. one goal-conditioned network serving all
    lattice targets); it defaults to ``id``.
    """

    id: str
    action_set: list = field(default_factory=list)
    family: str | None = None
    sub_goal: Callable[[State], bool] | None = None
    # Per-invocation predicate builder for relative sub-goals ("reach a
    # lattice cell other than the invoking one"); takes the search root and
    # returns the predicate to use for that invocation. Overrides sub_goal.
    sub_goal_factory: Callable[[State], Callable[[State], bool]] | None = None
    sub_goal_states: list | None = None
    policy: Any | None = None
    features: Callable[[State], np.ndarray] | None = None
    # Hindsight feature builder for learning: given the state a returned
    # path actually ended at, produce the feature map to record its steps
    # under. Keeps labels consistent when a search terminates somewhere
    # other than its nominal target (e.g. at the global goal en route).
    hindsight_features: Callable[[State], Callable[[State], np.ndarray]] | None = None
    initializer: Callable[[State, "GeneralizedAction"], list] | None = None
    params: PlannerConfig = field(default_factory=PlannerConfig)
    return_multiple_subgoals: bool = False
    # With multiple sub-goal returns, keep only the first state reached per
    # key (e.g. per lattice cell); None returns every sub-goal state.
    subgoal_key: Callable[[State], Any] | None = None
    return_boundary_states: bool = False
    max_boundary_returns: int | None = None
    greedy_only: bool = False
    terminate_on_subgoal: bool | None = None

    def __post_init__(self):
        if self.family is None:
            self.family = self.id

    @property
    def terminates_subgoals(self) -> bool:
        # Non-terminating by default when returning multiple sub-goals,
        # because some sub-goals may be ancestors of others.
        if self.terminate_on_subgoal is None:
            return not self.return_multiple_subgoals
        return self.terminate_on_subgoal


@dataclass
class HierStep:
    """One action choice of one planner level: which entry of the acting
    action set was taken, from which state (plus its feature vector when the
    acting action declares one), and the chosen sub-decomposition when the
    entry was itself a sub-planner."""

    action_index: int
    state: State
    features: np.ndarray | None = None
    sub: "HierPlan | None" = None


@dataclass
class HierPlan:
    action_id: str
    family: str
    n_actions: int
    steps: list[HierStep] = field(default_factory=list)

    def walk(self, level: int = 0) -> Iterator[tuple["HierPlan", int]]:
        """This plan and every sub-plan, with hierarchy depth (top = 0)."""
        yield self, level
        for step in self.steps:
            if step.sub is not None:
                yield from step.sub.walk(level + 1)


@dataclass
class ReachedState:
    state: State
    reward: float
    tag: str  # goal | subgoal | boundary
    plan: Plan
    hier: HierPlan


@dataclass
class RtpStats(SearchStats):
    subplanner_calls: int = 0
    cache_hits: int = 0
    skipped_children: int = 0
    exhausted_actions: int = 0
    # (old R, new R) per continuous replacement; new must exceed old
    continuous_replacements: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class GaResult:
    states: list[ReachedState]
    status: str
    stats: RtpStats
    # alive tree nodes at the end of the search, for diagnostics/invariants
    tree_states: list[tuple[State, float]] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return bool(self.states)

    def by_tag(self, tag: str) -> list[ReachedState]:
        return [rs for rs in self.states if rs.tag == tag]

    def best(self) -> ReachedState:
        if not self.states:
            raise PlanningError("empty result")
        rank = {GOAL: 2, SUBGOAL: 1, BOUNDARY: 0}
        return max(self.states, key=lambda rs: (rank[rs.tag], rs.reward))


@dataclass
class RunContext:
    """Facilities shared by every level of one planning run.

    The invocation cache memoizes sub-planner results by (action id, exact
    state bytes); dynamics and policies are deterministic and fixed for the
    run, so a repeated invocation can only repeat its previous answer.
    """

    world: WorldModel
    is_goal: Callable[[State], bool] | None = None
    max_hierarchy_depth: int = 4
    boundary_predecessors: int = 0
    trace: Callable[[dict], None] | None = None
    cache_enabled: bool = True
    cache: dict = field(default_factory=dict)
    transition_calls: int = 0
    subplanner_calls: int = 0
    nodes_expanded: int = 0  # frontier pops summed over every level

    def __post_init__(self):
        if self.is_goal is None:
            self.is_goal = self.world.is_goal


def bin_actions(low: float, high: float, n_bins: int) -> np.ndarray:
    """Uniform bin centers spanning [low, high] inclusive of endpoints."""
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    if not high > low:
        raise ValueError("degenerate action range")
    return np.linspace(low, high, n_bins)


class RtpNode:
    __slots__ = (
        "state", "key", "uid", "parent", "in_action", "in_segment", "in_hier",
        "incoming_reward", "R", "depth", "available", "edges", "exhausted",
        "scores", "terminal", "alive",
    )

    def __init__(self, state: State, key: bytes, uid: int):
        self.state = state
        self.key = key
        self.uid = uid
        self.parent: RtpNode | None = None
        self.in_action: int | None = None
        self.in_segment: Plan | None = None
        self.in_hier: HierPlan | None = None
        self.incoming_reward = 0.0
        self.R = 0.0
        self.depth = 0
        self.available: set[int] = set()
        self.edges: dict[tuple[int, int], "RtpNode"] = {}
        self.exhausted: set[int] = set()
        self.scores = None
        self.terminal = False
        self.alive = True

    def ancestors(self) -> Iterator["RtpNode"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    def subtree(self) -> Iterator["RtpNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.edges.values())

    def has_edge_for(self, action_index: int) -> bool:
        return any(a == action_index for a, _ in self.edges)


class _NodeIndex:
    """State-identity lookup: byte-keyed for discrete worlds, equals()-based
    with an optional coarse bucket grid for continuous ones."""

    def __init__(self, world: WorldModel):
        self.world = world
        self.by_key: dict[bytes, RtpNode] = {}
        self.bucket_fn = getattr(world, "equals_bucket", None)
        self.buckets: dict[tuple, list[RtpNode]] = {}

    def add(self, node: RtpNode) -> None:
        self.by_key[node.key] = node
        if self.world.is_continuous and self.bucket_fn is not None:
            self.buckets.setdefault(self.bucket_fn(node.state), []).append(node)

    def remove(self, node: RtpNode) -> None:
        self.by_key.pop(node.key, None)
        if self.world.is_continuous and self.bucket_fn is not None:
            bucket = self.buckets.get(self.bucket_fn(node.state))
            if bucket is not None:
                bucket[:] = [n for n in bucket if n is not node]

    def __len__(self) -> int:
        return len(self.by_key)

    def nodes(self):
        return self.by_key.values()

    def find_matches(self, state: State) -> list[RtpNode]:
        """Nodes the new state is 'already in the tree' for."""
        if not self.world.is_continuous:
            key = self.world.encode(state)
            hit = self.by_key.get(key)
            return [hit] if hit is not None else []
        if self.bucket_fn is not None:
            center = self.bucket_fn(state)
            candidates = []
            for offsets in itertools.product((-1, 0, 1), repeat=len(center)):
                key = tuple(c + o for c, o in zip(center, offsets))
                candidates.extend(self.buckets.get(key, ()))
        else:
            candidates = list(self.by_key.values())
        return [n for n in candidates if self.world.equals(state, n.state)]


def rtp_plan(
    action: GeneralizedAction,
    s_start: State,
    ctx: RunContext,
    depth_in_hierarchy: int = 0,
    call_chain: tuple[str, ...] = (),
) -> GaResult:
    """Run the sub-planner described by ``action`` from ``s_start``.

    Terminates at global goals always and at this action's sub-goals when
    configured; returns every requested reached state (goals, sub-goals,
    boundary states) with its path reward and flattened primitive plan.
    """
    if action.id in call_chain:
        raise RecursionGuardError(
            f"{action.id!r} already active in call chain {call_chain}"
        )
    if depth_in_hierarchy > ctx.max_hierarchy_depth:
        raise HierarchyDepthError(
            f"hierarchy deeper than {ctx.max_hierarchy_depth} levels"
        )
    search = _RtpSearch(action, s_start, ctx, depth_in_hierarchy, call_chain)
    result = search.run()
    if ctx.trace is not None:
        ctx.trace({
            "type": "subplan",
            "level": depth_in_hierarchy,
            "action_id": action.id,
            "status": result.status,
            "returned": [rs.tag for rs in result.states],
            "tree_size": result.stats.tree_size,
            "nodes_expanded": result.stats.nodes_expanded,
        })
    return result


class _RtpSearch:
    def __init__(self, action, s_start, ctx, depth, chain):
        self.action = action
        self.s_start = s_start
        self.ctx = ctx
        self.world = ctx.world
        self.depth = depth
        self.chain = chain + (action.id,)
        self.cfg = action.params
        self.stats = RtpStats()
        self.uid = itertools.count()
        self.index = _NodeIndex(self.world)
        self.frontier = Frontier()
        self.goal_nodes: list[RtpNode] = []
        self.subgoal_nodes: list[RtpNode] = []
        self.boundary_nodes: list[RtpNode] = []
        self.stop = False
        self.status = COMPLETE

        self.action_set = list(action.action_set)
        if action.initializer is not None:
            self.action_set = list(action.initializer(s_start, action))
        for item in self.action_set:
            if isinstance(item, GeneralizedAction) and item.id in self.chain:
                raise RecursionGuardError(
                    f"action set of {action.id!r} contains {item.id!r} "
                    f"from its own call chain"
                )
        self.valid_indices = list(range(len(self.action_set)))
        if action.sub_goal_factory is not None:
            self.sub_goal_pred = action.sub_goal_factory(s_start)
        else:
            self.sub_goal_pred = action.sub_goal
        self._uniform = np.full(
            max(len(self.action_set), 1), 1.0 / max(len(self.action_set), 1)
        )

    # -- state classification ------------------------------------------------

    def is_subgoal(self, state: State) -> bool:
        return self.sub_goal_pred is not None and self.sub_goal_pred(state)

    def policy_scores(self, state: State) -> np.ndarray:
        if self.action.policy is None:
            return self._uniform
        return np.asarray(self.action.policy.scores(state), dtype=float)

    # -- main loops ------------------------------------------------------------

    def run(self) -> GaResult:
        start_tag = None
        if self.ctx.is_goal(self.s_start):
            start_tag = GOAL
        elif self.is_subgoal(self.s_start):
            start_tag = SUBGOAL
        if start_tag is not None:
            rs = ReachedState(
                state=self.s_start, reward=0.0, tag=start_tag, plan=Plan(),
                hier=HierPlan(self.action.id, self.action.family, len(self.action_set)),
            )
            return GaResult([rs], COMPLETE, self.stats,
                            tree_states=[(self.s_start, 0.0)])

        if self.action.greedy_only:
            return self.greedy_rollout()
        return self.tree_search()

    def tree_search(self) -> GaResult:
        root = self.new_node(self.s_start, None, None, 0.0, None, None)
        while len(self.frontier) and not self.stop:
            node, a_idx = self.frontier.pop()
            self.stats.frontier_pops += 1
            node.available.discard(a_idx)
            if node.depth >= self.cfg.max_depth:
                self.stats.depth_pruned += 1
                continue
            self.expand(node, a_idx)
        if self.stop and self.status == COMPLETE:
            self.status = GOAL_FOUND
        return self.assemble()

    def expand(self, node: RtpNode, a_idx: int) -> None:
        item = self.action_set[a_idx]
        self.stats.nodes_expanded += 1
        self.ctx.nodes_expanded += 1
        if isinstance(item, GeneralizedAction):
            result = self.invoke(item, node.state)
            if not result.success:
                node.exhausted.add(a_idx)
                self.stats.exhausted_actions += 1
                return
            children = [
                (rs.state, rs.reward, rs.plan, rs.hier) for rs in result.states
            ]
        else:
            out = self.world.transition(item, node.state)
            self.ctx.transition_calls += 1
            self.stats.transition_calls += 1
            if out.forbidden:
                self.stats.forbidden_hits += 1
                self.record_boundary(node)
                return
            segment = Plan(steps=[(item, node.state)], cumulative_reward=out.reward)
            children = [(out.state, out.reward, segment, None)]
        for child_state, r, segment, hier in children:
            self.integrate(node, a_idx, child_state, r, segment, hier)
            if self.stop:
                break

    def invoke(self, child: GeneralizedAction, state: State) -> GaResult:
        key = (child.id, self.world.encode(state))
        if self.ctx.cache_enabled and key in self.ctx.cache:
            self.stats.cache_hits += 1
            return self.ctx.cache[key]
        self.ctx.subplanner_calls += 1
        self.stats.subplanner_calls += 1
        result = rtp_plan(child, state, self.ctx, self.depth + 1, self.chain)
        if self.ctx.cache_enabled:
            self.ctx.cache[key] = result
        return result

    # -- tree integration ----------------------------------------------------

    def integrate(
        self,
        parent: RtpNode,
        a_idx: int,
        child_state: State,
        reward: float,
        segment: Plan,
        hier: HierPlan | None,
    ) -> None:
        """Attach one returned state: new node, re-parent, or replace."""
        matches = self.index.find_matches(child_state)
        if not matches:
            self.new_node(child_state, parent, a_idx, reward, segment, hier)
            return
        new_r = parent.R + reward
        if not self.cfg.reattach_enabled:
            self.stats.skipped_children += 1
            return
        if self.world.is_continuous:
            best = max(matches, key=lambda n: n.R)
            if new_r > best.R:
                self.continuous_replace(best, parent, a_idx, child_state,
                                        reward, segment, hier)
            else:
                self.stats.skipped_children += 1
        else:
            existing = matches[0]
            if new_r > existing.R:
                self.reattach(existing, parent, a_idx, reward, segment, hier)
            else:
                self.stats.skipped_children += 1

    def new_node(self, state, parent, a_idx, reward, segment, hier) -> RtpNode:
        node = RtpNode(state, self.world.encode(state), next(self.uid))
        if parent is not None:
            node.parent = parent
            node.in_action = a_idx
            node.in_segment = segment
            node.in_hier = hier
            node.incoming_reward = reward
            node.R = parent.R + reward
            node.depth = parent.depth + 1
            parent.edges[(a_idx, node.uid)] = node
            self.stats.tree_size += 1
            self.stats.r_updates.append((node.key, float("-inf"), node.R))
        self.index.add(node)
        self.classify(node)
        if self.stats.tree_size >= self.cfg.max_tree_size:
            self.stop = True
            self.status = BUDGET
        return node

    def classify(self, node: RtpNode) -> None:
        """Terminal/goal/sub-goal bookkeeping plus frontier insertion."""
        if self.ctx.is_goal(node.state):
            node.terminal = True
            self.goal_nodes.append(node)
            if self.cfg.stop_early:
                self.stop = True
            return
        if self.is_subgoal(node.state):
            self.subgoal_nodes.append(node)
            if self.action.terminates_subgoals:
                node.terminal = True
                if self.cfg.stop_early and not self.action.return_multiple_subgoals:
                    self.stop = True
                return
        self.open_node(node)

    def open_node(self, node: RtpNode) -> None:
        node.scores = self.policy_scores(node.state)
        node.available = set(self.valid_indices) - node.exhausted
        for i in sorted(node.available):
            self.frontier.push(node, i, node.scores[i])

    def record_boundary(self, node: RtpNode) -> None:
        self.boundary_nodes.append(node)
        cur = node.parent
        for _ in range(self.ctx.boundary_predecessors):
            if cur is None:
                break
            self.boundary_nodes.append(cur)
            cur = cur.parent

    def reattach(self, node, new_parent, a_idx, reward, segment, hier) -> bool:
        """Discrete re-parent with subtree move, as in the flat planner but
        with (action, child) edge keys and exhausted-action tracking."""
        if node is new_parent:
            self.stats.loop_skips += 1
            return False
        if (self.cfg.ancestor_guard
                and any(anc is node for anc in new_parent.ancestors())):
            self.stats.loop_skips += 1
            return False
        self.detach_from_parent(node)
        new_parent.edges[(a_idx, node.uid)] = node
        node.parent = new_parent
        node.in_action = a_idx
        node.in_segment = segment
        node.in_hier = hier
        node.incoming_reward = reward
        for moved in node.subtree():
            old_r = moved.R
            moved.R = moved.parent.R + moved.incoming_reward
            moved.depth = moved.parent.depth + 1
            self.stats.r_updates.append((moved.key, old_r, moved.R))
            if moved.terminal:
                continue
            revived = {
                i for i in self.valid_indices
                if not moved.has_edge_for(i) and i not in moved.exhausted
            }
            for i in revived - moved.available:
                self.frontier.push(moved, i, moved.scores[i])
            moved.available = revived
        self.stats.reattachments += 1
        return True

    def detach_from_parent(self, node: RtpNode) -> None:
        old_parent = node.parent
        if old_parent is None:
            return
        del old_parent.edges[(node.in_action, node.uid)]
        # The producing action comes back only once none of its children
        # remain attached (a generalized action may have several).
        if (not old_parent.terminal
                and not old_parent.has_edge_for(node.in_action)
                and node.in_action not in old_parent.exhausted):
            old_parent.available.add(node.in_action)
            self.frontier.push(old_parent, node.in_action,
                               old_parent.scores[node.in_action])

    def continuous_replace(self, match, new_parent, a_idx, child_state,
                           reward, segment, hier) -> bool:
        """Drop the matched node and its subtree, insert the newcomer fresh.

        No change when the match lies on the new state's own path (that
        would cut the path's tail off). Each executed replacement strictly
        raises the reward held at that sample of state space.
        """
        if match is new_parent or any(a is match for a in new_parent.ancestors()):
            self.stats.loop_skips += 1
            return False
        old_r = match.R
        self.detach_from_parent(match)
        for dead in match.subtree():
            dead.alive = False
            self.index.remove(dead)
            self.frontier.purge_node(dead)
            self.stats.tree_size -= 1
        node = self.new_node(child_state, new_parent, a_idx, reward, segment, hier)
        self.stats.continuous_replacements.append((old_r, node.R))
        return True

    # -- result assembly ----------------------------------------------------

    def path_nodes(self, node: RtpNode) -> list[RtpNode]:
        chain = []
        cur = node
        while cur is not None:
            chain.append(cur)
            cur = cur.parent
        chain.reverse()
        return chain

    def flatten(self, node: RtpNode) -> Plan:
        steps: list[tuple[int, State]] = []
        for n in self.path_nodes(node)[1:]:
            steps.extend(n.in_segment.steps)
        return Plan(steps=steps, cumulative_reward=node.R)

    def build_hier(self, node: RtpNode) -> HierPlan:
        feature_fn = self.action.features
        if self.action.hindsight_features is not None:
            feature_fn = self.action.hindsight_features(node.state)
        plan = HierPlan(self.action.id, self.action.family, len(self.action_set))
        for n in self.path_nodes(node)[1:]:
            feats = feature_fn(n.parent.state) if feature_fn is not None else None
            plan.steps.append(HierStep(
                action_index=n.in_action,
                state=n.parent.state,
                features=feats,
                sub=n.in_hier,
            ))
        return plan

    def assemble(self) -> GaResult:
        chosen: dict[int, tuple[RtpNode, str]] = {}

        def offer(node: RtpNode, tag: str) -> None:
            if not node.alive:
                return
            rank = {GOAL: 2, SUBGOAL: 1, BOUNDARY: 0}
            held = chosen.get(node.uid)
            if held is None or rank[tag] > rank[held[1]]:
                chosen[node.uid] = (node, tag)

        for node in self.goal_nodes:
            offer(node, GOAL)
        live_subgoals = [n for n in self.subgoal_nodes if n.alive]
        if self.action.return_multiple_subgoals:
            if self.action.subgoal_key is not None:
                first_per_key: dict = {}
                for node in live_subgoals:  # discovery order
                    first_per_key.setdefault(self.action.subgoal_key(node.state), node)
                live_subgoals = list(first_per_key.values())
            for node in live_subgoals:
                offer(node, SUBGOAL)
        elif live_subgoals:
            offer(max(live_subgoals, key=lambda n: n.R), SUBGOAL)
        if self.action.return_boundary_states:
            seen: set[int] = set()
            cap = self.action.max_boundary_returns
            for node in self.boundary_nodes:
                if node.alive and node.uid not in seen:
                    if cap is not None and len(seen) >= cap:
                        break
                    seen.add(node.uid)
                    offer(node, BOUNDARY)

        reached = [
            ReachedState(
                state=node.state, reward=node.R, tag=tag,
                plan=self.flatten(node), hier=self.build_hier(node),
            )
            for node, tag in chosen.values()
        ]
        reached.sort(key=lambda rs: ({GOAL: 0, SUBGOAL: 1, BOUNDARY: 2}[rs.tag], -rs.reward))
        tree_states = [(n.state, n.R) for n in self.index.nodes()]
        return GaResult(reached, self.status, self.stats, tree_states=tree_states)

    # -- greedy mode -------------------------------------------------------------

    def greedy_rollout(self) -> GaResult:
        """Follow the policy argmax with no branching; stop at the global
        goal, a terminating sub-goal, a forbidden move (recording the
        boundary state), a failing sub-planner, or the step cap."""
        if self.action.policy is None:
            raise PlanningError(f"greedy-only action {self.action.id!r} needs a policy")
        steps: list[tuple[int, State]] = []
        hier = HierPlan(self.action.id, self.action.family, len(self.action_set))
        reached: list[ReachedState] = []
        recorded: set[bytes] = set()
        state = self.s_start
        total = 0.0

        def snapshot(tag: str) -> None:
            key = self.world.encode(state)
            if key in recorded:
                return
            recorded.add(key)
            reached.append(ReachedState(
                state=state, reward=total, tag=tag,
                plan=Plan(steps=list(steps), cumulative_reward=total),
                hier=HierPlan(self.action.id, self.action.family,
                              len(self.action_set), steps=list(hier.steps)),
            ))

        for _ in range(self.cfg.max_depth):
            if self.ctx.is_goal(state):
                snapshot(GOAL)
                break
            if self.is_subgoal(state):
                snapshot(SUBGOAL)
                if self.action.terminates_subgoals:
                    break
            scores = self.policy_scores(state)
            a_idx = int(np.argmax(scores))
            item = self.action_set[a_idx]
            feats = self.action.features(state) if self.action.features else None
            if isinstance(item, GeneralizedAction):
                result = self.invoke(item, state)
                if not result.success:
                    break
                best = result.best()
                if self.world.equals(best.state, state):
                    break  # sub-planner made no progress; greedy is stuck
                steps.extend(best.plan.steps)
                hier.steps.append(HierStep(a_idx, state, feats, best.hier))
                total += best.reward
                state = best.state
            else:
                out = self.world.transition(item, state)
                self.ctx.transition_calls += 1
                self.stats.transition_calls += 1
                if out.forbidden:
                    if self.action.return_boundary_states:
                        snapshot(BOUNDARY)
                    break
                steps.append((item, state))
                hier.steps.append(HierStep(a_idx, state, feats, None))
                total += out.reward
                state = out.state
        # after break or step cap the final state may be unrecorded yet;
        # snapshot() is idempotent per state
        if self.ctx.is_goal(state):
            snapshot(GOAL)
        elif self.is_subgoal(state):
            snapshot(SUBGOAL)
        if not self.action.return_multiple_subgoals:
            keep_goals = [rs for rs in reached if rs.tag == GOAL]
            keep_sub = [rs for rs in reached if rs.tag == SUBGOAL][-1:]
            keep_bound = [rs for rs in reached if rs.tag == BOUNDARY]
            reached = keep_goals + keep_sub + keep_bound
        return GaResult(reached, COMPLETE, self.stats,
                        tree_states=[(state, total)])


def integrate_child_states(
    search: _RtpSearch, parent: RtpNode, a_idx: int, result: GaResult
) -> None:
    """Fold one sub-planner result into the tree (exposed for tests; the
    search loop calls the same logic per returned state)."""
    for rs in result.states:
        search.integrate(parent, a_idx, rs.state, rs.reward, rs.plan, rs.hier)


def collect_boundary_states(
    events: Sequence[State], world: WorldModel, plans: Sequence[Plan] | None = None,
    predecessors: int = 0,
) -> list[State]:
    """Deduplicate boundary states, optionally adding k path predecessors
    (plans[i] is the path that reached events[i])."""
    out: dict[bytes, State] = {}
    for i, state in enumerate(events):
        out.setdefault(world.encode(state), state)
        if predecessors and plans is not None:
            tail = [s for _, s in plans[i].steps][-predecessors:]
            for s in tail:
                out.setdefault(world.encode(s), s)
    return list(out.values())
