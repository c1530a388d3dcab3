import numpy as np
import pytest

from conftest import DictPolicy, TableWorld
from treeplan.core import FORBIDDEN, Outcome, Plan, QuantizationSpec, WorldModel, replay
from treeplan.flat import BUDGET, COMPLETE, PlannerConfig
from treeplan.hierarchy import (
    GaResult,
    GeneralizedAction,
    HierarchyDepthError,
    ReachedState,
    RecursionGuardError,
    RunContext,
    _RtpSearch,
    bin_actions,
    collect_boundary_states,
    rtp_plan,
)
from treeplan.policies import UniformPolicy


class LineWorld(WorldModel):
    """Continuous 1d world: position x, actions step by fixed deltas.
    equals() is an interval of width ``tol``; goal is x >= goal_x."""

    is_continuous = True
    quantization = QuantizationSpec("f")

    def __init__(self, deltas=(0.25, 0.05, -0.25), tol=0.1, goal_x=1.0,
                 low=-2.0, high=4.0, costs=None):
        self.deltas = deltas
        self.n_actions = len(deltas)
        self.tol = tol
        self.goal_x = goal_x
        self.low, self.high = low, high
        self.costs = costs or tuple(-abs(d) for d in deltas)

    def transition(self, action, state):
        x = state[0] + self.deltas[action]
        if not self.low <= x <= self.high:
            return FORBIDDEN
        return Outcome.next((x,), self.costs[action])

    def is_goal(self, state):
        return state[0] >= self.goal_x

    def equals(self, a, b):
        return abs(a[0] - b[0]) < self.tol

    def equals_bucket(self, state):
        return (int(state[0] // self.tol),)


def goto(state_id, *, multi=False, budget=50):
    return GeneralizedAction(
        id=f"goto{state_id}",
        action_set=[0, 1, 2, 3],
        sub_goal=lambda s, t=state_id: s == t,
        params=PlannerConfig(mode="feasible", max_tree_size=budget),
        return_multiple_subgoals=multi,
    )


def chain_world(n=8):
    # 0 -> 1 -> ... -> n-1 via action 0; action 1 jumps back to 0
    table = {}
    for s in range(n - 1):
        table[(s, 0)] = (s + 1, -1.0)
    return TableWorld(table, goals={n - 1}, n_actions=1)


def test_subgoal_true_at_start_returns_trivially():
    w = chain_world()
    action = goto(3)
    res = rtp_plan(action, 3, RunContext(world=w))
    assert [rs.tag for rs in res.states] == ["subgoal"]
    assert res.states[0].state == 3
    assert res.states[0].reward == 0.0
    assert len(res.states[0].plan) == 0


def test_goal_true_at_start_returns_goal_tag():
    w = chain_world(4)
    res = rtp_plan(goto(2), 3, RunContext(world=w))
    assert [rs.tag for rs in res.states] == ["goal"]


def test_two_level_plan_flattens_and_replays():
    w = chain_world(9)
    top = GeneralizedAction(
        id="top",
        action_set=[goto(2), goto(5)],
        params=PlannerConfig(mode="feasible", max_tree_size=30),
    )
    ctx = RunContext(world=w)
    res = rtp_plan(top, 0, ctx)
    goal = res.by_tag("goal")
    assert goal
    rep = replay(goal[0].plan, w, 0)
    assert rep.valid
    assert rep.final_state == 8
    assert ctx.subplanner_calls >= 1


def test_recursion_guard_on_self_reference():
    w = chain_world()
    a = GeneralizedAction(id="a", action_set=[0])
    b = GeneralizedAction(id="b", action_set=[a])
    a.action_set = [b]  # cycle a -> b -> a
    with pytest.raises(RecursionGuardError):
        rtp_plan(a, 0, RunContext(world=w))


def test_hierarchy_depth_limit():
    w = chain_world()
    action = GeneralizedAction(id="leaf", action_set=[0])
    for i in range(6):
        action = GeneralizedAction(id=f"wrap{i}", action_set=[action])
    with pytest.raises(HierarchyDepthError):
        rtp_plan(action, 0, RunContext(world=w, max_hierarchy_depth=4))


def test_failed_subplanner_marks_action_exhausted():
    w = chain_world(6)
    # no actions available: the sub-planner can never move, so it returns
    # nothing and the (state, action) pair is retired for good
    stuck = GeneralizedAction(
        id="stuck", action_set=[], sub_goal=lambda s: False,
        params=PlannerConfig(mode="feasible", max_tree_size=10),
    )
    top = GeneralizedAction(
        id="top", action_set=[stuck, goto(3), goto(5)],
        params=PlannerConfig(mode="feasible", max_tree_size=20),
    )
    ctx = RunContext(world=w)
    res = rtp_plan(top, 0, ctx)
    assert res.by_tag("goal")
    assert res.stats.exhausted_actions >= 1


def test_multiple_children_from_one_invocation_share_action():
    # sub-planner returns two subgoal states; both become children of root
    # (depth-capped so the sub-search cannot run on to the global goal)
    w = chain_world(8)
    multi = GeneralizedAction(
        id="multi23",
        action_set=[0],
        sub_goal=lambda s: s in (2, 3),
        params=PlannerConfig(mode="feasible", max_tree_size=40, max_depth=4),
        return_multiple_subgoals=True,
    )
    top = GeneralizedAction(
        id="top", action_set=[multi],
        params=PlannerConfig(mode="feasible", max_tree_size=40),
    )
    ctx = RunContext(world=w)
    search = _RtpSearch(top, 0, ctx, 0, ())
    root = search.new_node(0, None, None, 0.0, None, None)
    search.expand(root, 0)
    children = {c.state for c in root.edges.values()}
    assert children == {2, 3}
    assert {a for a, _ in root.edges} == {0}


def test_discrete_reattach_inside_rtp_matches_flat_semantics():
    # diamond: two sub-planners reach state 3 with different rewards
    table = {
        (0, 0): (1, -0.5),
        (1, 0): (3, -0.5),
        (0, 1): (2, -0.25),
        (2, 0): (3, -0.25),
        (3, 0): (4, -0.5),
    }
    w = TableWorld(table, goals={4}, n_actions=2)
    top = GeneralizedAction(
        id="top",
        action_set=[0, 1],
        policy=DictPolicy(2, {0: [0.9, 0.1]}),
        params=PlannerConfig(mode="optimal", max_tree_size=50),
    )
    res = rtp_plan(top, 0, RunContext(world=w))
    goal = res.by_tag("goal")[0]
    assert goal.reward == -1.0
    assert res.stats.reattachments >= 1


# ---------------------------------------------------------------------------
# continuous handling


def test_continuous_duplicates_are_skipped_in_feasible_mode():
    w = LineWorld()
    flat = GeneralizedAction(
        id="flat", action_set=[0, 1, 2],
        params=PlannerConfig(mode="feasible", max_tree_size=400),
    )
    res = rtp_plan(flat, (0.0,), RunContext(world=w))
    assert res.by_tag("goal")
    states = [s for s, _ in res.tree_states]
    for i, a in enumerate(states):
        for b in states[i + 1:]:
            assert not w.equals(a, b)
    assert res.stats.skipped_children > 0


def test_continuous_replace_swaps_leaf_and_improves_reward():
    w = LineWorld()
    action = GeneralizedAction(
        id="opt", action_set=[0, 1, 2],
        params=PlannerConfig(mode="optimal", reward_regime="all_negative",
                             max_tree_size=120),
    )
    ctx = RunContext(world=w)
    search = _RtpSearch(action, (0.0,), ctx, 0, ())
    root = search.new_node((0.0,), None, None, 0.0, None, None)
    # leaf at 0.25 via the expensive route; cheaper equal state then arrives
    leaf = search.new_node((0.25,), root, 0, -0.8,
                           Plan([(0, (0.0,))], -0.8), None)
    assert leaf.R == -0.8
    search.integrate(root, 1, (0.3,), -0.3, Plan([(1, (0.0,))], -0.3), None)
    assert not leaf.alive
    states = [n.state for n in search.index.nodes()]
    assert any(abs(s[0] - 0.3) < 1e-12 for s in states)
    assert search.stats.continuous_replacements == [(-0.8, -0.3)]


def test_continuous_replace_removes_whole_subtree_and_frontier_entries():
    w = LineWorld()
    action = GeneralizedAction(
        id="opt", action_set=[0, 1, 2],
        params=PlannerConfig(mode="optimal", reward_regime="all_negative",
                             max_tree_size=120),
    )
    search = _RtpSearch(action, (0.0,), RunContext(world=w), 0, ())
    root = search.new_node((0.0,), None, None, 0.0, None, None)
    a = search.new_node((0.5,), root, 0, -0.9, Plan([(0, (0.0,))], -0.9), None)
    b = search.new_node((0.75,), a, 0, -0.25, Plan([(0, (0.5,))], -0.25), None)
    c = search.new_node((0.95,), b, 0, -0.2, Plan([(0, (0.75,))], -0.2), None)
    before = len(search.frontier)
    search.integrate(root, 1, (0.52,), -0.3, Plan([(1, (0.0,))], -0.3), None)
    assert not a.alive and not b.alive and not c.alive
    assert len(search.index) == 2  # root + newcomer
    assert len(search.frontier) < before


def test_continuous_replace_skips_ancestor_match():
    w = LineWorld()
    action = GeneralizedAction(
        id="opt", action_set=[0, 1, 2],
        params=PlannerConfig(mode="optimal", reward_regime="all_negative",
                             max_tree_size=120),
    )
    search = _RtpSearch(action, (0.0,), RunContext(world=w), 0, ())
    root = search.new_node((0.0,), None, None, 0.0, None, None)
    mid = search.new_node((0.5,), root, 0, -0.5, Plan([(0, (0.0,))], -0.5), None)
    leaf = search.new_node((1.5,), mid, 0, -0.5, Plan([(0, (0.5,))], -0.5), None)
    # new state equals ``mid`` but mid is on the path to the parent ``leaf``
    search.integrate(leaf, 1, (0.52,), 1.0, Plan([(1, (1.5,))], 1.0), None)
    assert mid.alive
    assert search.stats.loop_skips >= 1
    assert search.stats.continuous_replacements == []


def test_continuous_replacements_strictly_increase_rewards():
    # the big hop is tried first but costs far more than two small steps to
    # an equal position, so the search later swaps those samples out
    w = LineWorld(deltas=(0.8, 0.4, -0.4), costs=(-2.0, -0.25, -0.25),
                  tol=0.12, goal_x=2.0)
    flat = GeneralizedAction(
        id="flat", action_set=[0, 1, 2],
        params=PlannerConfig(mode="optimal", reward_regime="all_negative",
                             max_tree_size=300),
    )
    res = rtp_plan(flat, (0.0,), RunContext(world=w))
    assert res.stats.continuous_replacements, "expected replacements to occur"
    for old, new in res.stats.continuous_replacements:
        assert new > old


# ---------------------------------------------------------------------------
# boundary states and binning


def test_boundary_states_collected_and_returned():
    w = LineWorld(deltas=(0.5, 1.5, -0.5), tol=0.1, goal_x=10.0, high=2.0)
    probe = GeneralizedAction(
        id="probe", action_set=[0, 1, 2],
        sub_goal=lambda s: False,
        params=PlannerConfig(mode="feasible", max_tree_size=40),
        return_boundary_states=True,
    )
    res = rtp_plan(probe, (0.0,), RunContext(world=w))
    bounds = res.by_tag("boundary")
    assert bounds
    for rs in bounds:
        assert replay(rs.plan, w, (0.0,)).valid
    # attempted jumps past x=2.0 leave pre-crash states near that wall
    assert any(rs.state[0] > 0.5 for rs in bounds)


def test_collect_boundary_states_dedupes_and_adds_predecessors():
    w = chain_world(6)
    events = [4, 4, 3]
    plans = [
        Plan([(0, 0), (0, 1), (0, 2), (0, 3)], -4.0),
        Plan([(0, 0), (0, 1), (0, 2), (0, 3)], -4.0),
        Plan([(0, 0), (0, 1), (0, 2)], -3.0),
    ]
    no_preds = collect_boundary_states(events, w)
    assert sorted(no_preds) == [3, 4]
    with_preds = collect_boundary_states(events, w, plans, predecessors=2)
    assert set(with_preds) >= {4, 3, 2}


def test_boundary_cap_limits_returns():
    w = LineWorld(deltas=(0.5, 1.5, -0.5), tol=0.1, goal_x=10.0, high=2.0)
    probe = GeneralizedAction(
        id="probe", action_set=[0, 1, 2],
        sub_goal=lambda s: False,
        params=PlannerConfig(mode="feasible", max_tree_size=60),
        return_boundary_states=True,
        max_boundary_returns=2,
    )
    res = rtp_plan(probe, (0.0,), RunContext(world=w))
    assert len(res.by_tag("boundary")) <= 2


def test_bin_actions_21_bins_unit_range():
    centers = bin_actions(-1.0, 1.0, 21)
    assert len(centers) == 21
    assert centers[0] == -1.0 and centers[-1] == 1.0
    assert np.allclose(np.diff(centers), 0.1)


def test_bin_actions_errors():
    with pytest.raises(ValueError):
        bin_actions(0.0, 0.0, 5)
    with pytest.raises(ValueError):
        bin_actions(-1.0, 1.0, 1)


def test_bin_actions_five_bins():
    assert list(bin_actions(-2, 2, 5)) == [-2, -1, 0, 1, 2]


# ---------------------------------------------------------------------------
# caching and traces


def test_invocation_cache_hits_on_repeat():
    w = chain_world(8)
    sub = goto(3)
    top = GeneralizedAction(
        id="top", action_set=[sub, sub],  # same child twice
        params=PlannerConfig(mode="feasible", max_tree_size=30),
    )
    ctx = RunContext(world=w)
    rtp_plan(top, 0, ctx)
    assert ctx.cache
    search = _RtpSearch(top, 0, ctx, 0, ())
    result = search.invoke(sub, 0)
    assert search.stats.cache_hits == 1
    assert result.success


def test_trace_records_nested_levels():
    w = chain_world(8)
    top = GeneralizedAction(
        id="top", action_set=[goto(2), goto(5)],
        params=PlannerConfig(mode="feasible", max_tree_size=30),
    )
    records = []
    ctx = RunContext(world=w, trace=records.append)
    rtp_plan(top, 0, ctx)
    levels = {r["level"] for r in records if r["type"] == "subplan"}
    assert levels == {0, 1}
    top_rec = [r for r in records if r["action_id"] == "top"][-1]
    assert top_rec["returned"]
