import numpy as np

from treeplan.core import FORBIDDEN, Outcome, QuantizationSpec, WorldModel
from treeplan.policies import StochasticPolicy


class TableWorld(WorldModel):
    """Explicit transition-table world over small-integer states, for
    constructing exact planner scenarios in tests."""

    quantization = QuantizationSpec("i")

    def __init__(self, table, goals, n_actions):
        # table: {(state, action): (next_state, reward)}
        self.table = dict(table)
        self.goals = set(goals)
        self.n_actions = n_actions
        self._allowed = {}
        for (s, u), _ in self.table.items():
            self._allowed.setdefault(s, set()).add(u)

    def actions(self, state):
        return sorted(self._allowed.get(state, ()))

    def transition(self, action, state):
        hit = self.table.get((state, action))
        if hit is None:
            return FORBIDDEN
        nxt, r = hit
        return Outcome.next(nxt, r)

    def is_goal(self, state):
        return state in self.goals

    def state_values(self, state):
        return (state,)


class DictPolicy(StochasticPolicy):
    """Fixed score vectors per state; unlisted states get uniform scores."""

    def __init__(self, n_actions, scores_by_state):
        self.n_actions = n_actions
        self.scores_by_state = {
            s: np.asarray(v, dtype=float) for s, v in scores_by_state.items()
        }

    def scores(self, state):
        if state in self.scores_by_state:
            return self.scores_by_state[state]
        return np.full(self.n_actions, 1.0 / self.n_actions)


def random_negative_table_world(rng, n_states=8, n_actions=3, goal_count=1):
    """Random all-negative-reward digraph over n_states integer states."""
    table = {}
    for s in range(n_states):
        for u in range(n_actions):
            if rng.random() < 0.8:
                nxt = int(rng.integers(n_states))
                table[(s, u)] = (nxt, float(rng.uniform(-1.0, -0.05)))
    goals = set(int(g) for g in rng.choice(n_states, size=goal_count, replace=False))
    # keep the start out of the goal set so searches do some work
    goals.discard(0)
    if not goals:
        goals = {n_states - 1} if n_states > 1 else {0}
    return TableWorld(table, goals, n_actions)
