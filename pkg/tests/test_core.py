import numpy as np
import pytest

from treeplan.core import (
    EncodingError,
    Outcome,
    Plan,
    QuantizationSpec,
    ZeroRewardWorld,
    canonical_encode,
    replay,
)
from treeplan.envs.checkerboard import make_checkerboard
from treeplan.flat import tp_plan
from treeplan.policies import UniformPolicy


def test_canonical_encode_grid_cell_is_stable_and_fixed_width():
    spec = QuantizationSpec("ii")
    a = canonical_encode((3, 5), spec)
    b = canonical_encode((3, 5), spec)
    assert a == b
    assert len(a) == 16  # two 8-byte integers


def test_canonical_encode_continuous_deterministic():
    spec = QuantizationSpec("ff")
    s = (0.1 + 0.2, -3.5)
    assert canonical_encode(s, spec) == canonical_encode(s, spec)


def test_canonical_encode_distinct_cells_distinct_bytes():
    spec = QuantizationSpec("ii")
    seen = {canonical_encode((x, y), spec) for x in range(8) for y in range(8)}
    assert len(seen) == 64


def test_canonical_encode_dimension_mismatch():
    with pytest.raises(EncodingError):
        canonical_encode((1, 2, 3), QuantizationSpec("ii"))


def test_transition_determinism_sampled():
    w = make_checkerboard(3, size=8)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        s = (int(rng.integers(8)), int(rng.integers(8)))
        u = int(rng.integers(4))
        a, b = w.transition(u, s), w.transition(u, s)
        assert a.forbidden == b.forbidden
        if not a.forbidden:
            assert w.encode(a.state) == w.encode(b.state)
            assert a.reward == b.reward


def test_equals_reflexive_symmetric_random_pairs():
    w = make_checkerboard(1, size=6)
    rng = np.random.default_rng(7)
    for _ in range(200):
        a = (int(rng.integers(6)), int(rng.integers(6)))
        b = (int(rng.integers(6)), int(rng.integers(6)))
        assert w.equals(a, a)
        assert w.equals(a, b) == w.equals(b, a)
        assert w.equals(a, b) == (a == b)


def test_replay_empty_plan_is_identity():
    w = make_checkerboard(0, size=4)
    res = replay(Plan(), w, (2, 2))
    assert res.valid
    assert res.final_state == (2, 2)
    assert res.cumulative_reward == 0.0


def test_replay_planner_output_matches_reported_reward():
    w = make_checkerboard(0, size=8)
    result = tp_plan(w, w.start, UniformPolicy(4))
    plan = result.best_plan
    rep = replay(plan, w, w.start)
    assert rep.valid
    assert rep.cumulative_reward == result.best_reward


def test_replay_detects_corrupted_state():
    w = make_checkerboard(0, size=6)
    result = tp_plan(w, w.start, UniformPolicy(4))
    plan = result.best_plan
    assert len(plan) >= 4
    u, _ = plan.steps[2]
    plan.steps[2] = (u, (5, 0) if plan.steps[2][1] != (5, 0) else (0, 5))
    assert replay(plan, w, w.start).error_index == 2


def test_replay_detects_reward_mismatch():
    w = make_checkerboard(0, size=6)
    plan = tp_plan(w, w.start, UniformPolicy(4)).best_plan
    plan.cumulative_reward += 0.5
    res = replay(plan, w, w.start)
    assert not res.valid
    assert res.error_index == len(plan.steps)


def test_zero_reward_world_wraps_transitions():
    base = make_checkerboard(0, size=5)
    zero = ZeroRewardWorld(base)
    out = zero.transition(0, (0, 0))
    assert out.reward == 0.0
    assert out.state == base.transition(0, (0, 0)).state
    assert zero.transition(1, (0, 0)).forbidden  # off-board stays forbidden


def test_outcome_next_constructor():
    out = Outcome.next((1, 2), -0.25)
    assert not out.forbidden
    assert out.state == (1, 2)
    assert out.reward == -0.25
