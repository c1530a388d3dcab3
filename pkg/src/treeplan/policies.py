"""Stochastic policies: baselines, learned networks, filters, splitting.

A policy maps a state to a probability vector over an action set. Planners
consume only the ordering of the scores (argmax-first expansion), never
samples, so policies must be pure: the same state always yields the same
vector. Outputs sum to 1 except for split-policy combination, whose flat
score vector is deliberately left unnormalized (see ``combine_split``).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .core import PlanningError, State


class PolicyError(PlanningError):
    pass


class StochasticPolicy:
    """Base interface: ``scores(state)`` returns the probability vector."""

    n_actions: int = 0

    def scores(self, state: State) -> np.ndarray:
        raise NotImplementedError

    def sample(self, state: State, rng: np.random.Generator) -> int:
        """Diagnostics only; planners never sample."""
        p = np.asarray(self.scores(state), dtype=float)
        p = p / p.sum()
        return int(rng.choice(len(p), p=p))


class UniformPolicy(StochasticPolicy):
    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise PolicyError("empty action set")
        self.n_actions = n_actions
        self._vec = np.full(n_actions, 1.0 / n_actions)

    def scores(self, state: State) -> np.ndarray:
        return self._vec


class RandomPolicy(StochasticPolicy):
    """Pure pseudo-random scores, keyed by a hash of the encoded state.

    Gives a reproducible random expansion order: the same (seed, state)
    always produces the same vector, different seeds give different orders.
    """

    def __init__(self, n_actions: int, seed: int, encode: Callable[[State], bytes]):
        if n_actions < 1:
            raise PolicyError("empty action set")
        self.n_actions = n_actions
        self.seed = seed
        self.encode = encode

    def scores(self, state: State) -> np.ndarray:
        digest = hashlib.blake2b(
            self.encode(state), key=self.seed.to_bytes(8, "little"), digest_size=8
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        raw = rng.random(self.n_actions) + 1e-9
        return raw / raw.sum()


class NetworkPolicy(StochasticPolicy):
    """A trained network behind an optional feature map.

    ``features`` adapts raw world states to the network input (identity by
    default); this is where pre-filters and goal conditioning plug in.
    """

    def __init__(self, net, features: Callable[[State], np.ndarray] | None = None):
        self.net = net
        self.features = features
        self.n_actions = net.n_outputs

    def scores(self, state: State) -> np.ndarray:
        x = state if self.features is None else self.features(state)
        return self.net.probs(np.asarray(x, dtype=float))


@dataclass
class PreFilter:
    """Unlearned lossy front-end ``map(state, g) -> feature vector``.

    Declared invariances are contractual and tested: ``label_invariant``
    filters give identical output when the parameter object's label is
    exchanged with another; ``shift_invariant`` ones commute with rigid
    scene translation.
    """

    map: Callable[[State, Any], np.ndarray]
    label_invariant: bool = False
    shift_invariant: bool = False


def apply_prefilter(prefilter: PreFilter, g: Any, state: State) -> np.ndarray:
    return np.asarray(prefilter.map(state, g), dtype=float)


def combine_split(
    task_scores: Sequence[float],
    subtask_scores_per_task: Sequence[Sequence[float]],
    renormalize: bool = False,
) -> np.ndarray:
    """Recombine a task policy with per-task sub-policies into flat scores.

    Entry for sub-task k of task j is p(j) * p_j(k) * N(j) with
    N(j) = 1 / max_k p_j(k). The normalizer makes scores comparable across
    tasks with different sub-task counts: with equally likely sub-tasks the
    combined score of any of them collapses to p(j) exactly, however many
    there are. The flat vector is NOT a distribution (planners only need
    the ordering); pass ``renormalize=True`` for reporting purposes only.
    """
    tasks = np.asarray(task_scores, dtype=float)
    if tasks.size == 0:
        raise PolicyError("empty task set")
    if len(subtask_scores_per_task) != tasks.size:
        raise PolicyError("one sub-task vector required per task")
    blocks = []
    for j, sub in enumerate(subtask_scores_per_task):
        sub = np.asarray(sub, dtype=float)
        if sub.size == 0:
            raise PolicyError(f"task {j} has no sub-tasks")
        blocks.append(tasks[j] * sub * (1.0 / sub.max()))
    flat = np.concatenate(blocks)
    if renormalize:
        flat = flat / flat.sum()
    return flat


class SplitPolicy(StochasticPolicy):
    """Task policy plus per-task sub-policies, combined per ``combine_split``.

    The flat action index runs over (task 0 sub-tasks..., task 1
    sub-tasks..., ...) in declaration order.
    """

    def __init__(
        self,
        task_policy: StochasticPolicy,
        sub_policies: Sequence[StochasticPolicy],
        renormalize: bool = False,
    ):
        self.task_policy = task_policy
        self.sub_policies = list(sub_policies)
        self.renormalize = renormalize
        self.n_actions = sum(p.n_actions for p in self.sub_policies)

    def scores(self, state: State) -> np.ndarray:
        return combine_split(
            self.task_policy.scores(state),
            [p.scores(state) for p in self.sub_policies],
            renormalize=self.renormalize,
        )


@dataclass
class GridPolicyMap:
    """2d probability map over grid cells, p(x, y | s); sums to 1."""

    probs: np.ndarray

    def argmax_cell(self) -> tuple[int, int]:
        flat = int(np.argmax(self.probs))
        x, y = np.unravel_index(flat, self.probs.shape)
        return int(x), int(y)

    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1)


def grid_policy_eval(net, state_image: np.ndarray) -> GridPolicyMap:
    """Evaluate a 2d-softmax-head network on an image-like state encoding."""
    img = np.asarray(state_image, dtype=float)
    if net.out_shape is None:
        raise PolicyError("network has no declared 2d output shape")
    probs = net.probs(img.reshape(-1)).reshape(net.out_shape)
    return GridPolicyMap(probs=probs)


# ---------------------------------------------------------------------------
# Policy weight container: versioned binary file with a JSON header followed
# by the parameter arrays as row-major float64. Loadable by the CLI.

WEIGHTS_MAGIC = b"TPW1"


def save_policy_weights(path, net, metadata: dict | None = None) -> None:
    from .nn import Mlp  # local import to avoid a cycle

    assert isinstance(net, Mlp)
    header = {
        "version": 1,
        "layer_sizes": list(net.layer_sizes),
        "activation": net.activation,
        "head": net.head,
        "out_shape": list(net.out_shape) if net.out_shape else None,
        "metadata": metadata or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in net.parameters():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_policy_weights(path):
    from .nn import Mlp, MlpSpec

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != WEIGHTS_MAGIC:
            raise PolicyError(f"not a policy weight file: magic {magic!r}")
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size).decode("utf-8"))
        spec = MlpSpec(
            layer_sizes=header["layer_sizes"],
            activation=header["activation"],
            head=header["head"],
            out_shape=tuple(header["out_shape"]) if header["out_shape"] else None,
        )
        net = Mlp(spec)
        for i, arr in enumerate(net.parameters()):
            raw = fh.read(arr.size * 8)
            if len(raw) != arr.size * 8:
                raise PolicyError("truncated weight file")
            loaded = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
            net.set_parameter(i, loaded)
    return net, header["metadata"]
