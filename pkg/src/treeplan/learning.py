"""Imitation learning: plan batches in, stochastic policies out.

Solved plans are flat lists of (action index, state features) pairs grouped
by the generalized-action family that chose them, one batch per family;
training a softmax network with cross-entropy on one-hot action targets
recovers the empirical conditional action distribution, which is exactly
the stochastic policy the planners consume. A Gumbel-noise head trained
with a squared index-reconstruction loss learns the same argmax behavior by
a completely different route and serves as a cross-check. Sub-goal
predicates can be learned too, as sigmoid classifiers over positive and
negative states harvested from search trees.

Everything trains with plain seeded minibatch gradient descent in float64;
same seed and batch give bit-identical weights.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import PlanningError
from .hierarchy import HierPlan
from .nn import Mlp, MlpSpec

log = logging.getLogger(__name__)

IMBALANCE_LIMIT = 100.0


class LearningDivergence(PlanningError):
    """Training loss went non-finite."""


@dataclass
class BatchRecord:
    action_index: int
    features: np.ndarray
    ga_id: str
    level: int


@dataclass
class PlanBatch:
    family: str
    n_actions: int
    feature_width: int
    records: list[BatchRecord] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([r.features for r in self.records])
        a = np.array([r.action_index for r in self.records], dtype=int)
        return x, a

    def extend(self, other: "PlanBatch") -> None:
        if (other.n_actions, other.feature_width) != (self.n_actions, self.feature_width):
            raise PlanningError(f"batch shape mismatch for family {self.family!r}")
        self.records.extend(other.records)
        self.provenance.extend(other.provenance)


@dataclass
class TrainConfig:
    learning_rate: float = 0.2
    epochs: int = 300
    minibatch_size: int = 32
    temperature_start: float = 5.0
    temperature_end: float = 0.1
    validation_split: float = 0.0
    # keep the weights from the best whole-batch-loss epoch instead of the
    # last one; tames minibatch noise on big heterogeneous batches
    keep_best: bool = False

    def __post_init__(self):
        if self.temperature_end <= 0:
            raise ValueError("temperature_end must be positive")

    def temperature(self, epoch: int) -> float:
        """Geometric anneal from start to end across the epoch budget."""
        if self.epochs <= 1:
            return self.temperature_end
        frac = epoch / (self.epochs - 1)
        return self.temperature_start * (self.temperature_end / self.temperature_start) ** frac


def extract_batches(
    plans: Iterable[HierPlan], run_ids: Sequence[str] | None = None
) -> dict[str, PlanBatch]:
    """Flatten solved hierarchical plans into one batch per policy family.

    Only steps with feature vectors contribute (actions without a declared
    feature map cannot be learned). Levels are recorded for reporting.
    """
    batches: dict[str, PlanBatch] = {}
    for i, plan in enumerate(plans):
        run_id = run_ids[i] if run_ids else str(i)
        for sub, level in plan.walk():
            rows = [s for s in sub.steps if s.features is not None]
            if not rows:
                continue
            batch = batches.get(sub.family)
            if batch is None:
                batch = PlanBatch(
                    family=sub.family,
                    n_actions=sub.n_actions,
                    feature_width=len(rows[0].features),
                )
                batches[sub.family] = batch
            if run_id not in batch.provenance:
                batch.provenance.append(run_id)
            for step in rows:
                batch.records.append(BatchRecord(
                    action_index=step.action_index,
                    features=np.asarray(step.features, dtype=float),
                    ga_id=sub.action_id,
                    level=level,
                ))
    return batches


# ---------------------------------------------------------------------------
# training loops


def _epoch_minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _check_finite(loss, epoch, family=""):
    if not np.isfinite(loss):
        raise LearningDivergence(f"loss {loss} at epoch {epoch} {family}")


def train_cross_entropy(
    batch: PlanBatch,
    spec: MlpSpec | None = None,
    config: TrainConfig | None = None,
    init_net: Mlp | None = None,
) -> Mlp:
    """Fit the softmax policy network minimizing one-hot cross-entropy."""
    if not batch.records:
        raise PlanningError("empty batch")
    cfg = config or TrainConfig()
    if init_net is not None:
        net = init_net.copy()
    else:
        spec = spec or MlpSpec([batch.feature_width, 32, batch.n_actions])
        net = Mlp(spec)
    x, a = batch.arrays()
    onehot = np.eye(net.n_outputs)[a]
    rng = np.random.default_rng(net.seed + 1)
    best = None
    for epoch in range(cfg.epochs):
        for idx in _epoch_minibatches(len(x), cfg.minibatch_size, rng):
            loss, grads = net.loss_grads_cross_entropy(x[idx], onehot[idx])
            _check_finite(loss, epoch, batch.family)
            net.sgd_step(grads, cfg.learning_rate)
        if cfg.keep_best and (epoch % 10 == 9 or epoch == cfg.epochs - 1):
            full, _ = net.loss_grads_cross_entropy(x, onehot)
            if best is None or full < best[0]:
                best = (full, net.copy())
    if cfg.keep_best and best is not None:
        return best[1]
    return net


def train_gumbel_mse(
    batch: PlanBatch,
    spec: MlpSpec | None = None,
    config: TrainConfig | None = None,
    init_net: Mlp | None = None,
) -> Mlp:
    """Fit a Gumbel-softmax head by regressing the action index through the
    one-hot projector; the temperature anneals per epoch and evaluation runs
    noise-free."""
    if not batch.records:
        raise PlanningError("empty batch")
    cfg = config or TrainConfig()
    if init_net is not None:
        net = init_net.copy()
    else:
        spec = spec or MlpSpec([batch.feature_width, 32, batch.n_actions], head="gumbel")
        net = Mlp(spec)
    x, a = batch.arrays()
    af = a.astype(float)
    rng = np.random.default_rng(net.seed + 1)
    for epoch in range(cfg.epochs):
        temp = cfg.temperature(epoch)
        for idx in _epoch_minibatches(len(x), cfg.minibatch_size, rng):
            uniform = rng.random((len(idx), net.n_outputs))
            noise = -np.log(-np.log(np.clip(uniform, 1e-12, 1.0 - 1e-12)))
            loss, grads = net.loss_grads_gumbel_mse(x[idx], af[idx], noise, temp)
            _check_finite(loss, epoch, batch.family)
            net.sgd_step(grads, cfg.learning_rate)
    return net


@dataclass
class SubgoalClassifier:
    net: Mlp
    threshold: float = 0.5

    def prob(self, features) -> float:
        return float(self.net.probs(np.asarray(features, dtype=float))[0])

    def __call__(self, features) -> bool:
        return self.prob(features) >= self.threshold


def train_subgoal_classifier(
    positive: np.ndarray,
    negative: np.ndarray,
    spec: MlpSpec | None = None,
    config: TrainConfig | None = None,
) -> SubgoalClassifier:
    """Binary sub-goal detector from explicit positive and negative states.

    Class imbalance beyond 100:1 triggers a warning and inverse-frequency
    reweighting instead of silently learning the majority class.
    """
    positive = np.atleast_2d(np.asarray(positive, dtype=float))
    negative = np.atleast_2d(np.asarray(negative, dtype=float))
    if positive.size == 0 or negative.size == 0:
        raise PlanningError("both positive and negative examples are required")
    cfg = config or TrainConfig()
    spec = spec or MlpSpec([positive.shape[1], 16, 1], head="sigmoid")
    net = Mlp(spec)
    x = np.concatenate([positive, negative])
    y = np.concatenate([np.ones(len(positive)), np.zeros(len(negative))])
    weights = np.ones_like(y)
    ratio = max(len(positive), len(negative)) / min(len(positive), len(negative))
    if ratio > IMBALANCE_LIMIT:
        log.warning("subgoal classes imbalanced %.0f:1; reweighting", ratio)
        weights[y == 1.0] = len(y) / (2.0 * len(positive))
        weights[y == 0.0] = len(y) / (2.0 * len(negative))
    rng = np.random.default_rng(net.seed + 1)
    for epoch in range(cfg.epochs):
        for idx in _epoch_minibatches(len(x), cfg.minibatch_size, rng):
            loss, grads = net.loss_grads_sigmoid_bce(x[idx], y[idx], weights[idx])
            _check_finite(loss, epoch, "subgoal")
            net.sgd_step(grads, cfg.learning_rate)
    return SubgoalClassifier(net)


# ---------------------------------------------------------------------------
# batch archive: JSON header line + fixed-width records, append-friendly

ARCHIVE_MAGIC = b"TPB1"


def save_batch(path, batch: PlanBatch) -> None:
    header = {
        "schema": 1,
        "family": batch.family,
        "n_actions": batch.n_actions,
        "feature_width": batch.feature_width,
        "provenance": batch.provenance,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
    append_batch(path, batch.records)


def append_batch(path, records: Iterable[BatchRecord]) -> None:
    with open(path, "rb") as fh:
        if fh.read(4) != ARCHIVE_MAGIC:
            raise PlanningError(f"not a batch archive: {path}")
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size).decode("utf-8"))
    width = header["feature_width"]
    with open(path, "ab") as fh:
        for rec in records:
            if len(rec.features) != width:
                raise PlanningError("record width does not match archive header")
            ga = rec.ga_id.encode("utf-8")
            fh.write(struct.pack("<HiB", len(ga), rec.action_index, rec.level))
            fh.write(ga)
            fh.write(np.ascontiguousarray(rec.features, dtype="<f8").tobytes())


def load_batch(path) -> PlanBatch:
    with open(path, "rb") as fh:
        if fh.read(4) != ARCHIVE_MAGIC:
            raise PlanningError(f"not a batch archive: {path}")
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size).decode("utf-8"))
        batch = PlanBatch(
            family=header["family"],
            n_actions=header["n_actions"],
            feature_width=header["feature_width"],
            provenance=list(header.get("provenance", [])),
        )
        width = header["feature_width"]
        while True:
            head = fh.read(7)
            if not head:
                break
            ga_len, action_index, level = struct.unpack("<HiB", head)
            ga_id = fh.read(ga_len).decode("utf-8")
            feats = np.frombuffer(fh.read(width * 8), dtype="<f8").copy()
            batch.records.append(BatchRecord(action_index, feats, ga_id, level))
    return batch
