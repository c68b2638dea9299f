"""Contrastive reward learning: time-weighted labels and an MSE-fitted reward net.

States from successful trajectories are labelled ``+w(t)``, states from
failed ones ``-w(t)``, and the reward network regresses those labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DemoSet, Outcome, Trajectory
from .errors import DimensionMismatch, InvalidTrajectory, NoData, OptimDiverged
from .nets import Adam, DenseNet, mse_and_grad
from .timeweight import TimeWeightParams, time_weights

TIME_WEIGHTED = "time_weighted"
CONSTANT = "constant"


@dataclass(frozen=True)
class LabeledState:
    observation: np.ndarray
    label: float
    source: Outcome
    t: int
    T: int


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Column-wise storage of labelled states."""

    observations: np.ndarray
    labels: np.ndarray
    success: np.ndarray
    t: np.ndarray
    T: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i) -> LabeledState:
        return LabeledState(
            self.observations[i], float(self.labels[i]),
            Outcome.SUCCESS if self.success[i] else Outcome.FAILURE,
            int(self.t[i]), int(self.T[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def absorbed_length(traj: Trajectory, tol: float = 0.0) -> int:
    """Step at which the trajectory entered its final resting place.

    The trailing run of states within ``tol`` (max-abs distance) of the
    final state counts as one visit, entered at the returned index. With
    ``tol=0`` only exact repeats (an agent absorbed at the goal or in a
    trap) collapse; a small positive ``tol`` also catches an agent pinned
    against a wall while exploration noise jitters it in place. Always at
    least 1 for non-empty trajectories.
    """
    states = traj.states
    n = len(traj)
    k = n
    while k > 0 and np.max(np.abs(states[k - 1] - states[n])) <= tol:
        k -= 1
    return max(k, 1) if n else 0


def label_dataset(demos: DemoSet, params: TimeWeightParams,
                  labels: str = TIME_WEIGHTED, collapse_absorbed: bool = True,
                  include_success: bool = True, include_failure: bool = True,
                  absorb_tol: float = 0.0) -> LabeledDataset:
    """One labelled sample per state visit.

    Each trajectory uses its own length as ``T``, so its final state always
    gets ``|label| = 1``. With ``collapse_absorbed`` the trailing run of a
    resting final state (see ``absorbed_length``) counts as a single visit
    at the step it was entered.
    ``labels="constant"`` gives every state ``+1``/``-1`` (the ablation).
    """
    if len(demos) == 0:
        raise NoData("cannot label an empty demo set")
    obs, lab, succ, ts, Ts = [], [], [], [], []
    for traj in demos:
        if len(traj) == 0:
            raise InvalidTrajectory("empty trajectory in demo set")
        if len(traj) > params.horizon:
            raise InvalidTrajectory(
                f"trajectory length {len(traj)} exceeds horizon {params.horizon}"
            )
        is_success = traj.outcome is Outcome.SUCCESS
        if (is_success and not include_success) or (not is_success and not include_failure):
            continue
        T = absorbed_length(traj, absorb_tol) if collapse_absorbed else len(traj)
        if labels == TIME_WEIGHTED:
            w = time_weights(TimeWeightParams(params.alpha, T))
        elif labels == CONSTANT:
            w = np.ones(T + 1)
        else:
            raise ValueError(f"unknown label scheme {labels!r}")
        sign = 1.0 if is_success else -1.0
        obs.append(traj.states[: T + 1])
        lab.append(sign * w)
        succ.append(np.full(T + 1, is_success))
        ts.append(np.arange(T + 1))
        Ts.append(np.full(T + 1, T))
    if not obs:
        raise NoData("no trajectories left after filtering")
    return LabeledDataset(
        np.concatenate(obs), np.concatenate(lab), np.concatenate(succ),
        np.concatenate(ts), np.concatenate(Ts),
    )


def crl_loss(predictions, labels) -> float:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise DimensionMismatch(f"{p.size} predictions for {y.size} labels")
    if p.size == 0:
        raise NoData("empty prediction set")
    return float(np.mean((p - y) ** 2))


@dataclass
class RewardModel:
    net: DenseNet
    params: TimeWeightParams = field(default_factory=TimeWeightParams)
    lr: float = 1e-3
    training_log: list = field(default_factory=list)
    optimizer: Adam = None
    epochs_done: int = 0

    def __post_init__(self):
        if self.net.layer_sizes[-1] != 1 or self.net.output != "linear":
            raise ValueError("reward net needs a linear scalar head")
        if self.optimizer is None:
            self.optimizer = Adam(self.net.params, lr=self.lr)

    @classmethod
    def create(cls, obs_dim: int, hidden=(128, 128, 128),
               params: TimeWeightParams = None, lr: float = 1e-3, seed=None,
               zero_init: bool = False) -> "RewardModel":
        net = DenseNet([obs_dim, *hidden, 1], "linear", rng=seed, zero_init=zero_init)
        return cls(net, params or TimeWeightParams(), lr)

    @property
    def obs_dim(self) -> int:
        return self.net.layer_sizes[0]

    def score(self, observation) -> float:
        obs = np.asarray(observation, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise DimensionMismatch(f"observation shape {obs.shape} != ({self.obs_dim},)")
        return float(self.net.forward(obs)[0])

    def score_batch(self, observations) -> np.ndarray:
        return self.net.forward(np.atleast_2d(observations))[:, 0]

    __call__ = score_batch


def train_reward(model: RewardModel, data, epochs: int, batch_size: int = 256,
                 seed=None, max_batches_per_epoch: int = None,
                 labels: str = TIME_WEIGHTED) -> RewardModel:
    """Minibatch Adam on the CRL loss; ``data`` is a DemoSet or LabeledDataset.

    Each epoch is a shuffled pass over the labelled states, optionally cut
    to ``max_batches_per_epoch`` minibatches. Mutates and returns ``model``.
    """
    if epochs <= 0:
        return model
    if isinstance(data, DemoSet):
        data = label_dataset(data, model.params, labels=labels)
    if len(data) == 0:
        raise NoData("empty labelled dataset")
    X, y = data.observations, data.labels[:, None]
    if X.shape[1] != model.obs_dim:
        raise DimensionMismatch(f"observations have {X.shape[1]} features, net expects {model.obs_dim}")
    rng = np.random.default_rng(seed)
    n = len(y)
    bs = min(batch_size, n)
    net, opt = model.net, model.optimizer
    for _ in range(epochs):
        order = rng.permutation(n)
        starts = range(0, n, bs)
        if max_batches_per_epoch is not None:
            starts = list(starts)[:max_batches_per_epoch]
        losses = []
        for s in starts:
            idx = order[s: s + bs]
            pred, cache = net.forward_train(X[idx])
            loss, g = mse_and_grad(pred, y[idx])
            if not np.isfinite(loss):
                raise OptimDiverged("reward loss became non-finite")
            grads, _ = net.backward(cache, g)
            opt.step(grads)
            losses.append(loss)
        model.epochs_done += 1
        model.training_log.append((model.epochs_done, float(np.mean(losses))))
    return model


def save_reward(model: RewardModel, path, obs_layout=None) -> None:
    data = {
        "kind": "reward",
        "alpha": model.params.alpha,
        "horizon": model.params.horizon,
        "observation_layout": list(obs_layout) if obs_layout else None,
        "net": model.net.to_dict(),
    }
    Path(path).write_text(json.dumps(data), encoding="utf-8")


def load_reward(path) -> RewardModel:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    net = DenseNet.from_dict(data["net"])
    return RewardModel(net, TimeWeightParams(data["alpha"], data["horizon"]))
