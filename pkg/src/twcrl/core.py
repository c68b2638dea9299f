"""Core domain types: transitions, trajectories, demo sets and tabular MDPs.

Trajectories are stored as arrays: ``states`` holds ``s_0 .. s_T`` (one more
row than there are actions), so a trajectory of length ``T`` has ``T``
transitions and ``T + 1`` states.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import (
    InvalidHorizon,
    InvalidTrajectory,
    MissingGoals,
    ParseError,
    ValidationError,
)

ACTION_BOUND = 1.0


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    env_reward: float
    step_index: int


def _frozen_array(values, ndim) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidTrajectory(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode: ``len(actions) == len(env_rewards) == len(states) - 1``."""

    states: np.ndarray
    actions: np.ndarray
    env_rewards: np.ndarray
    outcome: Outcome
    horizon: int
    episodic_return: float = None  # filled from env_rewards when omitted

    def __post_init__(self):
        states = _frozen_array(self.states, 2)
        actions = np.array(self.actions, dtype=np.float64)
        if actions.size == 0:
            actions = actions.reshape(0, 0)
        actions = _frozen_array(actions, 2)
        rewards = _frozen_array(self.env_rewards, 1)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "env_rewards", rewards)
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.episodic_return is None:
            object.__setattr__(self, "episodic_return", math.fsum(rewards.tolist()))
        else:
            object.__setattr__(self, "episodic_return", float(self.episodic_return))

        n = len(rewards)
        if len(states) != n + 1:
            raise InvalidTrajectory(
                f"{len(states)} states for {n} rewards; expected {n + 1}"
            )
        if len(actions) != n:
            raise InvalidTrajectory(f"{len(actions)} actions for {n} rewards")
        if self.horizon < 1:
            raise InvalidHorizon(f"horizon must be >= 1, got {self.horizon}")
        if n > self.horizon:
            raise InvalidTrajectory(f"length {n} exceeds horizon {self.horizon}")
        if actions.size and np.any(np.abs(actions) > ACTION_BOUND):
            raise ValidationError("action component outside [-1, 1]")
        if not np.all(np.isfinite(states)):
            raise ValidationError("non-finite state value")

    def __len__(self) -> int:
        return len(self.env_rewards)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.outcome == other.outcome
            and self.horizon == other.horizon
            and self.episodic_return == other.episodic_return
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.env_rewards, other.env_rewards)
        )

    __hash__ = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def transitions(self) -> list[Transition]:
        return [
            Transition(
                state=self.states[t],
                action=self.actions[t],
                next_state=self.states[t + 1],
                env_reward=float(self.env_rewards[t]),
                step_index=t,
            )
            for t in range(len(self))
        ]

    def with_outcome(self, outcome: Outcome) -> "Trajectory":
        return Trajectory(
            self.states, self.actions, self.env_rewards, outcome, self.horizon,
            self.episodic_return,
        )


@dataclass(frozen=True)
class TerminalGoal:
    """Success iff the final state satisfies ``predicate``."""

    predicate: Callable[[np.ndarray], bool]


@dataclass(frozen=True)
class ReturnThreshold:
    """Success iff the episodic return is at least ``threshold``."""

    threshold: float


ClassificationRule = Union[TerminalGoal, ReturnThreshold]

# Maze environments pay +1 per in-goal step, so one in-goal step marks success.
DEFAULT_RULE = ReturnThreshold(1.0)


def classify_trajectory(traj: Trajectory, rule: ClassificationRule) -> Outcome:
    if len(traj) == 0:
        raise InvalidTrajectory("cannot classify an empty trajectory")
    if isinstance(rule, TerminalGoal):
        ok = bool(rule.predicate(traj.final_state))
    elif isinstance(rule, ReturnThreshold):
        ok = traj.episodic_return >= rule.threshold
    else:
        raise TypeError(f"unknown classification rule {rule!r}")
    return Outcome.SUCCESS if ok else Outcome.FAILURE


def make_trajectory(states, actions, env_rewards, horizon: int,
                    rule: ClassificationRule) -> Trajectory:
    """Build a trajectory and label it with ``rule``."""
    traj = Trajectory(states, actions, env_rewards, Outcome.FAILURE, horizon)
    return traj.with_outcome(classify_trajectory(traj, rule))


def truncate_trajectory(traj: Trajectory, T: int,
                        rule: ClassificationRule = DEFAULT_RULE) -> Trajectory:
    """Keep the first ``T`` transitions and re-classify the result."""
    if T < 1:
        raise InvalidHorizon(f"truncation horizon must be >= 1, got {T}")
    n = min(len(traj), T)
    horizon = min(traj.horizon, T)
    if n == len(traj) and horizon == traj.horizon:
        return traj
    return make_trajectory(
        traj.states[: n + 1], traj.actions[:n], traj.env_rewards[:n], horizon, rule
    )


@dataclass(frozen=True)
class DemoSet:
    """Ordered collection of trajectories, split into successes and failures.

    Insertion order is preserved so that a saved set is a prefix of the
    saved set after more trajectories are added.
    """

    trajectories: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        for traj in self.trajectories:
            if not isinstance(traj, Trajectory):
                raise TypeError(f"expected Trajectory, got {type(traj).__name__}")

    @classmethod
    def from_split(cls, successes: Sequence[Trajectory] = (),
                   failures: Sequence[Trajectory] = ()) -> "DemoSet":
        for t in successes:
            if t.outcome is not Outcome.SUCCESS:
                raise ValidationError("failure trajectory in the success split")
        for t in failures:
            if t.outcome is not Outcome.FAILURE:
                raise ValidationError("success trajectory in the failure split")
        return cls(tuple(successes) + tuple(failures))

    @property
    def successes(self) -> tuple:
        return tuple(t for t in self.trajectories if t.outcome is Outcome.SUCCESS)

    @property
    def failures(self) -> tuple:
        return tuple(t for t in self.trajectories if t.outcome is Outcome.FAILURE)

    @property
    def n_states(self) -> int:
        return sum(len(t.states) for t in self.trajectories)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __add__(self, other: Union["DemoSet", Iterable[Trajectory]]) -> "DemoSet":
        return DemoSet(self.trajectories + tuple(other))


def _record(traj: Trajectory) -> dict:
    return {
        "states": traj.states.tolist(),
        "actions": traj.actions.tolist(),
        "env_rewards": traj.env_rewards.tolist(),
        "outcome": traj.outcome.value,
        "episodic_return": traj.episodic_return,
        "horizon": traj.horizon,
    }


def dumps_trajectory(traj: Trajectory) -> str:
    # float repr is the shortest string that round-trips bit-exactly
    return json.dumps(_record(traj), separators=(",", ":"))


def save_demos(demos: DemoSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for traj in demos:
            fh.write(dumps_trajectory(traj))
            fh.write("\n")


_KEYS = ("states", "actions", "env_rewards", "outcome", "episodic_return", "horizon")


def parse_trajectory(line: str, lineno: int = None,
                     rule: ClassificationRule = DEFAULT_RULE) -> Trajectory:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
    if not isinstance(rec, dict):
        raise ParseError("record is not a JSON object", lineno)
    missing = [k for k in _KEYS if k not in rec]
    if missing:
        raise ParseError(f"missing fields {missing}", lineno)
    if rec["outcome"] not in ("success", "failure"):
        raise ParseError(f"bad outcome {rec['outcome']!r}", lineno)
    states, actions = rec["states"], rec["actions"]
    if not states:
        raise ParseError("record has no states", lineno)
    if not actions:
        actions = np.zeros((0, 0))
    try:
        traj = Trajectory(
            states, actions, rec["env_rewards"], rec["outcome"],
            int(rec["horizon"]), float(rec["episodic_return"]),
        )
    except ValidationError as exc:
        raise ValidationError(f"line {lineno}: {exc}") from None
    except (InvalidTrajectory, InvalidHorizon, TypeError, ValueError) as exc:
        raise ParseError(str(exc), lineno) from None

    if not math.isclose(traj.episodic_return, math.fsum(traj.env_rewards.tolist()),
                        rel_tol=1e-9, abs_tol=1e-9):
        raise ValidationError(f"line {lineno}: episodic_return != sum(env_rewards)")
    if len(traj) and classify_trajectory(traj, rule) is not traj.outcome:
        raise ValidationError(
            f"line {lineno}: stored outcome {traj.outcome.value!r} disagrees "
            "with the classification rule"
        )
    return traj


def load_demos(path, rule: ClassificationRule = DEFAULT_RULE) -> DemoSet:
    """Read a JSON-lines demo file, re-deriving every outcome with ``rule``."""
    trajs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                trajs.append(parse_trajectory(line, lineno, rule))
    return DemoSet(tuple(trajs))


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite MDP; ``transitions[s, a]`` is the next-state distribution."""

    transitions: np.ndarray
    goal_states: frozenset = field(default_factory=frozenset)
    initial_dist: np.ndarray = None

    def __post_init__(self):
        P = np.array(self.transitions, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValidationError(f"transitions must have shape (S, A, S), got {P.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > 1e-9):
            raise ValidationError("each transition row must be a probability vector")
        P.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        goals = frozenset(int(g) for g in self.goal_states)
        if any(g < 0 or g >= P.shape[0] for g in goals):
            raise ValidationError("goal state index out of range")
        object.__setattr__(self, "goal_states", goals)
        mu = self.initial_dist
        if mu is None:
            mu = np.full(P.shape[0], 1.0 / P.shape[0])
        mu = np.array(mu, dtype=np.float64)
        if mu.shape != (P.shape[0],) or abs(mu.sum() - 1.0) > 1e-9 or np.any(mu < 0):
            raise ValidationError("initial_dist must be a probability vector over states")
        mu.setflags(write=False)
        object.__setattr__(self, "initial_dist", mu)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def require_goals(self):
        if not self.goal_states:
            raise MissingGoals("trap analysis needs a non-empty goal set")

    def to_json(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "goals": sorted(self.goal_states),
            "transitions": self.transitions.tolist(),
            "initial_dist": self.initial_dist.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "TabularMDP":
        try:
            P = np.array(data["transitions"], dtype=np.float64)
            n_states, n_actions = int(data["n_states"]), int(data["n_actions"])
            goals = data.get("goals", [])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed MDP description: {exc}") from None
        if P.shape != (n_states, n_actions, n_states):
            raise ValidationError(
                f"transitions shape {P.shape} != ({n_states}, {n_actions}, {n_states})"
            )
        return cls(P, frozenset(goals), data.get("initial_dist"))

    @classmethod
    def load(cls, path) -> "TabularMDP":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", exc.lineno) from None
        return cls.from_json(data)
