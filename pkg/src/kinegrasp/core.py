"""Shared domain types: actuator observations, episodes, feature selection, labels.

The observable state of the hand is purely kinesthetic: two actuator angles,
two actuator torques, and optionally the echo of the action applied over the
step that ended at the sample. Object pose is deliberately absent here; it is
simulator-internal ground truth and never observable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import MalformedDistribution

PROB_SUM_TOL = 1e-9
SAMPLE_PERIOD_S = 0.1  # 10 Hz actuator stream

VALID_ACTIONS = (-1, 0, 1)


class FeatureSet(enum.Enum):
    """Which kinesthetic channels feed the classifier.

    Fixed channel order: torques first, then angles, then actions.
    """

    TORQUES_ONLY = "torques"
    TORQUES_ACTIONS = "torques_actions"
    TORQUES_ANGLES = "torques_angles"
    TORQUES_ANGLES_ACTIONS = "torques_angles_actions"

    def dimension(self) -> int:
        return _FEATURE_DIMS[self]

    def uses_angles(self) -> bool:
        return self in (FeatureSet.TORQUES_ANGLES, FeatureSet.TORQUES_ANGLES_ACTIONS)

    def uses_actions(self) -> bool:
        return self in (FeatureSet.TORQUES_ACTIONS, FeatureSet.TORQUES_ANGLES_ACTIONS)

    def continuous_mask(self) -> np.ndarray:
        """Boolean mask over feature columns: True for torque/angle channels.

        Action channels are discrete and are exempt from baseline subtraction,
        filtering and standardization.
        """
        mask = [True, True]
        if self.uses_angles():
            mask += [True, True]
        if self.uses_actions():
            mask += [False, False]
        return np.array(mask, dtype=bool)


_FEATURE_DIMS = {
    FeatureSet.TORQUES_ONLY: 2,
    FeatureSet.TORQUES_ACTIONS: 4,
    FeatureSet.TORQUES_ANGLES: 4,
    FeatureSet.TORQUES_ANGLES_ACTIONS: 6,
}


@dataclass(frozen=True)
class KinestheticState:
    """One observed actuator sample (angles in degrees, torques in simulator units)."""

    motor_angle_left: float
    motor_angle_right: float
    motor_torque_left: float
    motor_torque_right: float
    action_left: int
    action_right: int
    timestamp_index: int

    def __post_init__(self):
        if self.action_left not in VALID_ACTIONS or self.action_right not in VALID_ACTIONS:
            raise ValueError(
                f"actions must be in {VALID_ACTIONS}, got "
                f"({self.action_left}, {self.action_right})"
            )
        for name in ("motor_angle_left", "motor_angle_right",
                     "motor_torque_left", "motor_torque_right"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def select_features(state: KinestheticState, fs: FeatureSet) -> np.ndarray:
    """Project a state onto the chosen channels, in canonical column order.

    Order is always [torque_l, torque_r], then [angle_l, angle_r] when angles
    are included, then [action_l, action_r] when actions are included. Entries
    are copied bit-for-bit from the state fields.
    """
    feats = [state.motor_torque_left, state.motor_torque_right]
    if fs.uses_angles():
        feats += [state.motor_angle_left, state.motor_angle_right]
    if fs.uses_actions():
        feats += [float(state.action_left), float(state.action_right)]
    return np.array(feats, dtype=np.float64)


@dataclass(frozen=True)
class EpisodeMeta:
    """Provenance of one simulated trial."""

    seed: int
    shape_id: str = ""
    scale: float = 1.0
    dropped_early: bool = False
    drop_step: int = -1

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "shape_id": self.shape_id,
            "scale": self.scale,
            "dropped_early": self.dropped_early,
            "drop_step": self.drop_step,
        }

    @staticmethod
    def from_json(d: dict) -> "EpisodeMeta":
        return EpisodeMeta(
            seed=int(d["seed"]),
            shape_id=str(d.get("shape_id", "")),
            scale=float(d.get("scale", 1.0)),
            dropped_early=bool(d.get("dropped_early", False)),
            drop_step=int(d.get("drop_step", -1)),
        )


@dataclass(frozen=True)
class Episode:
    """Ordered state sequence of one grasp-manipulate-drop trial."""

    states: tuple[KinestheticState, ...]
    label: int
    meta: EpisodeMeta = EpisodeMeta(seed=0)

    def __post_init__(self):
        if len(self.states) < 1:
            raise ValueError("episode must contain at least one state")
        ts = [s.timestamp_index for s in self.states]
        if any(b - a != 1 for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must increase strictly by 1")

    def __len__(self) -> int:
        return len(self.states)

    def feature_matrix(self, fs: FeatureSet) -> np.ndarray:
        """(z, n) array of the selected channels."""
        return np.stack([select_features(s, fs) for s in self.states])


@dataclass(frozen=True)
class LabeledSequence:
    """A length-w window of preprocessed features with its episode label."""

    window: np.ndarray  # (w, n), read-only
    label: int

    def __post_init__(self):
        if self.window.ndim != 2:
            raise ValueError("window must be a (w, n) matrix")
        self.window.setflags(write=False)


@dataclass(frozen=True)
class ClassProbabilities:
    """Distribution over the m candidate classes."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise MalformedDistribution("probability vector must be non-empty 1-D")
        if np.any(p < -PROB_SUM_TOL) or np.any(p > 1 + PROB_SUM_TOL):
            raise MalformedDistribution("components must lie in [0, 1]")
        if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
            raise MalformedDistribution(f"components sum to {p.sum()}, expected 1")
        object.__setattr__(self, "probs", p)
        p.setflags(write=False)

    def __len__(self) -> int:
        return len(self.probs)


def argmax_class(p: ClassProbabilities | np.ndarray | Sequence[float]) -> int:
    """Index of the maximal component; ties resolve to the lowest index."""
    v = p.probs if isinstance(p, ClassProbabilities) else np.asarray(p, dtype=np.float64)
    if v.size == 0:
        raise MalformedDistribution("cannot take argmax of an empty vector")
    return int(np.argmax(v))


@dataclass(frozen=True)
class Dataset:
    """Episodes plus the label taxonomy and the feature channels in use."""

    episodes: tuple[Episode, ...]
    class_names: tuple[str, ...]
    feature_set: FeatureSet = FeatureSet.TORQUES_ANGLES

    def __post_init__(self):
        m = len(self.class_names)
        for ep in self.episodes:
            if not (0 <= ep.label < m):
                raise ValueError(f"episode label {ep.label} out of range for {m} classes")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.episodes)
