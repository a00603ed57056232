"""Kinesthetic in-hand object recognition with a simulated underactuated hand."""

from .core import (
    ClassProbabilities,
    Dataset,
    Episode,
    EpisodeMeta,
    FeatureSet,
    KinestheticState,
    LabeledSequence,
    argmax_class,
    select_features,
)
from .errors import (
    GraspFailed,
    GraspLost,
    KinegraspError,
    MalformedDistribution,
    NoInference,
    NonConvergent,
    WindowTooLong,
)
from .shapes import (
    BoundaryPolyline,
    ShapeCategory,
    ShapeKind,
    ShapeSpec,
    category_sample,
    make_shape,
    support_and_normal,
)

__version__ = "0.1.0"
