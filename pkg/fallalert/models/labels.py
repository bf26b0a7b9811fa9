"""
Enumerations shared across the package: activity labels, body locations, fall kinds,
coordinate systems, classifier families, detector ids & CLI exit codes.
"""

from enum import Enum, IntEnum


class ActivityLabel(Enum):
    """The closed set of recorded daily-living activities."""

    WALK = "WALK"
    WALK_UP = "WALK_UP"
    WALK_DOWN = "WALK_DOWN"
    JUMPING_JACK = "JUMPING_JACK"
    JUMP = "JUMP"
    RUN = "RUN"
    SIT = "SIT"
    SIT_UP = "SIT_UP"
    STAND = "STAND"
    UP = "UP"
    DOWN = "DOWN"


class BodyLocation(Enum):
    """Sensor placements on the body."""

    RIGHT_ARM = "RIGHT_ARM"
    LEFT_CHEST = "LEFT_CHEST"
    LEFT_WRIST = "LEFT_WRIST"
    LEFT_FOOT = "LEFT_FOOT"


class FallKind(Enum):
    """Fall event kinds reported by the detectors."""

    FALL = "FALL"
    FALL_KNEES_FIRST = "FALL_KNEES_FIRST"


class CoordinateSystem(Enum):
    CARTESIAN = "CARTESIAN"
    SPHERICAL = "SPHERICAL"


class ClassifierFamily(Enum):
    """Activity classifier families. SVM is not implemented (see DESIGN.md)."""

    DECISION_TREE = "DECISION_TREE"
    KNN = "KNN"
    NAIVE_BAYES = "NAIVE_BAYES"
    GBT = "GBT"


class DetectorKind(Enum):
    """Algorithm ids of the fall detectors."""

    TWO_PHASE = "2-phase"
    THREE_PHASE = "3-phase"
    DTW = "dtw"


class SinkKind(Enum):
    STDOUT = "STDOUT"
    WEBHOOK = "WEBHOOK"


class ExitCode(IntEnum):
    """Process exit codes - nonzero values enumerate failure classes."""

    OK = 0
    PARTIAL = 1
    USAGE = 2
    DATA = 3
    NETWORK = 4


# Seated postures produce falls too close to the floor to pass the impact threshold.
SEATED_ACTIVITIES = (ActivityLabel.SIT, ActivityLabel.SIT_UP, ActivityLabel.DOWN)


def parse_label(value):
    """Parses a recording label, which is either an ActivityLabel or a FallKind tag.

    Args:
        value: label text (or an already parsed label)

    Returns:
        ActivityLabel or FallKind
    """
    if isinstance(value, (ActivityLabel, FallKind)):
        return value

    text = str(value).strip().upper()
    try:
        return ActivityLabel(text)
    except ValueError:
        return FallKind(text)


def activity_order(labels):
    """Sorts activity labels into their declaration order (the canonical label order)."""
    order = list(ActivityLabel)
    return sorted(set(labels), key=order.index)
