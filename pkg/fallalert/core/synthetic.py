"""
Seeded synthetic recordings for desk-scale runs: periodic activity templates, fall &
fall-to-knees-first templates, scripted activity-then-fall sequences and a full corpus.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from fallalert.models.labels import SEATED_ACTIVITIES, ActivityLabel, BodyLocation, FallKind, parse_label
from fallalert.models.recording import DEFAULT_RATE_HZ, GRAVITY, Dataset, Recording

TemplateKind = Union[ActivityLabel, FallKind]
TEMPLATE_ORDER = list(ActivityLabel) + list(FallKind)

# Samples of quiet standing before the fall starts, and the shortest fall recording
FALL_LEAD = 60
FALL_MIN_SAMPLES = 100


@dataclass(frozen=True)
class ActivityTemplate:
    """Periodic motion model of one activity (units: g for acceleration, °/s for rotation)."""

    posture: Tuple[float, float, float]
    accel_amp: Tuple[float, float, float]
    freq_hz: float
    phases: Tuple[float, float, float]
    gyro_amp: Tuple[float, float, float]
    accel_noise: float = 0.02
    gyro_noise: float = 2.0


PI = np.pi

# Upright posture puts gravity on +y. Oscillation amplitudes stay small enough that no
# activity dips below ~0.4 g or rises above ~1.7 g.
ACTIVITY_TEMPLATES = {
    ActivityLabel.WALK: ActivityTemplate((0.0, 1.0, 0.0), (0.22, 0.30, 0.12), 1.8, (0.0, PI / 2, PI / 4), (40, 20, 30)),
    ActivityLabel.WALK_UP: ActivityTemplate((0.18, 0.98, 0.0), (0.15, 0.38, 0.18), 1.5, (0.0, PI, PI / 2), (55, 25, 20)),
    ActivityLabel.WALK_DOWN: ActivityTemplate((-0.18, 0.98, 0.0), (0.28, 0.42, 0.10), 2.0, (PI / 2, 0.0, PI), (45, 35, 25)),
    ActivityLabel.JUMPING_JACK: ActivityTemplate((0.0, 1.0, 0.0), (0.45, 0.30, 0.08), 2.2, (0.0, PI / 3, 0.0), (150, 40, 30)),
    ActivityLabel.JUMP: ActivityTemplate((0.0, 1.0, 0.05), (0.06, 0.50, 0.06), 1.2, (0.0, 0.0, PI / 2), (20, 20, 10)),
    ActivityLabel.RUN: ActivityTemplate((0.25, 0.97, 0.0), (0.30, 0.45, 0.25), 2.8, (PI / 4, 0.0, PI), (90, 60, 50), 0.03, 4.0),
    ActivityLabel.SIT: ActivityTemplate((0.5, 0.87, 0.0), (0.01, 0.01, 0.01), 0.3, (0.0, 0.0, 0.0), (2, 2, 2), 0.005, 1.0),
    ActivityLabel.SIT_UP: ActivityTemplate((0.0, 0.35, 0.94), (0.10, 0.30, 0.20), 0.5, (0.0, PI / 2, PI), (40, 10, 10)),
    ActivityLabel.STAND: ActivityTemplate((0.0, 1.0, 0.0), (0.01, 0.01, 0.01), 0.3, (0.0, 0.0, 0.0), (2, 2, 2), 0.005, 1.0),
    ActivityLabel.UP: ActivityTemplate((0.3, 0.95, 0.0), (0.20, 0.15, 0.05), 0.6, (0.0, PI / 2, 0.0), (30, 10, 5)),
    ActivityLabel.DOWN: ActivityTemplate((0.42, 0.91, 0.0), (0.15, 0.20, 0.05), 0.5, (PI, 0.0, PI / 2), (25, 10, 10)),
}

# Sensor orientation (axis permutation / sign) and motion gain per body location
LOCATION_FRAMES = {
    BodyLocation.LEFT_CHEST: (np.eye(3), 1.0),
    BodyLocation.RIGHT_ARM: (np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), 1.1),
    BodyLocation.LEFT_WRIST: (np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]), 1.2),
    BodyLocation.LEFT_FOOT: (np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]), 0.9),
}

_R2 = np.sqrt(0.5)

# Lying posture (gravity direction after impact) per fall direction
FALL_DIRECTIONS = {
    FallKind.FALL: (
        (0.0, 0.0, 1.0),
        (0.0, 0.0, -1.0),
        (1.0, 0.0, 0.0),
        (-1.0, 0.0, 0.0),
        (_R2, 0.0, _R2),
        (-_R2, 0.0, _R2),
        (_R2, 0.0, -_R2),
        (-_R2, 0.0, -_R2),
    ),
    FallKind.FALL_KNEES_FIRST: (
        (0.0, 0.0, 1.0),
        (1.0, 0.0, 0.0),
        (-1.0, 0.0, 0.0),
        (_R2, 0.0, _R2),
        (-_R2, 0.0, _R2),
    ),
}

# (dip minimum, impact peak) centres in g
FALL_SHAPES = {
    FallKind.FALL: (0.12, 3.2),
    FallKind.FALL_KNEES_FIRST: (0.25, 2.6),
}
SEATED_FALL_SHAPE = (0.7, 1.4)

REBOUND = (0.75, 1.3, 0.85, 1.15, 0.95, 1.05)


def parse_template_kind(kind) -> TemplateKind:
    try:
        return parse_label(kind)
    except ValueError:
        raise ValueError(f"Unknown synthetic template kind {kind!r}.")


def _rng(seed: int, kind: TemplateKind, location: BodyLocation):
    return np.random.default_rng([int(seed), TEMPLATE_ORDER.index(kind), list(BodyLocation).index(location)])


def _unit(vector):
    vector = np.asarray(vector, dtype=float)
    return vector / np.linalg.norm(vector)


def _timestamps(n: int, rate_hz: float) -> np.ndarray:
    return np.arange(n) / rate_hz


def _assemble(t, accel_g, gyro, location):
    """Rotates body-frame signals into the sensor frame of a location and builds the (n, 7) matrix."""
    rotation, _ = LOCATION_FRAMES[location]
    accel = accel_g @ rotation.T * GRAVITY
    gyro = gyro @ rotation.T
    return np.column_stack([t, accel, gyro])


def activity_signals(kind: ActivityLabel, n: int, rng, rate_hz: float, gain: float = 1.0):
    """Body-frame acceleration (g) & rotation (°/s) of n samples of a periodic activity."""
    template = ACTIVITY_TEMPLATES[kind]
    t = _timestamps(n, rate_hz)

    freq = template.freq_hz * rng.uniform(0.93, 1.07)
    amp = np.asarray(template.accel_amp) * rng.uniform(0.9, 1.1) * gain
    gyro_amp = np.asarray(template.gyro_amp) * rng.uniform(0.9, 1.1) * gain
    offset = rng.uniform(0.0, 2.0 * PI)
    posture = _unit(np.asarray(template.posture) + rng.normal(0.0, 0.02, 3))

    arg = 2.0 * PI * freq * t[:, None] + offset + np.asarray(template.phases)[None, :]
    accel = posture[None, :] + amp[None, :] * np.sin(arg) + rng.normal(0.0, template.accel_noise, (n, 3))
    gyro = gyro_amp[None, :] * np.cos(arg) + rng.normal(0.0, template.gyro_noise, (n, 3))
    return accel, gyro


def fall_signals(kind: FallKind, n: int, rng, seated: bool = False, lead: int = 0, start_posture=(0.0, 1.0, 0.0)):
    """Body-frame acceleration & rotation of a fall: optional quiet lead, free-fall dip,
    impact spike, rebound and lying still for the remaining samples.

    Seated falls (from SIT, SIT_UP or DOWN) barely leave the chair's height and produce a
    shallow dip & weak impact.
    """
    dip_min, peak = SEATED_FALL_SHAPE if seated else FALL_SHAPES[kind]
    dip_min += rng.uniform(-0.03, 0.03)
    peak += rng.uniform(-0.25, 0.25)

    directions = FALL_DIRECTIONS[kind]
    lying = _unit(directions[int(rng.integers(len(directions)))])
    upright = _unit(start_posture)

    ramp = [1.0 - (1.0 - dip_min) * k / 4 for k in range(1, 5)]
    magnitude = [1.0] * lead + ramp + [dip_min] * 8 + [0.55 * peak, peak, 0.6 * peak] + list(REBOUND)
    impact = lead + 12
    if len(magnitude) > n:
        raise ValueError(f"A fall needs at least {len(magnitude)} samples - got {n}.")
    magnitude = np.array(magnitude + [1.0] * (n - len(magnitude)))

    direction = np.where(np.arange(n)[:, None] < impact, upright[None, :], lying[None, :])
    accel = magnitude[:, None] * direction + rng.normal(0.0, 0.01, (n, 3))

    gyro = rng.normal(0.0, 1.5, (n, 3))
    spin = np.cross(upright, lying)
    spin = spin / np.linalg.norm(spin) if np.linalg.norm(spin) > 0 else np.array([1.0, 0.0, 0.0])
    gyro[lead + 4 : impact + 3] += spin * rng.uniform(150.0, 250.0)
    return accel, gyro


def generate_synthetic(
    kind,
    duration_s: float,
    seed: int,
    location: BodyLocation = BodyLocation.LEFT_CHEST,
    subject_id: str = "synthetic",
    session: str = "1",
    sample_rate_hz: float = DEFAULT_RATE_HZ,
) -> Recording:
    """Generates a seeded synthetic recording of an activity or fall template.

    Args:
        kind: ActivityLabel, FallKind or their names
        duration_s: recording length in seconds
        seed: integer seed - (kind, location, seed) fully determine the output
        location: sensor placement (rotates the sensor frame and scales motion)

    Returns:
        Recording: labelled with kind
    """
    kind = parse_template_kind(kind)
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive - got {duration_s}.")

    n = int(round(duration_s * sample_rate_hz))
    rng = _rng(seed, kind, location)
    _, gain = LOCATION_FRAMES[location]

    if isinstance(kind, FallKind):
        if n < FALL_MIN_SAMPLES:
            raise ValueError(f"Fall templates need at least {FALL_MIN_SAMPLES / sample_rate_hz:.1f} s.")
        accel, gyro = fall_signals(kind, n, rng, lead=min(FALL_LEAD, n // 4))
    else:
        accel, gyro = activity_signals(kind, max(n, 1), rng, sample_rate_hz, gain)

    values = _assemble(_timestamps(len(accel), sample_rate_hz), accel, gyro, location)
    return Recording(subject_id, location, kind, values, session=session, sample_rate_hz=sample_rate_hz)


def scenario_recording(
    activity: ActivityLabel,
    fall_kind: FallKind,
    activity_s: float,
    fall_s: float,
    seed: int,
    location: BodyLocation = BodyLocation.LEFT_CHEST,
    subject_id: str = "scenario",
    session: str = "1",
    sample_rate_hz: float = DEFAULT_RATE_HZ,
) -> Recording:
    """An activity followed by a fall starting at activity_s - a scripted prior-fall trial."""
    rng = np.random.default_rng([int(seed), TEMPLATE_ORDER.index(activity), TEMPLATE_ORDER.index(fall_kind)])
    _, gain = LOCATION_FRAMES[location]

    n_activity = int(round(activity_s * sample_rate_hz))
    n_fall = int(round(fall_s * sample_rate_hz))
    accel_a, gyro_a = activity_signals(activity, n_activity, rng, sample_rate_hz, gain)
    posture = ACTIVITY_TEMPLATES[activity].posture
    accel_f, gyro_f = fall_signals(fall_kind, n_fall, rng, seated=activity in SEATED_ACTIVITIES, start_posture=posture)

    accel = np.vstack([accel_a, accel_f])
    gyro = np.vstack([gyro_a, gyro_f])
    values = _assemble(_timestamps(len(accel), sample_rate_hz), accel, gyro, location)
    return Recording(subject_id, location, activity, values, session=session, sample_rate_hz=sample_rate_hz)


def inject_fall(recording: Recording, fall_kind: FallKind, fall_at_s: float, seed: int, fall_s: float = 4.0) -> Recording:
    """Cuts a recording at fall_at_s and appends a synthetic fall.

    The fall starts from the recording's own posture (mean gravity direction of the last
    second) and is seated when the recording's label is a seated activity.
    """
    rate = recording.sample_rate_hz
    n_at = int(round(fall_at_s * rate))
    if not 0 < n_at <= len(recording):
        raise ValueError(f"Fall injection point {fall_at_s}s is outside {recording.recording_id} ({len(recording) / rate:.2f}s).")

    prefix = recording.values[:n_at]
    posture = prefix[-int(rate) :, 1:4].mean(axis=0)
    if not np.linalg.norm(posture) > 0:
        posture = np.array([0.0, 1.0, 0.0])

    label_idx = TEMPLATE_ORDER.index(recording.label)
    rng = np.random.default_rng([int(seed), label_idx, TEMPLATE_ORDER.index(fall_kind), n_at])
    accel_f, gyro_f = fall_signals(
        fall_kind, int(round(fall_s * rate)), rng, seated=recording.label in SEATED_ACTIVITIES, start_posture=posture
    )

    t = prefix[-1, 0] + (np.arange(len(accel_f)) + 1) / rate
    fall = np.column_stack([t, accel_f * GRAVITY, gyro_f])
    return Recording(
        recording.subject_id,
        recording.location,
        recording.label,
        np.vstack([prefix, fall]),
        session=recording.session,
        sample_rate_hz=rate,
    )


def _recording_seed(seed: int, *parts: int) -> int:
    return int(np.random.SeedSequence([int(seed), *parts]).generate_state(1)[0])


def synthetic_corpus(
    seed: int,
    subjects: int = 4,
    sessions: int = 2,
    duration_s: float = 12.0,
    falls_per_subject: int = 8,
    knee_falls_per_subject: int = 5,
    fall_duration_s: float = 4.0,
    fall_location: BodyLocation = BodyLocation.LEFT_CHEST,
    sample_rate_hz: float = DEFAULT_RATE_HZ,
) -> Dataset:
    """Every activity at every location for each subject & session, plus chest-worn falls.

    Subjects are named S01, S02, ...; fall recordings use the session column to number trials.
    """
    recordings = []
    locations = list(BodyLocation)
    for s in range(1, subjects + 1):
        subject = f"S{s:02d}"
        for location in locations:
            for activity in ActivityLabel:
                for session in range(1, sessions + 1):
                    rec_seed = _recording_seed(seed, s, locations.index(location), TEMPLATE_ORDER.index(activity), session)
                    recordings.append(
                        generate_synthetic(activity, duration_s, rec_seed, location, subject, str(session), sample_rate_hz)
                    )

        for kind, count in ((FallKind.FALL, falls_per_subject), (FallKind.FALL_KNEES_FIRST, knee_falls_per_subject)):
            for trial in range(1, count + 1):
                rec_seed = _recording_seed(seed, s, TEMPLATE_ORDER.index(kind), trial)
                recordings.append(
                    generate_synthetic(kind, fall_duration_s, rec_seed, fall_location, subject, str(trial), sample_rate_hz)
                )

    logging.info("Generated a synthetic corpus of %s recording(s) for %s subject(s) (seed %s).", len(recordings), subjects, seed)
    return Dataset(recordings, provenance=f"synthetic:seed={seed}")
