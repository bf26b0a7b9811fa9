"""
All deterministic signal math: windowing, spherical conversion, window features,
G-force, fall cropping & Butterworth low-pass filtering.
"""

import math
from typing import List, Optional, Sequence

import numpy as np
from scipy import signal as sp_signal

from fallalert.models.labels import ActivityLabel, CoordinateSystem
from fallalert.models.recording import GRAVITY, Recording, Sample
from fallalert.models.window import (
    CORRELATION_PAIRS,
    CROP_SIZE,
    DEFAULT_WINDOW_LEN,
    CroppedFall,
    FeatureVector,
    GForceSeries,
    SphericalTriple,
    Window,
)

DEFAULT_ORDER = 2
DEFAULT_CUTOFF_HZ = 5.0

# crop_fall: samples counted past the first below-average value & the max reach from the peak
CROP_TAIL = 10
CROP_REACH = 15


def segment_windows(recording: Recording, window_len: int = DEFAULT_WINDOW_LEN, stride: Optional[int] = None) -> List[Window]:
    """Cuts a recording into fixed-length windows at offsets 0, stride, 2*stride, ...

    Args:
        recording: the source Recording
        window_len: samples per window (100 = 2 s at 50 Hz)
        stride: offset between windows (defaults to window_len, non-overlapping)

    Returns:
        windows: list of Window - the trailing partial window is dropped
    """
    stride = window_len if stride is None else stride
    if window_len < 2:
        raise ValueError(f"window_len must be at least 2 - got {window_len}.")
    if stride < 1:
        raise ValueError(f"stride must be at least 1 - got {stride}.")

    label = recording.label if isinstance(recording.label, ActivityLabel) else None
    channels = recording.channels
    return [
        Window(
            values=channels[start : start + window_len],
            recording_id=recording.recording_id,
            start=start,
            label=label,
            subject_id=recording.subject_id,
        )
        for start in range(0, len(channels) - window_len + 1, stride)
    ]


def to_spherical(x: float, y: float, z: float) -> SphericalTriple:
    """Converts a Cartesian vector to (r, theta, phi).

    theta = arccos(z / r) is evaluated as atan2(hypot(x, y), z) - the same angle, without the
    precision loss of arccos near the poles. phi is the quadrant-aware azimuth in (-pi, pi].
    Conventions: theta = 0 when r = 0 and phi = 0 when x = y = 0.
    """
    r = math.hypot(x, y, z)
    rho = math.hypot(x, y)
    theta = math.atan2(rho, z) if r > 0 else 0.0
    if rho == 0:
        phi = 0.0
    else:
        phi = math.atan2(y, x)
        phi = math.pi if phi == -math.pi else phi
    return SphericalTriple(r, theta, phi)


def spherical_columns(xyz: np.ndarray) -> np.ndarray:
    """Vectorised to_spherical over an (n, 3) matrix - returns an (n, 3) matrix of r, theta, phi."""
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    rho = np.hypot(x, y)
    r = np.hypot(rho, z)
    theta = np.where(r > 0, np.arctan2(rho, z), 0.0)
    phi = np.where(rho > 0, np.arctan2(y, x), 0.0)
    phi = np.where(phi == -np.pi, np.pi, phi)
    return np.column_stack([r, theta, phi])


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample Pearson correlation of two equal-length sequences.

    A sequence with zero variance (all values equal) has no defined correlation -
    0.0 is returned instead of NaN.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"pearson needs equal lengths - got {a.shape} and {b.shape}.")
    if a.size < 2:
        raise ValueError("pearson needs at least 2 values per sequence.")

    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0

    da = a - a.mean()
    db = b - b.mean()
    r = np.sum(da * db) / (np.sqrt(np.sum(da * da)) * np.sqrt(np.sum(db * db)))
    return float(np.clip(r, -1.0, 1.0))


def window_channels(window: Window, system: CoordinateSystem) -> np.ndarray:
    """The six channels of a window in the requested coordinate system."""
    if system == CoordinateSystem.CARTESIAN:
        return window.values
    accel = spherical_columns(window.values[:, 0:3])
    gyro = spherical_columns(window.values[:, 3:6])
    return np.hstack([accel, gyro])


def extract_features(window: Window, system: CoordinateSystem = CoordinateSystem.CARTESIAN) -> FeatureVector:
    """Computes per-channel mean & standard deviation plus within-sensor Pearson correlations.

    Args:
        window: the Window to describe
        system: CARTESIAN, or SPHERICAL to convert both sensors to (r, theta, phi) first

    Returns:
        FeatureVector: 6 means, 6 (population) standard deviations, 6 correlations
    """
    channels = window_channels(window, system)

    means = channels.mean(axis=0)
    stds = channels.std(axis=0)
    # Constant channels - keep rounding noise out of the standard deviation
    stds[np.ptp(channels, axis=0) == 0] = 0.0
    corrs = [pearson(channels[:, i], channels[:, j]) for i, j in CORRELATION_PAIRS]

    return FeatureVector(np.concatenate([means, stds, corrs]), system=system)


def features_matrix(windows: Sequence[Window], system: CoordinateSystem) -> np.ndarray:
    """Stacks the feature vectors of many windows into an (n, 18) matrix."""
    if not windows:
        return np.empty((0, 18))
    return np.vstack([extract_features(w, system).values for w in windows])


def gforce(sample: Sample) -> float:
    """Total acceleration of one sample divided by 9.8."""
    return math.hypot(sample.ax, sample.ay, sample.az) / GRAVITY


def gforce_series(recording: Recording) -> GForceSeries:
    """The G-force of every sample of a recording."""
    values = np.linalg.norm(recording.accel, axis=1) / GRAVITY
    return GForceSeries(values, rate_hz=recording.sample_rate_hz)


def crop_bounds(values: np.ndarray):
    """Returns (left, right, mark) of the crop_fall rule - right is inclusive."""
    n = len(values)
    mark = int(np.argmax(values))
    below = np.flatnonzero(values[mark:] < values.mean())

    ends = [mark + CROP_REACH, n - 1]
    if below.size:
        ends.append(mark + int(below[0]) + CROP_TAIL)
    right = min(ends)
    left = right - (CROP_SIZE - 1)

    if left < 0:
        left, right = 0, CROP_SIZE - 1
    return left, right, mark


def crop_fall(series: GForceSeries) -> CroppedFall:
    """Crops a G-force series to CROP_SIZE values around its highest value.

    The highest value (first occurrence) is the mark point. The right endpoint is the first
    value below the series mean plus CROP_TAIL values, or mark + CROP_REACH, whichever comes
    first (and never past the end). The left endpoint is CROP_SIZE - 1 values before it,
    clamped to the start of the series.
    """
    values = np.asarray(series.values if isinstance(series, GForceSeries) else series, dtype=float)
    if len(values) < CROP_SIZE:
        raise ValueError(f"crop_fall needs at least {CROP_SIZE} values - got {len(values)}.")

    left, right, mark = crop_bounds(values)
    return CroppedFall(values[left : right + 1], mark_index=mark, start=left)


def butterworth_lowpass(series: GForceSeries, order: int = DEFAULT_ORDER, cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> GForceSeries:
    """Causal (forward only) Butterworth low-pass filter starting from a zero state.

    Args:
        series: GForceSeries to filter
        order: filter order, 1 to 4
        cutoff_hz: -3 dB frequency, strictly between 0 and the Nyquist frequency

    Returns:
        GForceSeries: filtered values, same length & rate
    """
    nyquist = series.rate_hz / 2.0
    if order not in (1, 2, 3, 4):
        raise ValueError(f"Butterworth order must be 1 to 4 - got {order}.")
    if not 0 < cutoff_hz < nyquist:
        raise ValueError(f"Cutoff {cutoff_hz} Hz must be between 0 and the Nyquist frequency {nyquist} Hz.")

    b, a = sp_signal.butter(order, cutoff_hz, btype="low", fs=series.rate_hz)
    return GForceSeries(sp_signal.lfilter(b, a, series.values), rate_hz=series.rate_hz)


def fall_segment(
    series: GForceSeries,
    filter_after_crop: bool = True,
    order: int = DEFAULT_ORDER,
    cutoff_hz: float = DEFAULT_CUTOFF_HZ,
) -> CroppedFall:
    """Crops & low-passes a fall series - the representation compared by DTW.

    The default filters the 20 cropped values; filter_after_crop=False filters the whole
    series first and crops the filtered values.
    """
    if filter_after_crop:
        crop = crop_fall(series)
        filtered = butterworth_lowpass(GForceSeries(crop.values, series.rate_hz), order, cutoff_hz)
        return CroppedFall(filtered.values, mark_index=crop.mark_index, start=crop.start)

    crop = crop_fall(butterworth_lowpass(series, order, cutoff_hz))
    return crop
