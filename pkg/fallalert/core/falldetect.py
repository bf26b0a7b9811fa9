"""
The three fall detection algorithms over G-force series (2-phase threshold, 3-phase
threshold & DTW template matching), DTW calibration, exhaustive threshold grid search and
detector evaluation.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import find_peaks
from sklearn.cluster import KMeans

from fallalert.core import signal
from fallalert.models.detector import (
    DetectorMetrics,
    DtwDetector,
    FallEvent,
    ThreePhaseParams,
    TwoPhaseParams,
    tunable_fields,
)
from fallalert.models.errors import ConfigError, DegenerateInputError
from fallalert.models.labels import DetectorKind, FallKind
from fallalert.models.window import CROP_SIZE, CroppedFall, GForceSeries

# Streaming DTW neighbourhood around a candidate peak - covers every window crop_fall can choose
DTW_LOOKBACK = CROP_SIZE - 1
DTW_LOOKAHEAD = signal.CROP_REACH

DETECTOR_CLASSES = {
    DetectorKind.TWO_PHASE: TwoPhaseParams,
    DetectorKind.THREE_PHASE: ThreePhaseParams,
    DetectorKind.DTW: DtwDetector,
}


def _values(series) -> np.ndarray:
    if isinstance(series, GForceSeries):
        return series.values
    return np.asarray(series, dtype=float).reshape(-1)


def _rate(series, default=50.0) -> float:
    return series.rate_hz if isinstance(series, GForceSeries) else default


def _runs(mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Start & (exclusive) end indices of the runs of True values in a boolean mask."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.diff(padded)
    return np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)


def _last_index(mask: np.ndarray) -> np.ndarray:
    """last[k] = the largest i <= k with mask[i] (or -1)."""
    idx = np.where(mask, np.arange(len(mask)), -1)
    return np.maximum.accumulate(idx) if len(idx) else idx


def _spike_candidates(starts, ends, last_dip, max_gap: int):
    """Yields (start, end) of every spike run preceded within max_gap samples by a dip.

    Scanning resumes after each accepted run, so a later candidate needs a new dip.
    """
    cursor = 0
    for start, end in zip(starts.tolist(), ends.tolist()):
        if start < cursor or start == 0:
            continue
        if last_dip[start - 1] < max(cursor, start - max_gap):
            continue
        yield start, end
        cursor = end


def _peak(values, start, end) -> int:
    return start + int(np.argmax(values[start:end]))


def detect_two_phase(series, params: TwoPhaseParams, recording_id: str = "") -> List[FallEvent]:
    """Finds every dip below lft followed within max_gap samples by a spike above uft.

    A spike is a run of samples above uft; its event sits at the run's highest sample. Scanning
    resumes after the run, so a later event needs a new dip.

    Args:
        series: GForceSeries (or plain values)
        params: TwoPhaseParams

    Returns:
        events: list of FallEvent, sorted & non-overlapping
    """
    values = _values(series)
    starts, ends = _runs(values > params.uft)
    last_dip = _last_index(values < params.lft)

    return [
        FallEvent(params.kind, _peak(values, start, end), DetectorKind.TWO_PHASE, recording_id, confirmed_at=min(end, len(values) - 1))
        for start, end in _spike_candidates(starts, ends, last_dip, params.max_gap)
    ]


def _settle_windows(values: np.ndarray, settle_len: int):
    """Rolling (min, max) of every settle_len-long window, indexed by window start."""
    if len(values) < settle_len:
        return np.empty(0), np.empty(0)
    windows = sliding_window_view(values, settle_len)
    return windows.min(axis=1), windows.max(axis=1)


def _settle_start(peak, wmin, wmax, params: ThreePhaseParams):
    """Earliest phase-3 start in [peak + 1, peak + gap23] whose window stays in bounds (or None)."""
    lo = peak + 1
    hi = min(peak + params.gap23, len(wmin) - 1)
    if lo > hi:
        return None
    ok = (wmin[lo : hi + 1] >= params.settle_low) & (wmax[lo : hi + 1] <= params.settle_high)
    hits = np.flatnonzero(ok)
    return lo + int(hits[0]) if hits.size else None


def detect_three_phase(series, params: ThreePhaseParams, recording_id: str = "") -> List[FallEvent]:
    """3-phase detection: a dip below t1 (phase 1), a spike above t2 starting within gap12
    samples (phase 2) and, within gap23 samples of the spike's peak, settle_len consecutive
    samples inside [settle_low, settle_high] (phase 3).

    Phases 1 & 2 pick candidates exactly as the 2-phase scan does (lft=t1, uft=t2,
    max_gap=gap12); phase 3 only drops candidates. The event sits at the spike peak and is
    confirmed at the last settled sample.
    """
    values = _values(series)
    starts, ends = _runs(values > params.t2)
    wmin, wmax = _settle_windows(values, params.settle_len)

    events = []
    for start, end in _spike_candidates(starts, ends, _last_index(values < params.t1), params.gap12):
        peak = _peak(values, start, end)
        settle = _settle_start(peak, wmin, wmax, params)
        if settle is None:
            continue
        events.append(
            FallEvent(params.kind, peak, DetectorKind.THREE_PHASE, recording_id, confirmed_at=settle + params.settle_len - 1)
        )
    return events


def dtw_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Classic dynamic time warping distance with absolute-difference cost, no window constraint."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if not a.size or not b.size:
        raise ValueError("dtw_distance needs two non-empty sequences.")

    cost = np.abs(np.subtract.outer(a, b)).tolist()
    m = len(b)
    previous = [float("inf")] * m
    for i, row in enumerate(cost):
        current = [0.0] * m
        for j in range(m):
            if i == 0 and j == 0:
                best = 0.0
            elif i == 0:
                best = current[j - 1]
            elif j == 0:
                best = previous[j]
            else:
                best = min(previous[j - 1], previous[j], current[j - 1])
            current[j] = row[j] + best
        previous = current

    return previous[-1]


def _pairwise_dtw(crops: Sequence[CroppedFall]) -> np.ndarray:
    n = len(crops)
    distances = np.zeros((n, n))
    for i, j in itertools.combinations(range(n), 2):
        distances[i, j] = distances[j, i] = dtw_distance(crops[i].values, crops[j].values)
    return distances


def select_template(falls_by_subject: Mapping[str, Sequence[CroppedFall]]) -> CroppedFall:
    """Picks the global fall representative.

    Per subject, the candidate with the smallest summed DTW distance to every other subject's
    falls is that subject's representative; the representative with the smallest summed
    distance to all falls wins. Ties go to the lowest (subject id, item index).
    """
    subjects = sorted(s for s, falls in falls_by_subject.items() if falls)
    if len(subjects) < 2:
        raise ValueError(f"Template selection needs falls from at least 2 subjects - got {len(subjects)}.")

    crops, owners = [], []
    for subject in subjects:
        for crop in falls_by_subject[subject]:
            crops.append(crop)
            owners.append(subject)
    owners = np.array(owners)
    distances = _pairwise_dtw(crops)

    representatives = []
    for subject in subjects:
        own = np.flatnonzero(owners == subject)
        others = owners != subject
        costs = distances[np.ix_(own, np.flatnonzero(others))].sum(axis=1)
        representatives.append(int(own[int(np.argmin(costs))]))

    totals = distances[representatives].sum(axis=1)
    best = representatives[int(np.argmin(totals))]
    logging.info("Selected fall template from subject %s (total DTW distance %.4f).", owners[best], totals.min())
    return replace(crops[best], subject_id=str(owners[best]))


def calibrate_threshold_kmeans(distances: Sequence[float], k: int = 3) -> float:
    """Threshold at the seam of the two highest 1-D k-means clusters.

    Clusters are seeded deterministically at the (i + 0.5) / k quantiles of the distinct
    values and ordered by centroid; the threshold is the midpoint between the largest member
    of cluster k - 1 and the smallest member of cluster k.
    """
    values = np.asarray(distances, dtype=float).reshape(-1)
    if k < 2:
        raise ValueError(f"k must be at least 2 - got {k}.")
    distinct = np.unique(values)
    if len(values) < k or len(distinct) < k:
        raise DegenerateInputError(f"k-means with k={k} needs at least {k} distinct values - got {len(distinct)}.")

    seeds = np.quantile(distinct, (np.arange(k) + 0.5) / k).reshape(-1, 1)
    model = KMeans(n_clusters=k, init=seeds, n_init=1).fit(values.reshape(-1, 1))

    order = np.argsort(model.cluster_centers_.reshape(-1))
    upper = values[model.labels_ == order[-1]]
    lower = values[model.labels_ == order[-2]]
    if not upper.size or not lower.size:
        raise DegenerateInputError("k-means produced an empty cluster.")

    return float((lower.max() + upper.min()) / 2.0)


def segment_of(series, detector: DtwDetector) -> CroppedFall:
    return signal.fall_segment(
        GForceSeries(_values(series), _rate(series)), detector.filter_after_crop, detector.order, detector.cutoff_hz
    )


def dtw_flags_segment(series, detector: DtwDetector) -> bool:
    """Offline DTW decision: crop the whole (pre-segmented) series once & compare it to the template."""
    values = _values(series)
    if len(values) < CROP_SIZE:
        return False
    return dtw_distance(segment_of(series, detector).values, detector.template.values) <= detector.threshold


def dtw_candidates(series, detector: DtwDetector):
    """Yields (neighbourhood start, neighbourhood end, crop) for every local maximum above peak_height."""
    values = _values(series)
    n = len(values)
    if n < CROP_SIZE:
        return

    peaks, _ = find_peaks(values, height=detector.peak_height)
    for peak in peaks.tolist():
        lo = max(0, peak - DTW_LOOKBACK)
        hi = min(n - 1, peak + DTW_LOOKAHEAD)
        if hi - lo + 1 < CROP_SIZE:
            lo, hi = (0, CROP_SIZE - 1) if lo == 0 else (n - CROP_SIZE, n - 1)
        yield lo, hi, segment_of(GForceSeries(values[lo : hi + 1], _rate(series)), detector)


def detect_dtw(series, detector: DtwDetector, recording_id: str = "") -> List[FallEvent]:
    """Streaming DTW detection: every candidate peak's neighbourhood is cropped, filtered &
    compared to the template; an event is raised when the distance is at most the threshold.
    Crops of consecutive events never overlap."""
    events = []
    cursor = 0
    for lo, hi, crop in dtw_candidates(series, detector):
        start = lo + crop.start
        if start < cursor:
            continue
        if dtw_distance(crop.values, detector.template.values) <= detector.threshold:
            events.append(FallEvent(detector.kind, lo + crop.mark_index, DetectorKind.DTW, recording_id, confirmed_at=hi))
            cursor = start + CROP_SIZE
    return events


def calibrate_dtw(
    falls_by_subject: Mapping[str, Sequence],
    k: int = 3,
    kind: FallKind = FallKind.FALL,
    peak_height: float = 1.3,
    filter_after_crop: bool = True,
    order: int = signal.DEFAULT_ORDER,
    cutoff_hz: float = signal.DEFAULT_CUTOFF_HZ,
    mode: str = "offline",
) -> DtwDetector:
    """Builds a DtwDetector from fall series grouped by subject.

    The series are cropped & filtered, the global representative becomes the template, and
    the k-means seam of the template's distances to every fall becomes the threshold.
    """
    crops = {
        subject: [signal.fall_segment(GForceSeries(_values(s), _rate(s)), filter_after_crop, order, cutoff_hz) for s in series]
        for subject, series in falls_by_subject.items()
    }
    template = select_template(crops)
    distances = [dtw_distance(template.values, c.values) for falls in crops.values() for c in falls]
    threshold = calibrate_threshold_kmeans(distances, k)

    logging.info("Calibrated DTW (%s): threshold %.4f over %s fall(s).", kind.value, threshold, len(distances))
    return DtwDetector(
        template=template,
        threshold=threshold,
        peak_height=peak_height,
        filter_after_crop=filter_after_crop,
        order=order,
        cutoff_hz=cutoff_hz,
        mode=mode,
        kind=kind,
    )


def evaluate_flags(detector, falls: Sequence, nonfalls: Sequence) -> DetectorMetrics:
    """Counts a detector's decisions over positive (fall) and negative (non-fall) series."""
    tp = sum(1 for s in falls if detector.flags(s))
    fp = sum(1 for s in nonfalls if detector.flags(s))
    return DetectorMetrics(tp=tp, fp=fp, tn=len(nonfalls) - fp, fn=len(falls) - tp)


def evaluate_detector(
    detector: Union[Mapping[FallKind, object], object],
    falls: Sequence,
    knee_falls: Sequence,
    nonfalls: Sequence,
) -> Dict[FallKind, DetectorMetrics]:
    """Per fall kind metrics. `detector` is one detector used for both kinds or a mapping
    of FallKind to the detector calibrated for it."""
    if not nonfalls:
        raise ValueError("evaluate_detector needs a non-empty non-fall set.")

    detectors = detector if isinstance(detector, Mapping) else {kind: detector for kind in FallKind}
    positives = {FallKind.FALL: falls, FallKind.FALL_KNEES_FIRST: knee_falls}

    metrics = {}
    for kind in FallKind:
        if kind not in detectors or not positives[kind]:
            continue
        metrics[kind] = evaluate_flags(detectors[kind], positives[kind], nonfalls)
    return metrics


def grid_candidates(base, grid: Mapping[str, Sequence]) -> List:
    """Every valid detector of the grid, in lexicographic parameter order (field order, ascending values)."""
    allowed = tunable_fields(base)
    unknown = [key for key in grid if key not in allowed]
    if unknown:
        raise ConfigError(f"Grid key(s) {unknown} are not tunable fields of {type(base).__name__} ({allowed}).")

    keys = [name for name in allowed if name in grid]
    axes = [sorted(grid[key]) for key in keys]
    if not keys or any(not axis for axis in axes):
        raise ConfigError("Threshold grid is empty.")

    candidates = []
    for combo in itertools.product(*axes):
        try:
            candidates.append(replace(base, **dict(zip(keys, combo))))
        except ConfigError:
            continue
    if not candidates:
        raise ConfigError("Threshold grid holds no valid parameter combination.")
    return candidates


def flag_table(base, grid: Mapping[str, Sequence], series_list: Sequence):
    """Flags of every threshold combination for every series. Spike runs & dip indices are
    worked out once per threshold level instead of once per candidate.

    Only grids over the threshold fields (lft / uft, or t1 / t2 / settle_low / settle_high)
    qualify; the sample-count fields stay at the base values. Returns None for other grids.

    Returns:
        (table, names, lookup): table is (n_series, n_combinations) booleans, names the
        threshold fields in field order and lookup maps a tuple of their values to a column
    """
    if isinstance(base, TwoPhaseParams) and set(grid) <= {"lft", "uft"}:
        names, gap = ["lft", "uft"], base.max_gap
    elif isinstance(base, ThreePhaseParams) and set(grid) <= {"t1", "t2", "settle_low", "settle_high"}:
        names, gap = ["t1", "t2", "settle_low", "settle_high"], base.gap12
    else:
        return None

    axes = [np.array(sorted(grid.get(name, [getattr(base, name)])), dtype=float) for name in names]
    table = np.zeros((len(series_list), *[len(a) for a in axes]), dtype=bool)
    three_phase = isinstance(base, ThreePhaseParams)

    for row, series in enumerate(series_list):
        values = _values(series)
        last_dips = [_last_index(values < level) for level in axes[0]]
        if three_phase:
            wmin, wmax = _settle_windows(values, base.settle_len)

        for si, spike in enumerate(axes[1]):
            starts, ends = _runs(values > spike)
            for di, last_dip in enumerate(last_dips):
                for start, end in _spike_candidates(starts, ends, last_dip, gap):
                    if not three_phase:
                        table[row, di, si] = True
                        break

                    peak = _peak(values, start, end)
                    lo, hi = peak + 1, min(peak + base.gap23, len(wmin) - 1)
                    if lo > hi:
                        continue
                    low_ok = wmin[lo : hi + 1, None] >= axes[2][None, :]
                    high_ok = wmax[lo : hi + 1, None] <= axes[3][None, :]
                    table[row, di, si] |= (low_ok[:, :, None] & high_ok[:, None, :]).any(axis=0)

    lookup = {combo: i for i, combo in enumerate(itertools.product(*[a.tolist() for a in axes]))}
    return table.reshape(len(series_list), -1), names, lookup


def grid_search_thresholds(
    kind: DetectorKind,
    falls: Sequence,
    nonfalls: Sequence,
    grid: Mapping[str, Sequence],
    base=None,
    workers: int = 1,
):
    """Exhaustive search of a threshold grid.

    Every grid point is evaluated on the positive (fall) and negative (non-fall) series; the
    best point maximises accuracy, then specificity, and ties go to the first point in
    lexicographic parameter order.

    Args:
        kind: algorithm id (2-phase, 3-phase or dtw)
        falls: positive G-force series
        nonfalls: negative G-force series
        grid: field name -> candidate values
        base: detector holding the fixed (non-grid) parameters - required for dtw
        workers: thread count for the generic evaluation path

    Returns:
        (best detector, DetectorMetrics)
    """
    if not falls or not nonfalls:
        raise ValueError("Grid search needs non-empty fall and non-fall sets.")
    if base is None:
        if kind == DetectorKind.DTW:
            raise ConfigError("DTW grid search needs a calibrated base detector.")
        base = DETECTOR_CLASSES[kind]()

    candidates = grid_candidates(base, grid)
    logging.info("Grid search (%s): %s candidate(s) over %s fall / %s non-fall series.", kind.value, len(candidates), len(falls), len(nonfalls))

    table = flag_table(base, grid, list(falls) + list(nonfalls))
    if table is not None:
        flags, names, lookup = table
        n_falls = len(falls)
        metrics = []
        for candidate in candidates:
            column = flags[:, lookup[tuple(float(getattr(candidate, name)) for name in names)]]
            tp = int(column[:n_falls].sum())
            fp = int(column[n_falls:].sum())
            metrics.append(DetectorMetrics(tp=tp, fp=fp, tn=len(nonfalls) - fp, fn=n_falls - tp))
    else:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            metrics = list(pool.map(lambda c: evaluate_flags(c, falls, nonfalls), candidates))

    best = 0
    for i, m in enumerate(metrics):
        if (m.accuracy, m.specificity) > (metrics[best].accuracy, metrics[best].specificity):
            best = i

    logging.info(
        "Best %s parameters: %s - accuracy %.4f, sensitivity %.4f, specificity %.4f.",
        kind.value,
        candidates[best],
        metrics[best].accuracy,
        metrics[best].sensitivity,
        metrics[best].specificity,
    )
    return candidates[best], metrics[best]


def sample_nonfall_series(recordings: Sequence, count: int, length: int, seed: int) -> List[GForceSeries]:
    """Draws `count` random fixed-length G-force stretches from non-fall recordings."""
    eligible = [r for r in recordings if not r.is_fall and len(r) >= length]
    if not eligible:
        raise ValueError(f"No non-fall recording holds at least {length} samples.")

    rng = np.random.default_rng(seed)
    series = []
    for _ in range(count):
        recording = eligible[int(rng.integers(len(eligible)))]
        start = int(rng.integers(len(recording) - length + 1))
        g = signal.gforce_series(recording)
        series.append(GForceSeries(g.values[start : start + length], g.rate_hz))
    return series


def metrics_frame(rows: Sequence[Tuple[DetectorKind, FallKind, DetectorMetrics]]) -> pd.DataFrame:
    """Detector metrics as a table - one row per (algorithm, fall kind)."""
    return pd.DataFrame(
        [{"algorithm": algo.value, "fall_kind": kind.value, **metrics.asdict()} for algo, kind, metrics in rows],
        columns=["algorithm", "fall_kind", "accuracy", "sensitivity", "specificity", "tp", "fp", "tn", "fn"],
    )


CALIBRATION_FORMAT = "fallalert-calibration"
CALIBRATION_VERSION = 1


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, CroppedFall):
        return ",".join(repr(float(v)) for v in value.values)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_calibration(path, detectors: Mapping[Tuple[FallKind, DetectorKind], object], provenance: Mapping[str, object]):
    """Writes calibrated detectors & their provenance as key=value lines.

    Keys are `<fall kind>.<algorithm>.<parameter>` and `provenance.<name>`.
    """
    lines = ["# fallalert detector calibration", f"format={CALIBRATION_FORMAT}", f"version={CALIBRATION_VERSION}"]
    for (kind, algo), detector in detectors.items():
        for f in fields(detector):
            if f.name == "kind":
                continue
            lines.append(f"{kind.value}.{algo.value}.{f.name}={_format_value(getattr(detector, f.name))}")
        if algo == DetectorKind.DTW:
            lines.append(f"{kind.value}.{algo.value}.template_subject={detector.template.subject_id}")

    for key, value in provenance.items():
        lines.append(f"provenance.{key}={_format_value(value)}")

    with open(path, "w") as calibration_file:
        calibration_file.write("\n".join(lines) + "\n")
    logging.info("Wrote %s calibrated detector(s) to %s.", len(detectors), path)


def _parse_field(field_type, text):
    if field_type is bool:
        return text.strip().lower() == "true"
    if field_type in (int, float, str):
        return field_type(text)
    return text


def read_calibration(path):
    """Reads a calibration file written by write_calibration.

    Returns:
        (detectors, provenance): {(FallKind, DetectorKind): detector} and {name: text}
    """
    entries, provenance, header = {}, {}, {}
    with open(path) as calibration_file:
        for lineno, raw in enumerate(calibration_file, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"Calibration file {path} line {lineno} is not key=value: {line!r}")

            parts = key.split(".", 2)
            if parts[0] == "provenance":
                provenance[key.partition(".")[2]] = value
            elif len(parts) == 1:
                header[key] = value
            elif len(parts) == 3:
                entries.setdefault((parts[0], parts[1]), {})[parts[2]] = value
            else:
                raise ConfigError(f"Calibration file {path} line {lineno} has an unknown key {key!r}.")

    if header.get("format") != CALIBRATION_FORMAT or header.get("version") != str(CALIBRATION_VERSION):
        raise ConfigError(f"{path} is not a version {CALIBRATION_VERSION} {CALIBRATION_FORMAT} file.")

    detectors = {}
    for (kind_text, algo_text), values in entries.items():
        try:
            kind, algo = FallKind(kind_text), DetectorKind(algo_text)
        except ValueError:
            raise ConfigError(f"Calibration file {path} names an unknown detector {kind_text}.{algo_text}.")

        cls = DETECTOR_CLASSES[algo]
        kwargs = {"kind": kind}
        for f in fields(cls):
            if f.name not in values:
                continue
            if f.name == "template":
                template = np.array([float(v) for v in values["template"].split(",")])
                kwargs["template"] = CroppedFall(template, subject_id=values.get("template_subject", ""))
            else:
                kwargs[f.name] = _parse_field(f.type, values[f.name])
        detectors[(kind, algo)] = cls(**kwargs)

    return detectors, provenance
