""" Tests for 'core.falldetect' module. """

import itertools
from dataclasses import replace

import numpy as np
import pytest

from fallalert.core import falldetect, signal, synthetic
from fallalert.models.detector import DetectorMetrics, DtwDetector, ThreePhaseParams, TwoPhaseParams
from fallalert.models.errors import ConfigError, DegenerateInputError
from fallalert.models.labels import BodyLocation, DetectorKind, FallKind
from fallalert.models.window import CROP_SIZE, CroppedFall, GForceSeries

BLOCK_LEVELS = [0.3, 0.45, 0.55, 0.9, 1.0, 1.1, 1.5, 2.0, 2.4, 3.0]
TWO_PHASE = TwoPhaseParams(lft=0.5, uft=2.2, max_gap=20)
THREE_PHASE = ThreePhaseParams(t1=0.5, t2=2.2, settle_low=0.8, settle_high=1.2, gap12=20, gap23=30, settle_len=10)


def block_series(rng):
    """Piecewise-constant G-force levels with a little jitter."""
    total = int(rng.integers(20, 2001))
    values = []
    while len(values) < total:
        values.extend([float(rng.choice(BLOCK_LEVELS))] * int(rng.integers(1, 30)))
    values = np.array(values[:total])
    return values + rng.normal(0, 0.005, total)


def spike_runs(v, threshold):
    i, n = 0, len(v)
    while i < n:
        if v[i] > threshold:
            end = i
            while end < n and v[end] > threshold:
                end += 1
            yield i, end, max(range(i, end), key=v.__getitem__)
            i = end
        else:
            i += 1


def candidate_runs(v, low, high, gap):
    """Spike runs above high with a sample below low in the gap samples before them, none reused."""
    cursor = 0
    for start, end, peak in spike_runs(v, high):
        if start == 0 or start < cursor:
            continue
        if any(v[j] < low for j in range(max(cursor, start - gap), start)):
            yield start, end, peak
            cursor = end


def two_phase_oracle(v, p):
    return [(peak, min(end, len(v) - 1)) for _, end, peak in candidate_runs(v, p.lft, p.uft, p.max_gap)]


def settle_oracle(v, peak, p):
    n = len(v)
    for s in range(peak + 1, peak + p.gap23 + 1):
        if s + p.settle_len > n:
            return None
        if all(p.settle_low <= v[j] <= p.settle_high for j in range(s, s + p.settle_len)):
            return s
    return None


def three_phase_oracle(v, p):
    events = []
    for _, _, peak in candidate_runs(v, p.t1, p.t2, p.gap12):
        settle = settle_oracle(v, peak, p)
        if settle is not None:
            events.append((peak, settle + p.settle_len - 1))
    return events


def dtw_oracle(a, b):
    """Minimum cost over every monotone warping path, enumerated explicitly."""
    best = float("inf")

    def walk(i, j, cost):
        nonlocal best
        cost += abs(a[i] - b[j])
        if i == len(a) - 1 and j == len(b) - 1:
            best = min(best, cost)
            return
        if i + 1 < len(a):
            walk(i + 1, j, cost)
        if j + 1 < len(b):
            walk(i, j + 1, cost)
        if i + 1 < len(a) and j + 1 < len(b):
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best


def fall_like(dip=0.2, spike=3.0):
    return np.array([1.0] * 30 + [dip] * 5 + [spike] * 3 + [1.0] * 60)


def test_two_phase_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        v = block_series(rng)
        events = falldetect.detect_two_phase(GForceSeries(v), TWO_PHASE)
        assert [(e.index, e.confirmed_at) for e in events] == two_phase_oracle(v.tolist(), TWO_PHASE)


def test_three_phase_matches_oracle():
    rng = np.random.default_rng(8)
    found = 0
    for _ in range(1000):
        v = block_series(rng)
        events = falldetect.detect_three_phase(GForceSeries(v), THREE_PHASE)
        assert [(e.index, e.confirmed_at) for e in events] == three_phase_oracle(v.tolist(), THREE_PHASE)
        found += len(events)
    assert found > 0


def test_event_indices_are_ints():
    events = TwoPhaseParams().detect(fall_like()) + ThreePhaseParams().detect(fall_like())
    assert len(events) == 2
    assert all(type(e.index) is int and type(e.confirmed_at) is int for e in events)


def test_three_phase_events_within_two_phase():
    rng = np.random.default_rng(12)
    shared = 0
    for _ in range(1000):
        v = block_series(rng)
        lft, uft = float(rng.choice([0.4, 0.5, 0.6])), float(rng.choice([1.8, 2.2, 2.6]))
        max_gap = int(rng.integers(1, 41))
        two = TwoPhaseParams(lft=lft, uft=uft, max_gap=max_gap)
        three = ThreePhaseParams(
            t1=lft, t2=uft, settle_low=0.8, settle_high=1.2, gap12=int(rng.integers(1, max_gap + 1)), gap23=30, settle_len=10
        )
        peaks = {e.index for e in three.detect(v)}
        assert peaks <= {e.index for e in two.detect(v)}
        shared += len(peaks)
    assert shared > 0


def test_three_phase_only_settles_the_first_spike_after_a_dip():
    # the spike at 2 is the candidate & never settles; the later spike reuses the same dip
    v = np.array([1.0, 0.3, 3.0] + [1.8] * 7 + [3.0] + [1.0] * 40)
    two = TwoPhaseParams(lft=0.6, uft=2.0, max_gap=50)
    three = ThreePhaseParams(t1=0.6, t2=2.0, settle_low=0.8, settle_high=1.2, gap12=25, gap23=5, settle_len=25)

    assert [e.index for e in two.detect(v)] == [2]
    assert not three.detect(v)


def test_three_phase_event():
    events = falldetect.detect_three_phase(fall_like(), ThreePhaseParams(), recording_id="r1")
    assert len(events) == 1
    event = events[0]
    assert (event.index, event.confirmed_at) == (35, 62)
    assert event.kind == FallKind.FALL
    assert event.detector == DetectorKind.THREE_PHASE
    assert event.recording_id == "r1"


def test_two_phase_event():
    events = TwoPhaseParams(kind=FallKind.FALL_KNEES_FIRST).detect(fall_like())
    assert [(e.index, e.confirmed_at, e.kind) for e in events] == [(35, 38, FallKind.FALL_KNEES_FIRST)]


def test_phases_required():
    params = ThreePhaseParams()
    # no dip
    assert not params.flags(fall_like(dip=0.9))
    # no impact
    assert not params.flags(fall_like(spike=1.5))
    # no settling afterwards
    unsettled = fall_like()
    unsettled[38:] = 1.5
    assert not params.flags(unsettled)
    assert TwoPhaseParams().flags(unsettled)


@pytest.mark.parametrize(
    "cls, kwargs",
    [
        (TwoPhaseParams, {"lft": 1.2}),
        (TwoPhaseParams, {"max_gap": 0}),
        (ThreePhaseParams, {"t2": 0.9}),
        (ThreePhaseParams, {"settle_low": 1.05}),
        (ThreePhaseParams, {"settle_len": 0}),
    ],
)
def test_detector_validation(cls, kwargs):
    with pytest.raises(ConfigError):
        cls(**kwargs)


def test_dtw_matches_path_enumeration():
    rng = np.random.default_rng(9)
    for _ in range(200):
        a = rng.integers(0, 10, int(rng.integers(1, 9))).tolist()
        b = rng.integers(0, 10, int(rng.integers(1, 9))).tolist()
        assert falldetect.dtw_distance(a, b) == dtw_oracle(a, b)


def test_dtw_distance_properties():
    a = [1.0, 3.0, 2.0, 5.0]
    b = [1.0, 1.0, 3.0, 2.0, 2.0, 5.0]
    assert falldetect.dtw_distance(a, a) == 0.0
    assert falldetect.dtw_distance(a, b) == 0.0
    assert falldetect.dtw_distance(a, [0.0]) == falldetect.dtw_distance([0.0], a) == 11.0
    with pytest.raises(ValueError):
        falldetect.dtw_distance([], a)


def test_dtw_scales_with_the_values():
    rng = np.random.default_rng(13)
    for _ in range(100):
        a = rng.uniform(0, 3, int(rng.integers(1, 30)))
        b = rng.uniform(0, 3, int(rng.integers(1, 30)))
        alpha = float(rng.uniform(0.1, 10))
        assert falldetect.dtw_distance(alpha * a, alpha * b) == pytest.approx(alpha * falldetect.dtw_distance(a, b), rel=1e-12)
        assert falldetect.dtw_distance(a, b) == falldetect.dtw_distance(b, a)


def kmeans_seam_oracle(values, k):
    """Seam of the optimal 1-D k-means partition, trying every set of split points."""
    v = sorted(values)
    best = None
    for cuts in itertools.combinations(range(1, len(v)), k - 1):
        groups = [v[a:b] for a, b in zip((0,) + cuts, cuts + (len(v),))]
        sse = sum(sum((x - sum(g) / len(g)) ** 2 for x in g) for g in groups)
        if best is None or sse < best[0]:
            best = (sse, groups)
    groups = best[1]
    return (groups[-2][-1] + groups[-1][0]) / 2


def test_kmeans_threshold_matches_partition_oracle():
    assert falldetect.calibrate_threshold_kmeans([1, 2, 10, 11, 50, 52], k=3) == 30.5
    assert kmeans_seam_oracle([1, 2, 10, 11, 50, 52], 3) == 30.5

    rng = np.random.default_rng(14)
    for _ in range(50):
        k, size = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        centres = np.cumsum(rng.uniform(50, 100, k))
        distances = np.concatenate([c + rng.uniform(0, 5, size) for c in centres])
        rng.shuffle(distances)
        threshold = falldetect.calibrate_threshold_kmeans(distances.tolist(), k=k)
        assert threshold == pytest.approx(kmeans_seam_oracle(distances.tolist(), k))
        assert centres[-2] < threshold < centres[-1]


def medoid_oracle(falls_by_subject):
    """(subject, item index) of the template, trying every candidate against every fall."""
    subjects = sorted(falls_by_subject)
    everything = [crop for s in subjects for crop in falls_by_subject[s]]

    representatives = []
    for subject in subjects:
        costs = []
        for idx, crop in enumerate(falls_by_subject[subject]):
            others = [o for s in subjects if s != subject for o in falls_by_subject[s]]
            costs.append((sum(falldetect.dtw_distance(crop.values, o.values) for o in others), subject, idx))
        representatives.append(min(costs))

    totals = []
    for _, subject, idx in representatives:
        crop = falls_by_subject[subject][idx]
        totals.append((sum(falldetect.dtw_distance(crop.values, o.values) for o in everything), subject, idx))
    return min(totals)[1:]


def test_select_template_matches_medoid_oracle():
    rng = np.random.default_rng(15)
    for trial in range(30):
        subjects, per_subject = (3, 2) if trial < 10 else (int(rng.integers(2, 5)), int(rng.integers(1, 3)))
        falls = {f"S{s:02d}": [CroppedFall(rng.uniform(0.2, 3.0, CROP_SIZE)) for _ in range(per_subject)] for s in range(subjects)}

        subject, idx = medoid_oracle(falls)
        template = falldetect.select_template(falls)
        assert template.subject_id == subject
        assert np.array_equal(template.values, falls[subject][idx].values)


def test_kmeans_threshold_seam():
    distances = [1.0, 1.1, 1.2, 5.0, 5.1, 10.0, 10.2]
    assert falldetect.calibrate_threshold_kmeans(distances, k=3) == pytest.approx(7.55)
    assert falldetect.calibrate_threshold_kmeans(list(reversed(distances)), k=3) == pytest.approx(7.55)


def test_kmeans_threshold_degenerate():
    with pytest.raises(DegenerateInputError):
        falldetect.calibrate_threshold_kmeans([1.0, 1.0, 2.0], k=3)
    with pytest.raises(DegenerateInputError):
        falldetect.calibrate_threshold_kmeans([1.0, 2.0], k=3)
    with pytest.raises(ValueError):
        falldetect.calibrate_threshold_kmeans([1.0, 2.0, 3.0], k=1)


def test_select_template():
    def crop(level):
        return CroppedFall(np.full(CROP_SIZE, level))

    template = falldetect.select_template({"A": [crop(0.0), crop(5.0)], "B": [crop(0.1)]})
    assert template.subject_id == "B"
    assert np.all(template.values == 0.1)

    with pytest.raises(ValueError):
        falldetect.select_template({"A": [crop(0.0)], "B": []})


def subject_falls(corpus, kind=FallKind.FALL):
    by_subject = {}
    for recording in corpus.select(location=BodyLocation.LEFT_CHEST, label=kind):
        by_subject.setdefault(recording.subject_id, []).append(signal.gforce_series(recording))
    return by_subject


def test_calibrate_dtw(corpus):
    falls = subject_falls(corpus)
    detector = falldetect.calibrate_dtw(falls, k=3)

    assert detector.threshold > 0
    assert detector.template.subject_id in falls
    assert len(detector.template.values) == CROP_SIZE

    metrics = falldetect.evaluate_detector(detector, [s for series in falls.values() for s in series], [], [GForceSeries(np.ones(200))])
    assert list(metrics) == [FallKind.FALL]
    assert metrics[FallKind.FALL].tp >= 1


def test_dtw_offline_short_series():
    detector = DtwDetector(CroppedFall(np.ones(CROP_SIZE)), threshold=1.0)
    assert not detector.flags(np.ones(CROP_SIZE - 1))


def test_dtw_streaming():
    fall = signal.gforce_series(synthetic.generate_synthetic(FallKind.FALL, 4, seed=3))
    detector = DtwDetector(CroppedFall(np.ones(CROP_SIZE)), threshold=1e6, mode="streaming")

    events = detector.detect(fall, recording_id="fall")
    assert events
    assert events[0].index == int(np.argmax(fall.values))
    assert events[0].detector == DetectorKind.DTW
    assert events[0].confirmed_at >= events[0].index
    assert not detector.detect(GForceSeries(np.ones(200)))

    with pytest.raises(ConfigError):
        DtwDetector(CroppedFall(np.ones(CROP_SIZE)), threshold=1.0, mode="batch")


def dtw_events_oracle(series, detector):
    """Tries every index as a candidate peak; a plateau counts once, at its middle sample."""
    v, n = series.values.tolist(), len(series)
    events, cursor = [], 0
    i = 1
    while n >= CROP_SIZE and i < n - 1:
        if v[i - 1] < v[i]:
            ahead = i + 1
            while ahead < n - 1 and v[ahead] == v[i]:
                ahead += 1
            if v[ahead] < v[i]:
                if v[i] >= detector.peak_height:
                    peak = (i + ahead - 1) // 2
                    lo, hi = max(0, peak - (CROP_SIZE - 1)), min(n - 1, peak + signal.CROP_REACH)
                    if hi - lo + 1 < CROP_SIZE:
                        lo, hi = (0, CROP_SIZE - 1) if lo == 0 else (n - CROP_SIZE, n - 1)
                    crop = signal.fall_segment(
                        GForceSeries(series.values[lo : hi + 1], series.rate_hz), detector.filter_after_crop, detector.order, detector.cutoff_hz
                    )
                    if lo + crop.start >= cursor and falldetect.dtw_distance(crop.values, detector.template.values) <= detector.threshold:
                        events.append((lo + crop.mark_index, hi))
                        cursor = lo + crop.start + CROP_SIZE
                i = ahead
        i += 1
    return events


def test_dtw_streaming_matches_every_index_oracle(corpus):
    calibrated = falldetect.calibrate_dtw(subject_falls(corpus), mode="streaming")
    recordings = corpus.select(location=BodyLocation.LEFT_CHEST)

    found = 0
    for detector in (calibrated, replace(calibrated, threshold=1e6)):
        for recording in recordings:
            series = signal.gforce_series(recording)
            events = falldetect.detect_dtw(series, detector)
            assert [(e.index, e.confirmed_at) for e in events] == dtw_events_oracle(series, detector)
            assert all(type(e.index) is int for e in events)
            found += len(events)
    assert found > 0


def test_flag_table_matches_detectors():
    rng = np.random.default_rng(10)
    series = [block_series(rng) for _ in range(40)]

    grids = [
        (TWO_PHASE, {"lft": [0.4, 0.5, 0.6], "uft": [1.8, 2.2, 2.6]}),
        (THREE_PHASE, {"t1": [0.4, 0.5, 0.6], "t2": [1.8, 2.2, 2.6], "settle_low": [0.7, 0.8], "settle_high": [1.2, 1.3]}),
    ]
    for base, grid in grids:
        table, names, lookup = falldetect.flag_table(base, grid, series)
        for candidate in falldetect.grid_candidates(base, grid):
            column = table[:, lookup[tuple(float(getattr(candidate, name)) for name in names)]]
            assert column.tolist() == [candidate.flags(s) for s in series]


def test_grid_search_thresholds():
    falls = [fall_like(dip=0.4), fall_like(dip=0.45)]
    nonfalls = [fall_like(dip=0.45, spike=2.0), np.ones(98)]
    grid = {"t1": [0.5, 0.3], "t2": [2.5, 1.6]}

    best, metrics = falldetect.grid_search_thresholds(DetectorKind.THREE_PHASE, falls, nonfalls, grid)
    assert (best.t1, best.t2) == (0.5, 2.5)
    assert metrics == DetectorMetrics(tp=2, fp=0, tn=2, fn=0)

    # gap12 in the grid takes the generic path
    generic, generic_metrics = falldetect.grid_search_thresholds(
        DetectorKind.THREE_PHASE, falls, nonfalls, dict(grid, gap12=[25]), workers=2
    )
    assert generic == best
    assert generic_metrics == metrics


def test_grid_search_ties_take_first_point():
    best, metrics = falldetect.grid_search_thresholds(
        DetectorKind.TWO_PHASE, [fall_like()], [np.ones(98)], {"lft": [0.6, 0.3], "uft": [2.0, 1.6]}
    )
    assert (best.lft, best.uft) == (0.3, 1.6)
    assert metrics.accuracy == 1.0


def test_grid_search_errors():
    with pytest.raises(ValueError):
        falldetect.grid_search_thresholds(DetectorKind.TWO_PHASE, [], [np.ones(10)], {"lft": [0.5]})
    with pytest.raises(ConfigError):
        falldetect.grid_search_thresholds(DetectorKind.TWO_PHASE, [fall_like()], [np.ones(98)], {"t9": [0.5]})
    with pytest.raises(ConfigError):
        falldetect.grid_search_thresholds(DetectorKind.TWO_PHASE, [fall_like()], [np.ones(98)], {"lft": [1.5]})
    with pytest.raises(ConfigError):
        falldetect.grid_search_thresholds(DetectorKind.DTW, [fall_like()], [np.ones(98)], {"threshold": [1.0]})


def test_evaluate_detector():
    falls = [fall_like(), fall_like(dip=0.9)]
    knees = [fall_like(dip=0.5)]
    nonfalls = [np.ones(98), fall_like(spike=1.5)]

    metrics = falldetect.evaluate_detector(ThreePhaseParams(), falls, knees, nonfalls)
    assert metrics[FallKind.FALL] == DetectorMetrics(tp=1, fp=0, tn=2, fn=1)
    assert metrics[FallKind.FALL_KNEES_FIRST] == DetectorMetrics(tp=1, fp=0, tn=2, fn=0)
    assert metrics[FallKind.FALL].sensitivity == 0.5
    assert metrics[FallKind.FALL].specificity == 1.0

    only_falls = falldetect.evaluate_detector({FallKind.FALL: ThreePhaseParams()}, falls, knees, nonfalls)
    assert list(only_falls) == [FallKind.FALL]

    with pytest.raises(ValueError):
        falldetect.evaluate_detector(ThreePhaseParams(), falls, knees, [])


def test_metrics():
    total = DetectorMetrics(tp=3, fp=1, tn=4, fn=2) + DetectorMetrics(tp=1, tn=1)
    assert total == DetectorMetrics(tp=4, fp=1, tn=5, fn=2)
    assert total.accuracy == pytest.approx(9 / 12)
    assert DetectorMetrics().sensitivity == 0.0

    frame = falldetect.metrics_frame([(DetectorKind.DTW, FallKind.FALL, total)])
    assert frame.loc[0, "algorithm"] == "dtw"
    assert frame.loc[0, "tp"] == 4


def test_sample_nonfall_series(corpus):
    series = falldetect.sample_nonfall_series(corpus.recordings, count=25, length=200, seed=1)
    again = falldetect.sample_nonfall_series(corpus.recordings, count=25, length=200, seed=1)

    assert len(series) == 25
    assert all(len(s) == 200 for s in series)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(series, again))

    with pytest.raises(ValueError):
        falldetect.sample_nonfall_series(corpus.recordings, count=1, length=10_000, seed=1)


def test_calibration_file_round_trip(tmp_path):
    template = CroppedFall(np.linspace(0.2, 3.1, CROP_SIZE), subject_id="S02")
    detectors = {
        (FallKind.FALL, DetectorKind.TWO_PHASE): TwoPhaseParams(lft=0.35, uft=2.4),
        (FallKind.FALL, DetectorKind.THREE_PHASE): ThreePhaseParams(t1=0.45, settle_len=30),
        (FallKind.FALL_KNEES_FIRST, DetectorKind.DTW): DtwDetector(
            template, threshold=1.2345678901234567, filter_after_crop=False, mode="streaming", kind=FallKind.FALL_KNEES_FIRST
        ),
    }
    path = tmp_path / "calibration.txt"
    falldetect.write_calibration(path, detectors, {"seed": 3, "split": "stratified"})

    loaded, provenance = falldetect.read_calibration(path)
    assert provenance == {"seed": "3", "split": "stratified"}
    assert loaded[(FallKind.FALL, DetectorKind.TWO_PHASE)] == detectors[(FallKind.FALL, DetectorKind.TWO_PHASE)]
    assert loaded[(FallKind.FALL, DetectorKind.THREE_PHASE)] == detectors[(FallKind.FALL, DetectorKind.THREE_PHASE)]

    dtw = loaded[(FallKind.FALL_KNEES_FIRST, DetectorKind.DTW)]
    assert dtw.kind == FallKind.FALL_KNEES_FIRST
    assert dtw.threshold == 1.2345678901234567
    assert dtw.filter_after_crop is False
    assert dtw.mode == "streaming"
    assert dtw.template.subject_id == "S02"
    assert np.array_equal(dtw.template.values, template.values)


@pytest.mark.parametrize(
    "text",
    [
        "format=something\nversion=1\n",
        "format=fallalert-calibration\nversion=1\nFALL.4-phase.t1=0.5\n",
        "format=fallalert-calibration\nversion=1\nno separator\n",
    ],
)
def test_read_calibration_errors(tmp_path, text):
    path = tmp_path / "calibration.txt"
    path.write_text(text)
    with pytest.raises(ConfigError):
        falldetect.read_calibration(path)


def test_corpus_falls_detected_by_base_three_phase(corpus):
    falls = [s for series in subject_falls(corpus).values() for s in series]
    detected = sum(ThreePhaseParams(t1=0.3, t2=1.6).flags(s) for s in falls)
    assert detected == len(falls)


def test_pairwise_symmetry():
    crops = [CroppedFall(np.full(CROP_SIZE, level)) for level in (0.0, 1.0, 3.0)]
    distances = falldetect._pairwise_dtw(crops)  # pylint: disable=protected-access
    assert np.array_equal(distances, distances.T)
    assert [distances[i, j] for i, j in itertools.combinations(range(3), 2)] == [20.0, 60.0, 40.0]
