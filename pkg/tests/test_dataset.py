""" Tests for 'core.dataset' module. """

import os
from collections import Counter

import numpy as np
import pytest

from fallalert.core import dataset
from fallalert.definitions import TESTS_RESOURCES_PATH
from fallalert.models.errors import EmptyDatasetError, ParseError, SchemaError, ValidationError
from fallalert.models.labels import ActivityLabel, BodyLocation, FallKind

HEADER = "subject,location,label,session,t,ax,ay,az,gx,gy,gz\n"


def write(tmp_path, body, name="data.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body)
    return str(path)


def test_load_remapped_foreign_dataset():
    remap = dataset.load_remap(os.path.join(TESTS_RESOURCES_PATH, "remap.conf"))
    data = dataset.load_dataset(os.path.join(TESTS_RESOURCES_PATH, "foreign.csv"), remap)

    assert len(data) == 2
    walk, fall = data.recordings
    assert walk.recording_id == "P1/LEFT_CHEST/WALK/a"
    assert walk.label == ActivityLabel.WALK
    assert fall.label == FallKind.FALL
    assert fall.is_fall and not walk.is_fall
    assert len(walk) == 4
    assert walk.values[1, 2] == 9.9


def test_foreign_dataset_without_remap():
    with pytest.raises(SchemaError):
        dataset.load_dataset(os.path.join(TESTS_RESOURCES_PATH, "foreign.csv"))


def test_bad_remap_line(tmp_path):
    path = tmp_path / "remap.conf"
    path.write_text("columns.user=subject\n")
    with pytest.raises(SchemaError):
        dataset.load_remap(str(path))


def test_parse_error_names_row(tmp_path):
    path = write(tmp_path, "S1,LEFT_CHEST,WALK,1,0.00,0,9.8,0,0,0,0\nS1,LEFT_CHEST,WALK,1,0.02,abc,9.8,0,0,0,0\n")
    with pytest.raises(ParseError) as excinfo:
        dataset.load_dataset(path)
    assert excinfo.value.row == 3


def test_unknown_label(tmp_path):
    path = write(tmp_path, "S1,LEFT_CHEST,DANCE,1,0.00,0,9.8,0,0,0,0\n")
    with pytest.raises(ParseError):
        dataset.load_dataset(path)


def test_empty_dataset(tmp_path):
    with pytest.raises(EmptyDatasetError):
        dataset.load_dataset(write(tmp_path, ""))
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(EmptyDatasetError):
        dataset.load_dataset(str(empty))


def test_out_of_range_sample(tmp_path):
    path = write(tmp_path, "S1,LEFT_CHEST,WALK,1,0.00,0,200.0,0,0,0,0\n")
    with pytest.raises(ValidationError):
        dataset.load_dataset(path)


def test_rate_mismatch(tmp_path):
    rows = "".join(f"S1,LEFT_CHEST,WALK,1,{i * 0.1:.2f},0,9.8,0,0,0,0\n" for i in range(5))
    with pytest.raises(ValidationError):
        dataset.load_dataset(write(tmp_path, rows))


def test_samples_sorted_and_sessions_split(tmp_path):
    times = [0.04, 0.00, 0.02, 2.00, 2.02]
    rows = "".join(f"S1,LEFT_CHEST,WALK,1,{t:.2f},0,9.8,0,0,0,0\n" for t in times)
    data = dataset.load_dataset(write(tmp_path, rows))

    assert [r.session for r in data] == ["1-1", "1-2"]
    assert data.recordings[0].t.tolist() == [0.0, 0.02, 0.04]
    assert data.recordings[1].t.tolist() == [2.0, 2.02]


def test_write_dataset_byte_stable(corpus, tmp_path):
    subset = corpus.select(location=BodyLocation.LEFT_CHEST, label=ActivityLabel.WALK)
    first, second, third = (tmp_path / f"{name}.csv" for name in ("first", "second", "third"))

    dataset.write_dataset(subset, str(first))
    dataset.write_dataset(dataset.load_dataset(str(first)), str(second))
    dataset.write_dataset(dataset.load_dataset(str(second)), str(third))
    assert second.read_bytes() == third.read_bytes()

    reloaded = dataset.load_dataset(str(first))
    assert [r.recording_id for r in reloaded] == [r.recording_id for r in subset]
    assert np.allclose(reloaded.recordings[0].values, subset.recordings[0].values, rtol=0, atol=1e-12)


def test_load_dataset_parses_floats_exactly(tmp_path):
    rng = np.random.default_rng(4)
    samples = np.column_stack([np.arange(400) * 0.02, rng.normal(0, 10, (400, 6))])
    body = "".join("S1,LEFT_CHEST,WALK,1," + ",".join(repr(float(x)) for x in row) + "\n" for row in samples)

    data = dataset.load_dataset(write(tmp_path, body))
    assert len(data) == 1
    assert np.array_equal(data.recordings[0].values, samples)


def test_stratified_split_ratio():
    labels = ["A"] * 10 + ["B"] * 7 + ["C"] * 1
    train, validation = dataset.stratified_split_indices(labels, 0.7, seed=1)

    assert sorted(train.tolist() + validation.tolist()) == list(range(len(labels)))
    counts = Counter(labels[i] for i in train)
    assert counts == {"A": 7, "B": 5, "C": 1}

    again, _ = dataset.stratified_split_indices(labels, 0.7, seed=1)
    assert np.array_equal(train, again)


def test_split_ratio_bounds():
    with pytest.raises(ValueError):
        dataset.stratified_split_indices(["A", "B"], 1.0, seed=0)


def test_subject_disjoint_split():
    subjects = ["S1", "S1", "S2", "S2", "S3", "S3", "S4", "S4"]
    labels = ["A", "B"] * 4
    train, validation = dataset.subject_disjoint_split(labels, subjects, 0.7, seed=3)

    train_subjects = {subjects[i] for i in train}
    val_subjects = {subjects[i] for i in validation}
    assert not train_subjects & val_subjects
    assert len(train_subjects) == 3


def test_split_train_validation(corpus):
    train, validation = dataset.split_train_validation(corpus, 0.7, seed=4)
    assert len(train) + len(validation) == len(corpus)
    ids = {r.recording_id for r in train}
    assert not ids & {r.recording_id for r in validation}
