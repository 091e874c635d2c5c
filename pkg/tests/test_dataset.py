import numpy as np
import pytest

from optotactile.calibration.dataset import (
    CSV_HEADER,
    Dataset,
    DatasetFormatError,
    ProtocolError,
    generate_dataset,
    generate_vertical_dataset,
)
from optotactile.sensor import MAX_FEED_MM, ContactState, ground_truth_wrench


def test_main_protocol_shape(main_data):
    assert len(main_data) == 1000
    assert len(main_data.train()) == 800 and len(main_data.test()) == 200
    assert set(np.unique(main_data.p_index)) <= set(np.arange(1.0, 11.0))
    assert main_data.m_index.min() >= 0 and main_data.m_index.max() <= MAX_FEED_MM
    assert np.isnan(main_data.v_index).all()


def test_labels_match_reference_wrench(finger, main_data):
    for s in list(main_data)[:50]:
        f_n, t_z = ground_truth_wrench(finger, ContactState(s.p_index, s.m_index))
        assert s.f_n == f_n and s.t_z == t_z


def test_generation_is_deterministic(finger, main_data):
    again = generate_dataset(finger, seed=0)
    assert again.to_csv() == main_data.to_csv()
    assert generate_dataset(finger, seed=1).to_csv() != main_data.to_csv()


def test_zero_points_gives_empty_dataset(finger):
    assert len(generate_dataset(finger, n_points=0, seed=0)) == 0


def test_protocol_outside_envelope(finger):
    with pytest.raises(ProtocolError):
        generate_dataset(finger, positions=12, seed=0)
    with pytest.raises(ProtocolError):
        generate_dataset(finger, max_feed=11, seed=0)
    with pytest.raises(ProtocolError):
        generate_vertical_dataset(finger, constant_force=7.0, seed=0)


def test_vertical_protocol_holds_force(vertical_data):
    assert len(vertical_data) == 100
    np.testing.assert_allclose(vertical_data.f_n, 3.0, atol=1e-9)
    counts = np.unique(vertical_data.v_index, return_counts=True)[1]
    assert np.all(counts == 10)


def test_csv_roundtrip(tmp_path, main_data, vertical_data):
    for data in (main_data, vertical_data):
        path = tmp_path / f"{data.name}.csv"
        data.to_csv(path)
        back = Dataset.from_csv(path)
        assert back.to_csv() == data.to_csv()
        np.testing.assert_allclose(back.a, data.a, rtol=1e-8)


def test_csv_errors_name_the_line(main_data):
    lines = main_data.to_csv().splitlines()
    lines[5] = lines[5].replace(lines[5].split(",")[3], "abc", 1)
    with pytest.raises(DatasetFormatError, match=r":6:"):
        Dataset.parse_csv("\n".join(lines))
    lines = main_data.to_csv().splitlines()
    lines[3] = ",".join(lines[3].split(",")[:-2])
    with pytest.raises(DatasetFormatError, match=r":4:"):
        Dataset.parse_csv("\n".join(lines))
    with pytest.raises(DatasetFormatError, match=r":1:"):
        Dataset.parse_csv("x,y\n1,2\n")


def test_header_order():
    assert CSV_HEADER[:3] == ["p_index", "v_index", "m_index"]


def test_unrecorded_target_rejected(main_data):
    with pytest.raises(ValueError):
        main_data.target("position-vertical")
    with pytest.raises(ValueError):
        main_data.target("pressure")
