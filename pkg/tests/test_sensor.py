import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optotactile.sensor import (
    MAX_FORCE_N,
    MAX_TORQUE_NM,
    ChannelReading,
    ContactState,
    EnvelopeError,
    FingerPhysicalModel,
    IntensityPair,
    attenuation,
    feed_response,
    ground_truth_wrench,
    inverse_feed_response,
    sense,
    sense_batch,
)


def test_attenuation_reference_values():
    assert attenuation(IntensityPair(1.0, 1.0)) == 0.0
    assert attenuation(IntensityPair(1.0, 10.0)) == pytest.approx(-10.0, abs=1e-12)
    assert attenuation(IntensityPair(10.0, 1.0)) == pytest.approx(10.0, abs=1e-12)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_attenuation_antisymmetric(i0, i):
    assert attenuation(IntensityPair(i0, i)) == pytest.approx(-attenuation(IntensityPair(i, i0)), abs=1e-12)


@pytest.mark.parametrize("i0,i", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (1.0, -2.0)])
def test_nonpositive_intensity_rejected(i0, i):
    with pytest.raises(ValueError):
        IntensityPair(i0, i)


def test_feed_response_endpoints_and_inverse():
    assert feed_response(0.0) == 0.0
    assert feed_response(10.0) == pytest.approx(10.0)
    for feed in (0.0, 0.3, 4.2, 9.99):
        assert inverse_feed_response(float(feed_response(feed))) == pytest.approx(feed, abs=1e-9)
    with pytest.raises(ValueError):
        inverse_feed_response(10.5)


def test_no_contact_reads_zero(finger):
    reading = sense(finger.noiseless(), ContactState(3.0, 0.0))
    assert np.all(reading.as_array() == 0.0)


def test_pressing_reads_nonpositive(finger):
    quiet = finger.noiseless()
    for p in np.linspace(1, 10, 19):
        for feed in (0.5, 5.0, 10.0):
            assert np.all(sense(quiet, ContactState(p, feed)).as_array() < 0)


def test_readings_grow_with_feed(finger):
    quiet = finger.noiseless()
    mags = [np.abs(sense(quiet, ContactState(4.0, f)).as_array()) for f in np.linspace(0, 10, 11)]
    assert all(np.all(b > a) for a, b in zip(mags, mags[1:]))


def test_grid_contacts_are_distinguishable(finger):
    """Distinct pressed grid contacts never share a noiseless reading (feed 0 reads zero everywhere)."""
    grid = np.arange(1.0, 11.0)
    p, v, f = (g.ravel() for g in np.meshgrid(grid, grid, grid, indexing="ij"))
    a = sense_batch(finger.noiseless(), p, f, v)
    sq = (a**2).sum(1)
    dist2 = sq[:, None] + sq[None, :] - 2 * a @ a.T
    np.fill_diagonal(dist2, np.inf)
    assert dist2.min() > 1e-12


def test_noise_is_seeded_per_sample(finger):
    c = ContactState(5.0, 4.0)
    assert sense(finger, c, index=3).a == sense(finger, c, index=3).a
    assert sense(finger, c, index=3).a != sense(finger, c, index=4).a
    assert sense(finger, c, 3, stream=(1,)).a != sense(finger, c, 3, stream=(2,)).a


def test_batch_matches_single(finger):
    rng = np.random.default_rng(5)
    p, f, v = rng.uniform(1, 10, 20), rng.uniform(0, 10, 20), rng.uniform(1, 10, 20)
    batch = sense_batch(finger, p, f, v, start_index=7, stream=(9,))
    for j in range(20):
        single = sense(finger, ContactState(p[j], f[j], v[j]), 7 + j, stream=(9,)).as_array()
        np.testing.assert_allclose(batch[j], single, rtol=0, atol=1e-12)


def test_wrench_signs_and_envelope(finger):
    assert ground_truth_wrench(finger, ContactState(1.0, 5.0))[1] < 0
    assert ground_truth_wrench(finger, ContactState(10.0, 5.0))[1] > 0
    assert ground_truth_wrench(finger, ContactState(5.5, 5.0))[1] == pytest.approx(0.0, abs=1e-15)
    f_max, t_max = ground_truth_wrench(finger, ContactState(10.0, 10.0))
    assert f_max == pytest.approx(MAX_FORCE_N)
    assert t_max == pytest.approx(MAX_TORQUE_NM)


@pytest.mark.parametrize("contact", [ContactState(0.5, 1.0), ContactState(11, 1.0),
                                     ContactState(5, -0.1), ContactState(5, 10.5),
                                     ContactState(5, 1.0, v_index=0.0)])
def test_outside_envelope_rejected(finger, contact):
    with pytest.raises(EnvelopeError):
        sense(finger, contact)


def test_channel_reading_validation():
    with pytest.raises(ValueError):
        ChannelReading((0.0,) * 4)
    with pytest.raises(ValueError):
        ChannelReading((0.0, 0.0, math.nan, 0.0, 0.0))


def test_model_json_roundtrip(tmp_path, finger):
    path = tmp_path / "finger.json"
    finger.save(path)
    assert FingerPhysicalModel.load(path) == finger


def test_model_rejects_bad_parameters():
    with pytest.raises(ValueError):
        FingerPhysicalModel(widths_mm=(1, 1, 1, 1))
    with pytest.raises(ValueError):
        FingerPhysicalModel(vertical_slopes=(1.2, 0, 0, 0, 0))
