import numpy as np
import pytest

from fixshare.constructions import SegmentMode
from fixshare.core import InvalidInputError
from fixshare.datagen import (DriftDatasetSpec, GaussianAdvice, fig2_specs, format_value,
                              gen_drift_data, random_drift_data, read_dataset_csv,
                              write_dataset_csv)


def test_sleeping_follows_global_clock():
    spec = DriftDatasetSpec.parse("2x3@1.0", "sleeping")
    assert gen_drift_data(spec).tolist() == [0, 1, 2, 3, 4, 5]


def test_freezing_restarts_each_segment():
    spec = DriftDatasetSpec.parse("2x3@1.0,2@0.5", "freezing")
    assert spec.horizon == 8
    assert gen_drift_data(spec).tolist() == [0, 1, 2, 0, 1, 2, 0, 0.5]


def test_zero_rate():
    assert not gen_drift_data(DriftDatasetSpec.parse("1x100@0.0", "fr")).any()


@pytest.mark.parametrize("text", ["", "3@", "x@1", "0x5@1.0", "2@nan"])
def test_bad_specs(text):
    with pytest.raises(InvalidInputError):
        DriftDatasetSpec.parse(text, "sleeping")


def test_noise_is_seeded():
    spec = DriftDatasetSpec.parse("50@0.2", "sleeping", noise=1.0, seed=3)
    a, b = gen_drift_data(spec), gen_drift_data(spec)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, gen_drift_data(DriftDatasetSpec.parse("50@0.2", "sleeping")))


def test_fig2_specs_shape():
    sl, fr = fig2_specs()
    assert sl.mode is SegmentMode.SLEEPING and fr.mode is SegmentMode.FREEZING
    assert sl.horizon == fr.horizon == 1000
    assert [r for _, r in sl.segments] == [0.1, 0.3] * 5
    x = gen_drift_data(fr)
    assert x[100] == 0.0 and x[199] == pytest.approx(0.3 * 99)
    y = gen_drift_data(sl)
    assert y[199] == pytest.approx(0.3 * 199)


def test_random_data_determinism():
    assert np.array_equal(random_drift_data(20, 1), random_drift_data(20, 1))
    assert not np.array_equal(random_drift_data(20, 1), random_drift_data(20, 2))
    with pytest.raises(InvalidInputError):
        random_drift_data(0, 1)


def test_csv_roundtrip(tmp_path):
    x = np.array([0.0, 1 / 3, -2.5e-7, 123456.789])
    p = tmp_path / "d.csv"
    write_dataset_csv(p, x)
    assert p.read_text().splitlines()[0] == "t,x"
    np.testing.assert_allclose(read_dataset_csv(p), x, rtol=1e-11)
    assert format_value(1 / 3) == "0.333333333333"


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,y\n1,2\n")
    with pytest.raises(InvalidInputError):
        read_dataset_csv(p)
    p.write_text("t,x\n")
    with pytest.raises(InvalidInputError):
        read_dataset_csv(p)
    p.write_text("t,x\n1,abc\n")
    with pytest.raises(InvalidInputError):
        read_dataset_csv(p)


def test_gaussian_advice_vectorized():
    adv = GaussianAdvice()
    mus = np.array([0.0, 1.0, 2.5])
    got = adv.log_densities(1, mus, 1.7)
    want = [adv.log_density(1, m, 1.7) for m in mus]
    np.testing.assert_allclose(got, want, rtol=1e-15)
    assert adv.density(1, 0.0, 0.0) == pytest.approx(1 / np.sqrt(2 * np.pi))
