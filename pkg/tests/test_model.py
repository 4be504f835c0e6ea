import numpy as np
import pytest
from hypothesis import given, strategies as st

from d2dvideo.model import (Catalog, ConfigError, ControlParams, QualityProfile, RadioParams,
                            snr_db_to_noise_var, zipf_popularity)


def test_zipf_single_file():
    assert zipf_popularity(1, 1.0) == pytest.approx([1.0])


def test_zipf_uniform_without_skew():
    assert zipf_popularity(5, 0.0) == pytest.approx([0.2] * 5)


def test_zipf_five_files_unit_exponent():
    expected = [1 / k / (137 / 60) for k in range(1, 6)]
    assert zipf_popularity(5, 1.0) == pytest.approx(expected, abs=1e-12)
    assert zipf_popularity(5, 1.0) == pytest.approx(
        [0.43796, 0.21898, 0.14599, 0.10949, 0.08759], abs=1e-4)


@pytest.mark.parametrize("F,gamma", [(0, 1.0), (3, -0.5), (2.5, 1.0)])
def test_zipf_rejects_bad_input(F, gamma):
    with pytest.raises(ConfigError):
        zipf_popularity(F, gamma)


@given(st.integers(1, 10_000), st.floats(0.0, 3.0))
def test_zipf_is_a_nonincreasing_distribution(F, gamma):
    f = zipf_popularity(F, gamma)
    assert f.shape == (F,)
    assert np.all(f > 0)
    assert f.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(f) <= 1e-15)


@pytest.mark.parametrize("db,var", [(0, 1.0), (20, 0.01), (10, 0.1)])
def test_snr_conversion(db, var):
    assert snr_db_to_noise_var(db) == pytest.approx(var)


def test_catalog_popularity_is_read_only():
    cat = Catalog(5, 1.0)
    with pytest.raises(ValueError):
        cat.popularity[0] = 1.0


def test_quality_profile_validation():
    QualityProfile((34, 36), (1e6, 2e6), (1, 2))
    with pytest.raises(ConfigError):
        QualityProfile((34, 33), (1e6, 2e6), (1, 2))
    with pytest.raises(ConfigError):
        QualityProfile((34, 36), (1e6, 2e6), (1, 2, 3))
    with pytest.raises(ConfigError):
        QualityProfile((34, 36), (-1e6, 2e6), (1, 2))


def test_radio_validation_and_threshold():
    radio = RadioParams(1e6, 0.01, 0.1, 15, 5e-3)
    assert np.all(radio.threshold_table(2, 3) == 1e6)
    with pytest.raises(ConfigError):
        RadioParams(1e6, 0.01, 0.1, 15, 5e-3, chunks_per_slot=0)
    with pytest.raises(ConfigError):
        RadioParams(0.0, 0.01, 0.1, 15, 5e-3)
    with pytest.raises(ConfigError):
        RadioParams(1e6, 0.01, -0.1, 15, 5e-3)


def test_control_validation():
    ctl = ControlParams()
    assert ctl.noma_power_ratios[2] == (0.2, 0.8)
    assert sum(ctl.noma_power_ratios[3]) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        ControlParams(quality_weight=-0.1)
    with pytest.raises(ConfigError):
        ControlParams(noma_power_ratios={2: (0.3, 0.6)})
    with pytest.raises(ConfigError):
        ControlParams(noma_power_ratios={2: (0.8, 0.2)})
