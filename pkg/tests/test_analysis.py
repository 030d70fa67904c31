import math

import numpy as np
import pytest

from seqwm.analysis import (
    ConfigError,
    SweepConfig,
    deletion_bound,
    exact_kl,
    expected_aligned_prefix,
    first_deletion_prefix,
    power_prediction,
    predict_kl,
    predict_mean_shift,
    predict_p1,
    predict_snr,
    rows_to_csv,
    run_sweep,
)
from seqwm.detector import UndefinedSignalError
from seqwm.policy import make_rng


def test_closed_forms():
    assert predict_p1(0.3, 0.0, 8) == 0.3
    assert predict_p1(0.3, 2.0, 8) == pytest.approx(0.3525, abs=1e-12)
    assert predict_snr(103, 3, 8, 0.0, 0.3) == 0.0
    assert predict_snr(103, 3, 8, 2.0, 0.3) == pytest.approx(math.sqrt(12.5) * 2 * math.sqrt(0.21), rel=1e-12)
    assert predict_snr(103, 3, 8, 2.0, 0.3) == pytest.approx(3.240, abs=5e-4)
    assert predict_kl(0.0, 8, 0.3) == 0.0
    assert predict_kl(2.0, 8, 0.3) == pytest.approx(0.0525, abs=1e-12)
    assert predict_mean_shift(103, 3, 2.0, 0.3) == pytest.approx(42.0, abs=1e-9)


def test_deletion_terms():
    assert deletion_bound(0, 3, 8) == 0
    assert deletion_bound(20, 3, 8) == 640
    # with w = 3 and d = rho*T: 4*rho*T*m
    assert deletion_bound(10, 3, 8) == 4 * 0.1 * 100 * 8
    assert expected_aligned_prefix(100, 0) == 100
    assert expected_aligned_prefix(100, 9) == pytest.approx(9.1, abs=1e-12)


def test_undefined_inputs():
    with pytest.raises(UndefinedSignalError):
        predict_snr(3, 3, 8, 2.0, 0.3)
    with pytest.raises(UndefinedSignalError):
        predict_mean_shift(2, 3, 2.0, 0.3)
    with pytest.raises(ValueError):
        predict_kl(1.0, 8, 1.0)
    with pytest.raises(ValueError):
        expected_aligned_prefix(5, 6)


@pytest.mark.parametrize("m", [1, 2, 4, 8, 16])
def test_snr_kl_ratio_m_free(m):
    ref = predict_snr(103, 3, 1, 1.3, 0.3) ** 2 / predict_kl(1.3, 1, 0.3)
    assert predict_snr(103, 3, m, 1.3, 0.3) ** 2 / predict_kl(1.3, m, 0.3) == pytest.approx(ref, rel=1e-9)


def test_aligned_prefix_monte_carlo():
    draws = first_deletion_prefix(100, 9, make_rng(31), 100_000)
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    assert abs(draws.mean() - 9.1) < 3 * se
    assert np.all(first_deletion_prefix(10, 0, make_rng(0), 3) == 10)


def test_exact_kl_basics():
    p = np.array([0.2, 0.3, 0.5])
    assert exact_kl(p, p) == 0.0
    assert exact_kl([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))


def test_power_prediction_dict():
    d = power_prediction(103, 3, 8, 2.0, 0.3, d=9).to_dict()
    assert d["mean_shift"] == pytest.approx(42.0)
    assert d["deletion_bound"] == 9 * 4 * 8


def test_sweep_config_validation():
    for bad in [{"gamma": []}, {"method": ["magic"]}, {"rho": [1.0]}, {"m": [0]},
                {"trials": 0}, {"profile": {"colour": 1}}, {"surprise": 1}]:
        with pytest.raises(ConfigError):
            SweepConfig.from_dict(bad)


SMALL = {"gamma": [0.0, 2.0], "rho": [0.0, 0.2], "m": [8], "method": ["seqwm", "round_indexed"],
         "trials": 6, "M": 20, "seed": 5, "profile": {"T": 40}}


def test_sweep_deterministic_and_job_independent():
    a = run_sweep(SMALL)
    b = run_sweep(SMALL, jobs=2)
    assert len(a) == 8
    assert rows_to_csv(a, include_runtime=False) == rows_to_csv(b, include_runtime=False)
    header = rows_to_csv(a).splitlines()[0].split(",")
    assert header[:4] == ["method", "gamma", "rho", "m"] and header[-1] == "runtime_s"


def test_gamma_zero_cell_is_null():
    cfg = {"gamma": [0.0], "rho": [0.0], "m": [8], "method": ["seqwm"], "trials": 200,
           "null_trials": 10, "M": 19, "seed": 3, "profile": {"T": 30}}
    (row,) = run_sweep(cfg)
    assert abs(row["tpr_0.05"] - 0.05) < 3 * math.sqrt(0.05 * 0.95 / 200) + 0.01
