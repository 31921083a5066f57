import numpy as np
import pytest

from app.geweke import _chi_square_p, geweke_test
from app.state import Hyperparameters, ModelKind


def test_chi_square_identical_samples():
    sample = np.array([1, 1, 2, 2, 2, 3, 3, 4] * 20)
    assert _chi_square_p(sample, sample.copy()) == pytest.approx(1.0)


def test_chi_square_single_pooled_bin():
    assert _chi_square_p(np.ones(30), np.ones(40)) == 1.0


def test_chi_square_detects_shift():
    a = np.repeat([1, 2, 3], 200)
    b = np.repeat([2, 3, 4], 200)
    assert _chi_square_p(a, b) < 1e-6


@pytest.mark.parametrize("model", list(ModelKind))
def test_geweke_report_shape(model):
    report = geweke_test(model, Hyperparameters(), n=4, iterations=100, thin=2, seed=3)
    expected = {"K", "L", "alpha", "nu", "mean_beta", "mean_theta"}
    if model == ModelKind.DYNAMIC2:
        expected.add("eta")
    assert set(report.p_values) == expected
    assert all(0.0 <= p <= 1.0 for p in report.p_values.values())
    assert len(report.forward["K"]) == len(report.successive["K"]) == 100
    if model == ModelKind.DYNAMIC1:
        assert report.successive["L"].max() <= 8


@pytest.mark.slow
@pytest.mark.parametrize("model", list(ModelKind))
def test_geweke_joint_distribution(model):
    report = geweke_test(model, Hyperparameters(), n=6, T=2, iterations=10_000, thin=40, seed=11)
    assert report.passed(0.01), report.failures(0.01)
