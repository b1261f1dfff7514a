"""Unit tests for run configuration and modulation parameter models."""
import numpy as np
import pytest
from pydantic import ValidationError

from app.models.profile import ModParams
from app.models.run import Experiment, RunConfig, RunStatus, RunSummary
from app.models.trajectory import TrajectoryRecord


def test_run_config_from_flat_yaml():
    # Given
    text = "experiment: pseudoconformal\nn: 512\nL: 20\nT: 2.0\n"

    # When
    config = RunConfig.from_yaml(text)

    # Then
    assert config.experiment == Experiment.PSEUDOCONFORMAL
    assert config.n == 512
    assert config.L == 20.0
    assert config.horizon == 2.0


def test_run_config_horizon_prefers_t_end():
    config = RunConfig(experiment=Experiment.EVOLVE, T=1.0, t_end=0.25)
    assert config.horizon == 0.25


@pytest.mark.parametrize("text", [
    "- experiment\n- ground_state\n",
    "experiment: ground_state\nnoise:\n  modes: 2\n",
    "just a string",
])
def test_run_config_rejects_non_flat_documents(text):
    with pytest.raises(ValueError):
        RunConfig.from_yaml(text)


def test_run_config_rejects_unknown_keys():
    with pytest.raises(ValidationError):
        RunConfig.from_yaml("experiment: ground_state\nresolution: 7\n")


def test_run_config_checks_input_exists(tmp_path):
    # Given
    present = tmp_path / "u.rnls"
    present.write_bytes(b"")

    # When / Then
    assert RunConfig(experiment=Experiment.MODULATION_TRACK, input=str(present)).input == str(present)
    with pytest.raises(ValidationError):
        RunConfig(experiment=Experiment.MODULATION_TRACK, input=str(tmp_path / "missing"))


def test_run_config_rejects_non_positive_mass_ratios():
    with pytest.raises(ValidationError):
        RunConfig(experiment=Experiment.THRESHOLD_SWEEP, mass_ratios=[0.9, 0.0])


def test_run_summary_passed_property():
    assert RunSummary(experiment=Experiment.GROUND_STATE, status=RunStatus.PASSED).passed
    assert not RunSummary(experiment=Experiment.GROUND_STATE, status=RunStatus.ERROR).passed


def test_mod_params_parse_in_two_dimensions():
    # When
    params = ModParams.parse("0.5,1,2,3,4,0.25,6", dim=2)

    # Then
    assert params.lam == 0.5
    assert params.alpha == [1.0, 2.0]
    assert params.beta == [3.0, 4.0]
    assert (params.gamma, params.theta) == (0.25, 6.0)
    np.testing.assert_array_equal(params.to_vector(), [0.5, 1, 2, 3, 4, 0.25, 6])


def test_mod_params_pseudo_conformal():
    # When
    params = ModParams.pseudo_conformal(1.0, 0.75, dim=1)

    # Then
    assert params.lam == pytest.approx(0.25)
    assert params.gamma == pytest.approx(0.25)
    assert params.theta == pytest.approx(4.0)
    assert params.dim == 1


@pytest.mark.parametrize("vector", [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, np.nan, 0.0, 0.0, 0.0],
])
def test_mod_params_from_vector_rejects_bad_input(vector):
    with pytest.raises(ValueError):
        ModParams.from_vector(vector, dim=1)


@pytest.mark.parametrize("gradnorm, expected", [
    ([2.0, 2.0, 2.0, 2.0], 1.0),
    ([1.0, 1.2, 0.9, 1.1, 1.0], 1.2 / 1.1),
    ([1.0, 1.0, 1.0, 6.0], 6.0),
])
def test_gradnorm_over_running_median(gradnorm, expected):
    # Given
    record = TrajectoryRecord(gradnorm=gradnorm)

    # Then
    assert record.max_gradnorm_over_running_median() == pytest.approx(expected)
