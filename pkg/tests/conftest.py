import pytest

from telegraphctl.model import PhotonCountModel, TransitionRates


@pytest.fixture(scope="session")
def default_model() -> PhotonCountModel:
    return PhotonCountModel((40.0, 28.0, 16.0))


@pytest.fixture(scope="session")
def paper_rates() -> TransitionRates:
    return TransitionRates(35.0, 50.0, 59.0)


@pytest.fixture(scope="session")
def feedback_rates() -> TransitionRates:
    return TransitionRates(35.0, 50.0, 0.0)
