import pytest

from app.accuracy import load_accuracy_params
from app.energy_model import load_preset
from app.environment import ResolutionEnv
from app.models import RewardConfig, SequenceConfig


@pytest.fixture
def preset():
    return load_preset()


@pytest.fixture
def accuracy_params():
    return load_accuracy_params()


@pytest.fixture
def make_env(preset, accuracy_params):
    def _make(length_frames=90, rng_seed=0, lambda_=0.6, **seq_kwargs):
        seq = SequenceConfig(length_frames=length_frames, rng_seed=rng_seed, **seq_kwargs)
        return ResolutionEnv(seq, preset, accuracy_params, RewardConfig(lambda_=lambda_))
    return _make
