import pytest
import torch
from hypothesis import settings

from byteg2p.model import ModelConfig, init_params

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

torch.set_num_threads(1)


TINY = ModelConfig(
    d_model=64,
    n_heads=2,
    d_ff=128,
    n_encoder_layers=2,
    n_decoder_layers=2,
    max_src_len=64,
    max_tgt_len=48,
    dropout=0.0,
)


@pytest.fixture(scope="session")
def tiny_config():
    return TINY


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    """Freshly initialized (untrained) small model, fixed seed."""
    return init_params(tiny_config, seed=0)
